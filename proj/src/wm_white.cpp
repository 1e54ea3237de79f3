#include "actmark/wm_white.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "actmark/rng.hpp"

namespace actmark::whitebox {

std::size_t mismatch_count(const Bits& a, const Bits& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        fail(ErrorCode::Shape, "bit strings have different shapes");
    }
    std::size_t mism = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        mism += (a.values[i] != b.values[i]);
    return mism;
}

WhiteboxSecret make_secret(std::uint64_t seed, int class_count, std::size_t carriers,
                           std::size_t layer_width, std::size_t wm_length,
                           float lambda1, float lambda2, std::size_t layer_index) {
    if (class_count < 1) fail(ErrorCode::Input, "class count must be >= 1");
    const auto classes = static_cast<std::size_t>(class_count);
    if (carriers < 1 || carriers > classes) {
        fail(ErrorCode::Input, "carrier count " + std::to_string(carriers) +
                                   " outside [1," + std::to_string(classes) + "]");
    }
    if (wm_length < 1) fail(ErrorCode::Input, "watermark length must be >= 1");
    if (layer_width < 1) fail(ErrorCode::Input, "layer width must be >= 1");
    if (lambda1 < 0.0f || lambda2 < 0.0f) {
        fail(ErrorCode::Input, "lambda strengths must be >= 0");
    }

    WhiteboxSecret s;
    s.layer_index = layer_index;
    s.lambda1 = lambda1;
    s.lambda2 = lambda2;
    s.wm_length = wm_length;
    s.seed = seed;

    // partial Fisher-Yates: first `carriers` entries are a sample without
    // replacement
    std::vector<std::int32_t> classes_perm(classes);
    std::iota(classes_perm.begin(), classes_perm.end(), 0);
    Rng carrier_rng(derive_seed(seed, "carriers"));
    for (std::size_t i = 0; i < carriers; ++i) {
        const std::size_t j = i + carrier_rng.below(classes - i);
        std::swap(classes_perm[i], classes_perm[j]);
    }
    s.carrier_classes.assign(classes_perm.begin(),
                             classes_perm.begin() + static_cast<std::ptrdiff_t>(carriers));

    Rng bit_rng(derive_seed(seed, "bits"));
    s.bits = Bits(carriers, wm_length);
    for (auto& b : s.bits.values) b = bit_rng.uniform() < 0.5 ? 0 : 1;

    Rng proj_rng(derive_seed(seed, "projection"));
    s.projection = Matrix(layer_width, wm_length);
    for (float& v : s.projection.values)
        v = static_cast<float>(proj_rng.normal());
    return s;
}

Loss1Result loss1_and_grads(const Matrix& features, std::span<const std::int32_t> labels,
                            const GaussianCenters& centers, float lambda1) {
    const std::size_t batch = features.rows;
    const std::size_t width = features.cols;
    const std::size_t classes = centers.mu.rows;
    if (centers.mu.cols != width) {
        fail(ErrorCode::Shape, "centers width " + std::to_string(centers.mu.cols) +
                                   " vs feature width " + std::to_string(width));
    }
    if (labels.size() != batch) {
        fail(ErrorCode::Shape, "label count does not match feature batch");
    }
    for (std::int32_t y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            fail(ErrorCode::Input, "label " + std::to_string(y) + " has no center");
        }
    }

    Loss1Result out;
    out.d_features = Matrix(batch, width);
    out.d_centers = Matrix(classes, width);

    // Per-sample term: squared distance to the own-class center minus the
    // mean over other classes of the squared distance to their centers.
    // Two reductions pin the training dynamics:
    //  - the cross-class sum is averaged, keeping the pull on a center
    //    from its own class and the push from the other classes at equal
    //    total weight for any class count;
    //  - the cross-class term trains the centers only; it is not
    //    backpropagated into the features. A repulsive field acting on the
    //    activations grows with their own scale and diverges under SGD at
    //    any learning rate, while the attraction alone leaves the
    //    activation side a contraction toward its class center.
    const double scale = double(lambda1) / double(batch);
    const double other_norm = classes > 1 ? 1.0 / double(classes - 1) : 1.0;
    std::vector<double> dmu(classes * width, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const float* f = features.values.data() + b * width;
        const auto y = static_cast<std::size_t>(labels[b]);
        float* df = out.d_features.values.data() + b * width;
        for (std::size_t i = 0; i < classes; ++i) {
            const float* mu = centers.mu.values.data() + i * width;
            const double w = (i == y) ? 1.0 : -other_norm;
            double dist2 = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                const double diff = double(mu[j]) - double(f[j]);
                dist2 += diff * diff;
                const double g = 2.0 * scale * w * diff;
                if (i == y) df[j] += static_cast<float>(-g);
                dmu[i * width + j] += g;
            }
            total += w * dist2;
        }
    }
    out.loss = scale * total;
    for (std::size_t i = 0; i < dmu.size(); ++i)
        out.d_centers.values[i] = static_cast<float>(dmu[i]);
    return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::int32_t> rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<std::size_t>(rows[i]);
        if (rows[i] < 0 || r >= m.rows) {
            fail(ErrorCode::Input, "row index " + std::to_string(rows[i]) +
                                       " outside matrix");
        }
        std::copy_n(m.values.data() + r * m.cols, m.cols,
                    out.values.data() + i * m.cols);
    }
    return out;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kLogClamp = 1e-7;

Matrix project_scores(const Matrix& centers_selected, const Matrix& projection) {
    if (centers_selected.cols != projection.rows) {
        fail(ErrorCode::Shape, "selected centers width " +
                                   std::to_string(centers_selected.cols) +
                                   " vs projection rows " +
                                   std::to_string(projection.rows));
    }
    Matrix scores(centers_selected.rows, projection.cols);
    for (std::size_t k = 0; k < centers_selected.rows; ++k) {
        const float* mu = centers_selected.values.data() + k * centers_selected.cols;
        for (std::size_t j = 0; j < projection.cols; ++j) {
            double z = 0.0;
            for (std::size_t m = 0; m < centers_selected.cols; ++m)
                z += double(mu[m]) * double(projection.at(m, j));
            scores.at(k, j) = static_cast<float>(sigmoid(z));
        }
    }
    return scores;
}

}  // namespace

Projection project_bits(const Matrix& centers_selected, const Matrix& projection,
                        float threshold) {
    Projection out;
    out.scores = project_scores(centers_selected, projection);
    out.bits = Bits(out.scores.rows, out.scores.cols);
    for (std::size_t i = 0; i < out.scores.values.size(); ++i)
        out.bits.values[i] = out.scores.values[i] >= threshold ? 1 : 0;
    return out;
}

Loss2Result loss2_and_grad(const Matrix& centers_selected, const Matrix& projection,
                           const Bits& bits, float lambda2) {
    if (bits.rows != centers_selected.rows || bits.cols != projection.cols) {
        fail(ErrorCode::Shape, "bit string shape does not match projection output");
    }
    const Matrix scores = project_scores(centers_selected, projection);

    Loss2Result out;
    out.d_centers_selected = Matrix(centers_selected.rows, centers_selected.cols);

    double total = 0.0;
    Matrix dz(scores.rows, scores.cols);
    for (std::size_t k = 0; k < scores.rows; ++k) {
        for (std::size_t j = 0; j < scores.cols; ++j) {
            const double g = scores.at(k, j);
            const double gc = std::clamp(g, kLogClamp, 1.0 - kLogClamp);
            const double b = bits.at(k, j);
            total += b * std::log(gc) + (1.0 - b) * std::log(1.0 - gc);
            // gradient through the unclamped score
            dz.at(k, j) = static_cast<float>(-double(lambda2) * (b - g));
        }
    }
    out.loss = -double(lambda2) * total;
    // d mu_sel = dz . A^T
    out.d_centers_selected = matmul_bt(dz, projection);
    return out;
}

Matrix class_activation_means(const nn::MlpModel& model, const Dataset& data,
                              std::size_t hidden_layer, int class_count) {
    const std::size_t width = model.layer_dims[hidden_layer + 1];
    const auto classes = static_cast<std::size_t>(class_count);
    std::vector<double> sums(classes * width, 0.0);
    std::vector<std::size_t> counts(classes, 0);

    constexpr std::size_t kChunk = 512;
    const std::size_t dim = data.dim();
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, data.size() - start);
        Matrix chunk(n, dim);
        std::copy_n(data.inputs.values.data() + start * dim, n * dim,
                    chunk.values.data());
        const nn::ActivationSnapshot snap = nn::forward(model, chunk);
        const Matrix& act = snap.hidden(hidden_layer);
        for (std::size_t i = 0; i < n; ++i) {
            const auto y = static_cast<std::size_t>(data.labels[start + i]);
            counts[y]++;
            const float* row = act.values.data() + i * width;
            double* dst = sums.data() + y * width;
            for (std::size_t j = 0; j < width; ++j) dst[j] += row[j];
        }
    }

    Matrix means(classes, width);
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) continue;  // class absent: zero row
        for (std::size_t j = 0; j < width; ++j) {
            means.at(c, j) =
                static_cast<float>(sums[c * width + j] / double(counts[c]));
        }
    }
    return means;
}

nn::LossHook make_embed_hook(const WhiteboxSecret& secret, GaussianCenters& centers) {
    return [&secret, &centers](const nn::ActivationSnapshot& snap,
                               std::span<const std::int32_t> labels,
                               float lr) -> nn::HookGrad {
        nn::HookGrad out;
        const bool use1 = secret.lambda1 > 0.0f;
        const bool use2 = secret.lambda2 > 0.0f;
        if (!use1 && !use2) return out;

        Matrix dmu(centers.mu.rows, centers.mu.cols);
        if (use1) {
            Loss1Result l1 = loss1_and_grads(snap.hidden(secret.layer_index), labels,
                                             centers, secret.lambda1);
            out.loss += l1.loss;
            out.layer = static_cast<int>(secret.layer_index);
            out.d_hidden = std::move(l1.d_features);
            dmu = std::move(l1.d_centers);
        }
        if (use2) {
            const Matrix mu_sel = select_rows(centers.mu, secret.carrier_classes);
            Loss2Result l2 =
                loss2_and_grad(mu_sel, secret.projection, secret.bits, secret.lambda2);
            out.loss += l2.loss;
            for (std::size_t k = 0; k < secret.carrier_classes.size(); ++k) {
                const auto row = static_cast<std::size_t>(secret.carrier_classes[k]);
                for (std::size_t j = 0; j < dmu.cols; ++j)
                    dmu.at(row, j) += l2.d_centers_selected.at(k, j);
            }
        }
        // centers take their SGD step here; the weight step follows with
        // gradients computed against the pre-step centers
        float* mu = centers.mu.values.data();
        for (std::size_t i = 0; i < centers.mu.values.size(); ++i)
            mu[i] -= lr * dmu.values[i];
        return out;
    };
}

EmbedFailedError::EmbedFailedError(EmbedResult result)
    : Error(ErrorCode::EmbedFailed,
            "embed-failed error: self-extraction BER " +
                std::to_string(result.self_extraction.ber) + " (" +
                std::to_string(result.self_extraction.mismatches) + " mismatched bits)"),
      result_(std::move(result)) {}

EmbedResult embed(const nn::MlpModel& start, const Dataset& train_data,
                  const WhiteboxSecret& secret, const nn::TrainConfig& config) {
    if (secret.layer_index >= start.hidden_count()) {
        fail(ErrorCode::Input, "watermark layer " + std::to_string(secret.layer_index) +
                                   " is not a hidden layer of the model");
    }
    if (secret.layer_width() != start.layer_dims[secret.layer_index + 1]) {
        fail(ErrorCode::Shape, "projection rows do not match the watermarked layer width");
    }
    for (std::int32_t c : secret.carrier_classes) {
        if (c < 0 || c >= train_data.class_count) {
            fail(ErrorCode::Input, "carrier class " + std::to_string(c) +
                                       " outside dataset classes");
        }
    }

    EmbedResult result;
    result.model = start;

    nn::TrainConfig stage = config;
    if (config.epochs > 0) {
        stage.epochs = 1;
        auto warm = nn::train(result.model, train_data, stage);
        result.epochs.insert(result.epochs.end(), warm.begin(), warm.end());
    }
    result.centers.mu = class_activation_means(result.model, train_data,
                                               secret.layer_index,
                                               train_data.class_count);
    if (config.epochs > 1) {
        stage.epochs = config.epochs - 1;
        const nn::LossHook hook = make_embed_hook(secret, result.centers);
        auto joint = nn::train(result.model, train_data, stage, {&hook, 1}, 1);
        result.epochs.insert(result.epochs.end(), joint.begin(), joint.end());
    }

    result.self_extraction = extract(result.model, train_data, secret);
    const bool wm_requested = secret.lambda1 > 0.0f || secret.lambda2 > 0.0f;
    if (wm_requested && result.self_extraction.mismatches != 0) {
        throw EmbedFailedError(std::move(result));
    }
    return result;
}

ExtractionResult extract(const nn::MlpModel& model, const Dataset& train_subset,
                         const WhiteboxSecret& secret, const ExtractOptions& opts) {
    if (secret.layer_index >= model.hidden_count()) {
        fail(ErrorCode::Input, "watermark layer " + std::to_string(secret.layer_index) +
                                   " is not a hidden layer of the model");
    }
    const std::size_t width = model.layer_dims[secret.layer_index + 1];
    if (secret.layer_width() != width) {
        fail(ErrorCode::Shape, "projection rows do not match the watermarked layer width");
    }

    Matrix mu_hat(secret.carrier_count(), width);
    const std::size_t dim = train_subset.dim();
    for (std::size_t k = 0; k < secret.carrier_count(); ++k) {
        const std::int32_t carrier = secret.carrier_classes[k];
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < train_subset.size(); ++i) {
            if (train_subset.labels[i] == carrier) idx.push_back(i);
        }
        if (idx.empty()) {
            fail(ErrorCode::Input, "no key samples for carrier class " +
                                       std::to_string(carrier));
        }
        const auto wanted = static_cast<std::size_t>(
            std::ceil(opts.key_fraction * double(idx.size())));
        const std::size_t take =
            std::min(idx.size(), std::max(opts.min_per_class, wanted));

        Matrix keys(take, dim);
        for (std::size_t i = 0; i < take; ++i) {
            std::copy_n(train_subset.inputs.values.data() + idx[i] * dim, dim,
                        keys.values.data() + i * dim);
        }
        const Matrix act = nn::hidden_activations(model, keys, secret.layer_index);
        for (std::size_t j = 0; j < width; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < take; ++i) sum += act.at(i, j);
            mu_hat.at(k, j) = static_cast<float>(sum / double(take));
        }
    }

    ExtractionResult out;
    out.bits_extracted = project_bits(mu_hat, secret.projection).bits;
    out.mismatches = mismatch_count(out.bits_extracted, secret.bits);
    out.ber = double(out.mismatches) / double(secret.bits.size());
    return out;
}

}  // namespace actmark::whitebox
