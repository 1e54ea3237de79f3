#include "actmark/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "actmark/errors.hpp"
#include "actmark/rng.hpp"

namespace actmark::nn {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) fail(ErrorCode::Input, "model needs at least two layer dims");
    for (std::size_t d : dims) {
        if (d == 0) fail(ErrorCode::Input, "layer width must be positive");
    }
}

}  // namespace

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        n += weights[i].size() + biases[i].size();
    return n;
}

MlpModel MlpModel::zeros(std::vector<std::size_t> dims) {
    check_dims(dims);
    MlpModel m;
    m.layer_dims = std::move(dims);
    for (std::size_t i = 0; i + 1 < m.layer_dims.size(); ++i) {
        m.weights.emplace_back(m.layer_dims[i], m.layer_dims[i + 1]);
        m.biases.emplace_back(m.layer_dims[i + 1], 0.0f);
    }
    return m;
}

MlpModel MlpModel::random_init(std::vector<std::size_t> dims, std::uint64_t seed) {
    MlpModel m = zeros(std::move(dims));
    Rng rng(derive_seed(seed, "init"));
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        const double fan_in = static_cast<double>(m.layer_dims[i]);
        const double fan_out = static_cast<double>(m.layer_dims[i + 1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (float& w : m.weights[i].values)
            w = static_cast<float>(rng.uniform(-bound, bound));
    }
    return m;
}

bool same_parameters(const MlpModel& a, const MlpModel& b) {
    if (a.layer_dims != b.layer_dims) return false;
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        if (!same_values(a.weights[i], b.weights[i])) return false;
        if (std::memcmp(a.biases[i].data(), b.biases[i].data(),
                        a.biases[i].size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

ActivationSnapshot forward(const MlpModel& model, const Matrix& batch) {
    if (batch.cols != model.input_dim()) {
        fail(ErrorCode::Shape, "forward: batch has " + std::to_string(batch.cols) +
                                   " features, model expects " +
                                   std::to_string(model.input_dim()));
    }
    ActivationSnapshot snap;
    snap.input = batch;
    const Matrix* cur = &snap.input;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        Matrix z = matmul(*cur, model.weights[l]);
        const std::vector<float>& bias = model.biases[l];
        for (std::size_t r = 0; r < z.rows; ++r) {
            float* row = z.values.data() + r * z.cols;
            for (std::size_t c = 0; c < z.cols; ++c) row[c] += bias[c];
        }
        const bool is_output = (l + 1 == model.layer_count());
        if (!is_output) {
            for (float& v : z.values) v = v > 0.0f ? v : 0.0f;
        }
        snap.layers.push_back(std::move(z));
        cur = &snap.layers.back();
    }
    return snap;
}

Loss0Result loss0_and_grad(const Matrix& logits, std::span<const std::int32_t> labels) {
    if (logits.rows != labels.size()) {
        fail(ErrorCode::Shape, "loss0: logits batch " + std::to_string(logits.rows) +
                                   " vs " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t batch = logits.rows;
    const std::size_t classes = logits.cols;
    for (std::int32_t y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            fail(ErrorCode::Input, "loss0: label " + std::to_string(y) +
                                       " outside [0," + std::to_string(classes) + ")");
        }
    }

    Loss0Result out;
    out.dlogits = Matrix(batch, classes);
    double total = 0.0;
    std::vector<double> p(classes);
    for (std::size_t i = 0; i < batch; ++i) {
        const float* row = logits.values.data() + i * classes;
        double maxv = row[0];
        for (std::size_t j = 1; j < classes; ++j) maxv = std::max(maxv, double(row[j]));
        double sum = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            p[j] = std::exp(double(row[j]) - maxv);
            sum += p[j];
        }
        const auto y = static_cast<std::size_t>(labels[i]);
        total += -(double(row[y]) - maxv - std::log(sum));
        float* grow = out.dlogits.values.data() + i * classes;
        for (std::size_t j = 0; j < classes; ++j) {
            const double soft = p[j] / sum;
            grow[j] = static_cast<float>((soft - (j == y ? 1.0 : 0.0)) /
                                         static_cast<double>(batch));
        }
    }
    out.loss = total / static_cast<double>(batch);
    return out;
}

namespace {

constexpr std::size_t kEvalChunk = 512;

}  // namespace

std::vector<std::int32_t> predict_labels(const MlpModel& model, const Matrix& inputs) {
    std::vector<std::int32_t> out(inputs.rows);
    for (std::size_t start = 0; start < inputs.rows; start += kEvalChunk) {
        const std::size_t n = std::min(kEvalChunk, inputs.rows - start);
        Matrix chunk(n, inputs.cols);
        std::copy_n(inputs.values.data() + start * inputs.cols, n * inputs.cols,
                    chunk.values.data());
        const ActivationSnapshot snap = forward(model, chunk);
        const Matrix& logits = snap.logits();
        for (std::size_t i = 0; i < n; ++i) {
            const float* row = logits.values.data() + i * logits.cols;
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols; ++j) {
                if (row[j] > row[best]) best = j;
            }
            out[start + i] = static_cast<std::int32_t>(best);
        }
    }
    return out;
}

double accuracy(const MlpModel& model, const Dataset& data) {
    if (data.size() == 0) fail(ErrorCode::Input, "accuracy: empty dataset");
    const auto pred = predict_labels(model, data.inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        hits += (pred[i] == data.labels[i]);
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Matrix hidden_activations(const MlpModel& model, const Matrix& inputs,
                          std::size_t hidden_layer) {
    if (hidden_layer >= model.hidden_count()) {
        fail(ErrorCode::Input, "hidden layer " + std::to_string(hidden_layer) +
                                   " out of range");
    }
    Matrix out(inputs.rows, model.layer_dims[hidden_layer + 1]);
    for (std::size_t start = 0; start < inputs.rows; start += kEvalChunk) {
        const std::size_t n = std::min(kEvalChunk, inputs.rows - start);
        Matrix chunk(n, inputs.cols);
        std::copy_n(inputs.values.data() + start * inputs.cols, n * inputs.cols,
                    chunk.values.data());
        const ActivationSnapshot snap = forward(model, chunk);
        const Matrix& act = snap.hidden(hidden_layer);
        std::copy_n(act.values.data(), n * act.cols,
                    out.values.data() + start * out.cols);
    }
    return out;
}

Gradients compute_gradients(const MlpModel& model, const ActivationSnapshot& snap,
                            const Matrix& dlogits, std::span<const Matrix> extra) {
    const std::size_t layers = model.layer_count();
    if (snap.layers.size() != layers) {
        fail(ErrorCode::Shape, "snapshot does not match model depth");
    }
    if (!extra.empty() && extra.size() != model.hidden_count()) {
        fail(ErrorCode::Shape, "extra gradient list does not match hidden layer count");
    }
    for (std::size_t l = 0; l < extra.size(); ++l) {
        if (!extra[l].empty() && !extra[l].same_shape(snap.hidden(l))) {
            fail(ErrorCode::Shape, "extra gradient shape mismatch at hidden layer " +
                                       std::to_string(l));
        }
    }

    Gradients g;
    g.dweights.resize(layers);
    g.dbiases.resize(layers);

    Matrix delta = dlogits;  // dL/dz at the current layer
    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& below = (l == 0) ? snap.input : snap.layers[l - 1];
        g.dweights[l] = matmul_at(below, delta);
        g.dbiases[l].assign(model.layer_dims[l + 1], 0.0f);
        {
            std::vector<double> acc(delta.cols, 0.0);
            for (std::size_t r = 0; r < delta.rows; ++r) {
                const float* row = delta.values.data() + r * delta.cols;
                for (std::size_t c = 0; c < delta.cols; ++c) acc[c] += row[c];
            }
            for (std::size_t c = 0; c < delta.cols; ++c)
                g.dbiases[l][c] = static_cast<float>(acc[c]);
        }
        if (l == 0) break;

        Matrix dact = matmul_bt(delta, model.weights[l]);
        if (!extra.empty() && !extra[l - 1].empty()) {
            const Matrix& add = extra[l - 1];
            for (std::size_t i = 0; i < dact.values.size(); ++i)
                dact.values[i] += add.values[i];
        }
        // ReLU gate: the stored activation is zero exactly where the
        // pre-activation was non-positive.
        const Matrix& act = snap.layers[l - 1];
        for (std::size_t i = 0; i < dact.values.size(); ++i) {
            if (!(act.values[i] > 0.0f)) dact.values[i] = 0.0f;
        }
        delta = std::move(dact);
    }
    return g;
}

void apply_step(MlpModel& model, const Gradients& grads, float lr) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const Matrix& dw = grads.dweights[l];
        if (!all_finite(dw)) {
            fail(ErrorCode::Numeric, "non-finite weight gradient at layer " +
                                         std::to_string(l));
        }
        for (float v : grads.dbiases[l]) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::Numeric, "non-finite bias gradient at layer " +
                                             std::to_string(l));
            }
        }
        float* w = model.weights[l].values.data();
        const float* g = dw.values.data();
        for (std::size_t i = 0; i < dw.values.size(); ++i) w[i] -= lr * g[i];
        float* b = model.biases[l].data();
        const float* gb = grads.dbiases[l].data();
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) b[i] -= lr * gb[i];
    }
}

void backward_and_step(MlpModel& model, const ActivationSnapshot& snap,
                       const Matrix& dlogits, std::span<const Matrix> extra,
                       float lr) {
    apply_step(model, compute_gradients(model, snap, dlogits, extra), lr);
}

std::vector<EpochMetrics> train(MlpModel& model, const Dataset& data,
                                const TrainConfig& config,
                                std::span<const LossHook> hooks,
                                std::size_t epoch_base,
                                const EpochCallback& on_epoch) {
    if (data.size() == 0) fail(ErrorCode::Input, "train: empty dataset");
    if (config.batch_size == 0) fail(ErrorCode::Input, "train: batch_size must be >= 1");
    if (!(config.learning_rate > 0.0f)) {
        fail(ErrorCode::Input, "train: learning_rate must be > 0");
    }

    const std::size_t n = data.size();
    const std::size_t dim = data.dim();
    std::vector<EpochMetrics> metrics;
    std::vector<std::size_t> order(n);

    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch_base + e));
        shuffle_rng.shuffle(order);

        EpochMetrics em;
        em.hook_losses.assign(hooks.size(), 0.0);
        double loss_sum = 0.0;
        std::vector<double> hook_sums(hooks.size(), 0.0);
        std::size_t hits = 0;
        std::size_t batches = 0;

        std::vector<Matrix> extra;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t bsz = std::min(config.batch_size, n - start);
            Matrix xb(bsz, dim);
            std::vector<std::int32_t> yb(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(data.inputs.values.data() + src * dim, dim,
                            xb.values.data() + i * dim);
                yb[i] = data.labels[src];
            }

            ActivationSnapshot snap = forward(model, xb);
            Loss0Result l0 = loss0_and_grad(snap.logits(), yb);
            loss_sum += l0.loss;

            const Matrix& logits = snap.logits();
            for (std::size_t i = 0; i < bsz; ++i) {
                const float* row = logits.values.data() + i * logits.cols;
                std::size_t best = 0;
                for (std::size_t j = 1; j < logits.cols; ++j)
                    if (row[j] > row[best]) best = j;
                hits += (static_cast<std::int32_t>(best) == yb[i]);
            }

            extra.clear();
            for (std::size_t h = 0; h < hooks.size(); ++h) {
                HookGrad hg = hooks[h](snap, yb, config.learning_rate);
                hook_sums[h] += hg.loss;
                if (hg.layer >= 0) {
                    if (extra.empty()) extra.resize(model.hidden_count());
                    Matrix& slot = extra[static_cast<std::size_t>(hg.layer)];
                    if (slot.empty()) {
                        slot = std::move(hg.d_hidden);
                    } else {
                        for (std::size_t i = 0; i < slot.values.size(); ++i)
                            slot.values[i] += hg.d_hidden.values[i];
                    }
                }
            }
            backward_and_step(model, snap, l0.dlogits, extra, config.learning_rate);
            ++batches;
        }

        em.loss0 = loss_sum / static_cast<double>(batches);
        for (std::size_t h = 0; h < hooks.size(); ++h)
            em.hook_losses[h] = hook_sums[h] / static_cast<double>(batches);
        em.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
        if (on_epoch) on_epoch(epoch_base + e, em);
        metrics.push_back(std::move(em));
    }
    return metrics;
}

}  // namespace actmark::nn
