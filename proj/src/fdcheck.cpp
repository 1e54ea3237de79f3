#include "actmark/fdcheck.hpp"

#include <algorithm>
#include <cmath>

#include "actmark/errors.hpp"

namespace actmark::fdcheck {

namespace {

// plain double-precision forward; returns every pre-activation and the
// final logits
struct MirrorForward {
    std::vector<std::vector<double>> pre;  // one per layer
    std::vector<std::vector<double>> post; // ReLU applied on hidden layers
};

MirrorForward mirror_forward(const nn::MlpModel& model, const Matrix& batch) {
    MirrorForward out;
    const std::size_t layers = model.layer_count();
    std::vector<double> cur(batch.values.begin(), batch.values.end());
    std::size_t cur_cols = batch.cols;
    const std::size_t rows = batch.rows;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t next_cols = model.layer_dims[l + 1];
        std::vector<double> z(rows * next_cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < next_cols; ++j) {
                double acc = model.biases[l][j];
                for (std::size_t k = 0; k < cur_cols; ++k)
                    acc += cur[i * cur_cols + k] * double(model.weights[l].at(k, j));
                z[i * next_cols + j] = acc;
            }
        }
        out.pre.push_back(z);
        if (l + 1 < layers) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        }
        out.post.push_back(z);
        cur = out.post.back();
        cur_cols = next_cols;
    }
    return out;
}

double softmax_ce(const std::vector<double>& logits, std::size_t rows,
                  std::size_t cols, std::span<const std::int32_t> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = logits.data() + i * cols;
        double maxv = row[0];
        for (std::size_t j = 1; j < cols; ++j) maxv = std::max(maxv, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(row[j] - maxv);
        const auto y = static_cast<std::size_t>(labels[i]);
        total += -(row[y] - maxv - std::log(sum));
    }
    return total / double(rows);
}

}  // namespace

double mirror_loss0_on_logits(const Matrix& logits,
                              std::span<const std::int32_t> labels) {
    std::vector<double> z(logits.values.begin(), logits.values.end());
    return softmax_ce(z, logits.rows, logits.cols, labels);
}

double mirror_loss0(const nn::MlpModel& model, const Matrix& batch,
                    std::span<const std::int32_t> labels) {
    const MirrorForward f = mirror_forward(model, batch);
    return softmax_ce(f.post.back(), batch.rows, model.output_dim(), labels);
}

double mirror_loss1(const Matrix& features, std::span<const std::int32_t> labels,
                    const Matrix& mu, double lambda1) {
    return mirror_loss1_split(features, features, labels, mu, lambda1);
}

double mirror_loss1_split(const Matrix& attract_features,
                          const Matrix& frozen_features,
                          std::span<const std::int32_t> labels, const Matrix& mu,
                          double lambda1) {
    const double other_norm = mu.rows > 1 ? 1.0 / double(mu.rows - 1) : 1.0;
    double total = 0.0;
    for (std::size_t b = 0; b < attract_features.rows; ++b) {
        const auto y = static_cast<std::size_t>(labels[b]);
        for (std::size_t i = 0; i < mu.rows; ++i) {
            const Matrix& src = (i == y) ? attract_features : frozen_features;
            double d2 = 0.0;
            for (std::size_t j = 0; j < mu.cols; ++j) {
                const double diff = double(mu.at(i, j)) - double(src.at(b, j));
                d2 += diff * diff;
            }
            total += (i == y) ? d2 : -other_norm * d2;
        }
    }
    return lambda1 * total / double(attract_features.rows);
}

double mirror_loss2(const Matrix& centers_selected, const Matrix& projection,
                    const whitebox::Bits& bits, double lambda2) {
    double total = 0.0;
    for (std::size_t k = 0; k < centers_selected.rows; ++k) {
        for (std::size_t j = 0; j < projection.cols; ++j) {
            double z = 0.0;
            for (std::size_t m = 0; m < centers_selected.cols; ++m)
                z += double(centers_selected.at(k, m)) * double(projection.at(m, j));
            const double g =
                std::clamp(1.0 / (1.0 + std::exp(-z)), 1e-7, 1.0 - 1e-7);
            const double b = bits.at(k, j);
            total += b * std::log(g) + (1.0 - b) * std::log(1.0 - g);
        }
    }
    return -lambda2 * total;
}

double mirror_composite(const nn::MlpModel& model, const Matrix& batch,
                        std::span<const std::int32_t> labels,
                        const whitebox::WhiteboxSecret& secret, const Matrix& mu,
                        const Matrix& frozen_features) {
    const MirrorForward f = mirror_forward(model, batch);
    const double l0 = softmax_ce(f.post.back(), batch.rows, model.output_dim(), labels);

    // loss1 on the double-precision activations; cross-class term reads the
    // frozen features
    const std::vector<double>& hidden = f.post[secret.layer_index];
    const std::size_t width = model.layer_dims[secret.layer_index + 1];
    const double other_norm = mu.rows > 1 ? 1.0 / double(mu.rows - 1) : 1.0;
    double l1 = 0.0;
    for (std::size_t b = 0; b < batch.rows; ++b) {
        const auto y = static_cast<std::size_t>(labels[b]);
        for (std::size_t i = 0; i < mu.rows; ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                const double fj = (i == y) ? hidden[b * width + j]
                                           : double(frozen_features.at(b, j));
                const double diff = double(mu.at(i, j)) - fj;
                d2 += diff * diff;
            }
            l1 += (i == y) ? d2 : -other_norm * d2;
        }
    }
    l1 *= double(secret.lambda1) / double(batch.rows);

    const Matrix mu_sel = whitebox::select_rows(mu, secret.carrier_classes);
    const double l2 =
        mirror_loss2(mu_sel, secret.projection, secret.bits, secret.lambda2);
    return l0 + l1 + l2;
}

double min_abs_preactivation(const nn::MlpModel& model, const Matrix& batch) {
    const MirrorForward f = mirror_forward(model, batch);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l + 1 < model.layer_count(); ++l) {
        for (double v : f.pre[l]) best = std::min(best, std::fabs(v));
    }
    return best;
}

double max_rel_err_fd(std::vector<std::span<float>> params,
                      std::vector<std::span<const float>> analytic,
                      const std::function<double()>& eval, double step) {
    if (params.size() != analytic.size()) {
        fail(ErrorCode::Input, "fd check: parameter/gradient view counts differ");
    }

    std::vector<std::vector<double>> fd(params.size());
    double gmax = 1e-12;
    for (std::size_t s = 0; s < params.size(); ++s) {
        if (params[s].size() != analytic[s].size()) {
            fail(ErrorCode::Input, "fd check: view " + std::to_string(s) +
                                       " length mismatch");
        }
        fd[s].resize(params[s].size());
        for (std::size_t i = 0; i < params[s].size(); ++i) {
            float& x = params[s][i];
            const float saved = x;
            const auto xp = static_cast<float>(double(saved) + step);
            const auto xm = static_cast<float>(double(saved) - step);
            x = xp;
            const double up = eval();
            x = xm;
            const double down = eval();
            x = saved;
            // effective step: the f32 values actually evaluated
            const double eff = double(xp) - double(xm);
            fd[s][i] = (up - down) / eff;
            gmax = std::max({gmax, std::fabs(fd[s][i]),
                             std::fabs(double(analytic[s][i]))});
        }
    }

    double worst = 0.0;
    for (std::size_t s = 0; s < params.size(); ++s) {
        for (std::size_t i = 0; i < params[s].size(); ++i) {
            const double a = analytic[s][i];
            const double b = fd[s][i];
            const double denom = std::max({std::fabs(a), std::fabs(b), 0.01 * gmax});
            worst = std::max(worst, std::fabs(a - b) / denom);
        }
    }
    return worst;
}

std::vector<std::span<float>> model_param_views(nn::MlpModel& model) {
    std::vector<std::span<float>> views;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        views.emplace_back(model.weights[l].values);
        views.emplace_back(model.biases[l]);
    }
    return views;
}

std::vector<std::span<const float>> gradient_views(const nn::Gradients& grads) {
    std::vector<std::span<const float>> views;
    for (std::size_t l = 0; l < grads.dweights.size(); ++l) {
        views.emplace_back(grads.dweights[l].values);
        views.emplace_back(grads.dbiases[l]);
    }
    return views;
}

}  // namespace actmark::fdcheck
