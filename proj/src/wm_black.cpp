#include "actmark/wm_black.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_set>

#include "actmark/errors.hpp"

namespace actmark::blackbox {

namespace {

double log_sum_exp(const std::vector<double>& logs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logs) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : logs) s += std::exp(v - m);
    return m + std::log(s);
}

double log_binomial(std::size_t n, std::size_t k) {
    return std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
           std::lgamma(double(n - k) + 1.0);
}

}  // namespace

double false_positive_prob(std::size_t key_count, int class_count,
                           std::size_t mismatch_threshold) {
    if (class_count < 2) fail(ErrorCode::Input, "need at least two classes");
    if (mismatch_threshold < 1 || mismatch_threshold > key_count + 1) {
        fail(ErrorCode::Input, "mismatch threshold outside [1, K+1]");
    }
    if (mismatch_threshold == key_count + 1) return 1.0;

    const double log_match = -std::log(double(class_count));
    const double log_mis = std::log1p(-1.0 / double(class_count));
    std::vector<double> logs;
    logs.reserve(mismatch_threshold);
    for (std::size_t k = 0; k < mismatch_threshold; ++k) {
        logs.push_back(log_binomial(key_count, k) + double(k) * log_mis +
                       double(key_count - k) * log_match);
    }
    return std::exp(log_sum_exp(logs));
}

std::size_t detection_threshold(std::size_t key_count, int class_count,
                                double fp_bound) {
    if (!(fp_bound > 0.0 && fp_bound < 1.0)) {
        fail(ErrorCode::Input, "false-positive bound must lie in (0,1)");
    }
    std::size_t best = 0;
    for (std::size_t nk = 1; nk <= key_count; ++nk) {
        if (false_positive_prob(key_count, class_count, nk) < fp_bound) best = nk;
    }
    if (best == 0) {
        fail(ErrorCode::KeyTooShort,
             "no mismatch threshold satisfies the bound " + std::to_string(fp_bound) +
                 " for K=" + std::to_string(key_count) +
                 ", C=" + std::to_string(class_count) + "; use a longer key");
    }
    return best;
}

DetectionPolicy make_policy(std::size_t key_count, int class_count, double fp_bound) {
    DetectionPolicy p;
    p.key_count = key_count;
    p.class_count = class_count;
    p.fp_bound = fp_bound;
    p.mismatch_threshold = detection_threshold(key_count, class_count, fp_bound);
    return p;
}

namespace {

std::string row_bytes(const float* row, std::size_t dim) {
    return {reinterpret_cast<const char*>(row), dim * sizeof(float)};
}

}  // namespace

Matrix generate_candidates(Rng& rng, std::size_t count, std::size_t dim) {
    if (count < 1 || dim < 1) fail(ErrorCode::Input, "candidate shape must be positive");
    Matrix out(count, dim);
    std::unordered_set<std::string> seen;
    std::vector<float> sample(dim);
    std::size_t produced = 0;
    while (produced < count) {
        for (std::size_t j = 0; j < dim; ++j)
            sample[j] = static_cast<float>(rng.uniform());
        auto [it, fresh] = seen.insert(row_bytes(sample.data(), dim));
        if (!fresh) continue;
        std::copy_n(sample.data(), dim, out.values.data() + produced * dim);
        ++produced;
    }
    return out;
}

Matrix generate_candidates(std::uint64_t seed, std::size_t count, std::size_t dim) {
    Rng rng(derive_seed(seed, "candidates"));
    return generate_candidates(rng, count, dim);
}

double default_epsilon(const Matrix& train_latents, std::uint64_t seed) {
    const std::size_t n = train_latents.rows;
    if (n < 2) fail(ErrorCode::Input, "need at least two latents to scale epsilon");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t take = std::min<std::size_t>(n, 1000);
    Rng rng(derive_seed(seed, "epsilon-subsample"));
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.below(n - i);
        std::swap(idx[i], idx[j]);
    }

    const std::size_t width = train_latents.cols;
    std::vector<double> dists;
    dists.reserve(take * (take - 1) / 2);
    for (std::size_t a = 0; a < take; ++a) {
        const float* ra = train_latents.values.data() + idx[a] * width;
        for (std::size_t b = a + 1; b < take; ++b) {
            const float* rb = train_latents.values.data() + idx[b] * width;
            double d2 = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                const double diff = double(ra[j]) - double(rb[j]);
                d2 += diff * diff;
            }
            dists.push_back(std::sqrt(d2));
        }
    }
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid),
                     dists.end());
    return dists[mid] / 4.0;
}

namespace {

std::size_t neighbors_within(const Matrix& latents, const float* point,
                             std::size_t width, double eps, std::uint64_t stop_at) {
    const double eps2 = eps * eps;
    std::size_t count = 0;
    for (std::size_t i = 0; i < latents.rows; ++i) {
        const float* row = latents.values.data() + i * width;
        double d2 = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            const double diff = double(row[j]) - double(point[j]);
            d2 += diff * diff;
        }
        if (d2 <= eps2) {
            if (++count > stop_at) break;  // already over the limit
        }
    }
    return count;
}

}  // namespace

Matrix rarity_filter(const nn::MlpModel& model, const Matrix& candidates,
                     const Matrix& train_latents, const RarityConfig& cfg,
                     Rng& rng) {
    if (!(cfg.epsilon > 0.0)) fail(ErrorCode::Input, "rarity epsilon must be > 0");
    const std::size_t wanted = candidates.rows;
    const std::size_t dim = candidates.cols;
    const std::size_t latent =
        cfg.latent_layer < 0 ? model.hidden_count() - 1
                             : static_cast<std::size_t>(cfg.latent_layer);
    if (latent >= model.hidden_count()) {
        fail(ErrorCode::Input, "latent layer out of range");
    }
    if (train_latents.cols != model.layer_dims[latent + 1]) {
        fail(ErrorCode::Shape, "train latents do not match the latent layer width");
    }

    const std::size_t draw_cap = 100 * wanted;
    std::size_t drawn = 0;

    Matrix accepted(wanted, dim);
    std::size_t n_accepted = 0;

    Matrix pending = candidates;  // batch under evaluation
    while (n_accepted < wanted) {
        const Matrix latents = nn::hidden_activations(model, pending, latent);
        drawn += pending.rows;
        for (std::size_t i = 0; i < pending.rows && n_accepted < wanted; ++i) {
            bool ok = true;
            if (cfg.density_tau != kNoDensityLimit) {
                const std::size_t count =
                    neighbors_within(train_latents, latents.values.data() + i * latents.cols,
                                     latents.cols, cfg.epsilon, cfg.density_tau);
                ok = count <= cfg.density_tau;
            }
            if (ok) {
                std::copy_n(pending.values.data() + i * dim, dim,
                            accepted.values.data() + n_accepted * dim);
                ++n_accepted;
            }
        }
        if (n_accepted >= wanted) break;
        if (drawn >= draw_cap) {
            const double rate = double(n_accepted) / double(drawn);
            fail(ErrorCode::RarityUnsatisfiable,
                 "rare-region draw cap reached: accepted " + std::to_string(n_accepted) +
                     "/" + std::to_string(wanted) + " (acceptance rate " +
                     std::to_string(rate) + "); relax epsilon or density_tau");
        }
        const std::size_t redraw =
            std::min<std::size_t>(std::max<std::size_t>(wanted - n_accepted, 1),
                                  draw_cap - drawn);
        pending = generate_candidates(rng, redraw, dim);
    }
    return accepted;
}

KeyEmbedResult embed_output_layer(const nn::MlpModel& marked,
                                  const nn::MlpModel& unmarked,
                                  const Dataset& train_data,
                                  const KeyEmbedConfig& cfg,
                                  const nn::TrainConfig& config) {
    if (cfg.key_count < 1) fail(ErrorCode::Input, "key count must be >= 1");
    if (cfg.key_multiplier < 1) fail(ErrorCode::Input, "key multiplier must be >= 1");
    if (marked.input_dim() != unmarked.input_dim() ||
        marked.output_dim() != unmarked.output_dim()) {
        fail(ErrorCode::Shape, "marked and unmarked models disagree on interface dims");
    }
    if (train_data.dim() != marked.input_dim()) {
        fail(ErrorCode::Shape, "dataset dimension does not match the model");
    }

    const std::size_t k_prime = cfg.key_multiplier * cfg.key_count;
    const std::size_t dim = marked.input_dim();
    const int classes = train_data.class_count;

    const std::size_t latent =
        cfg.rarity.latent_layer < 0 ? marked.hidden_count() - 1
                                    : static_cast<std::size_t>(cfg.rarity.latent_layer);
    const Matrix train_latents =
        nn::hidden_activations(marked, train_data.inputs, latent);

    RarityConfig rarity = cfg.rarity;
    rarity.latent_layer = static_cast<int>(latent);
    if (!(rarity.epsilon > 0.0)) {
        rarity.epsilon = default_epsilon(train_latents, derive_seed(cfg.seed, "epsilon"));
    }

    Rng draw_rng(derive_seed(cfg.seed, "candidates"));
    Matrix candidates = generate_candidates(draw_rng, k_prime, dim);
    candidates = rarity_filter(marked, candidates, train_latents, rarity, draw_rng);

    std::vector<std::int32_t> cand_labels(k_prime);
    Rng label_rng(derive_seed(cfg.seed, "labels"));
    for (auto& y : cand_labels)
        y = static_cast<std::int32_t>(label_rng.below(std::uint64_t(classes)));

    KeyEmbedResult result;
    result.model = marked;

    nn::TrainConfig stage = config;
    stage.learning_rate = config.learning_rate / config.lr_decay_factor;
    stage.epochs = 1;

    const std::size_t mix_train =
        std::min(train_data.size(), cfg.train_mix_ratio * k_prime);

    Dataset key_eval;
    key_eval.inputs = candidates;
    key_eval.labels = cand_labels;
    key_eval.class_count = classes;

    bool converged = false;
    for (std::size_t epoch = 0; epoch < cfg.epoch_cap; ++epoch) {
        Dataset mix;
        mix.class_count = classes;
        mix.inputs = Matrix(k_prime + mix_train, dim);
        mix.labels.resize(k_prime + mix_train);
        std::copy_n(candidates.values.data(), k_prime * dim, mix.inputs.values.data());
        std::copy_n(cand_labels.data(), k_prime, mix.labels.data());

        // uniform training subset; the whole set once the ratio exceeds it
        std::vector<std::size_t> pick(train_data.size());
        std::iota(pick.begin(), pick.end(), 0);
        if (mix_train < train_data.size()) {
            Rng mix_rng(derive_seed(cfg.seed, "mix", epoch));
            for (std::size_t i = 0; i < mix_train; ++i) {
                const std::size_t j = i + mix_rng.below(pick.size() - i);
                std::swap(pick[i], pick[j]);
            }
        }
        for (std::size_t i = 0; i < mix_train; ++i) {
            std::copy_n(train_data.inputs.values.data() + pick[i] * dim, dim,
                        mix.inputs.values.data() + (k_prime + i) * dim);
            mix.labels[k_prime + i] = train_data.labels[pick[i]];
        }

        stage.seed = derive_seed(cfg.seed, "finetune", epoch);
        nn::train(result.model, mix, stage);
        result.epochs_used = epoch + 1;

        const auto preds = nn::predict_labels(result.model, candidates);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < k_prime; ++i) hits += (preds[i] == cand_labels[i]);
        result.key_accuracy = double(hits) / double(k_prime);
        if (result.key_accuracy > cfg.key_accuracy_target) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        fail(ErrorCode::Convergence,
             "key accuracy " + std::to_string(result.key_accuracy) +
                 " did not exceed " + std::to_string(cfg.key_accuracy_target) +
                 " within " + std::to_string(cfg.epoch_cap) + " epochs");
    }

    const auto preds_marked = nn::predict_labels(result.model, candidates);
    const auto preds_unmarked = nn::predict_labels(unmarked, candidates);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < k_prime; ++i) {
        if (preds_marked[i] == cand_labels[i] && preds_unmarked[i] != cand_labels[i]) {
            eligible.push_back(i);
        }
    }
    result.eligible_count = eligible.size();
    if (eligible.size() < cfg.key_count) {
        fail(ErrorCode::InsufficientKeys,
             "only " + std::to_string(eligible.size()) + " of " +
                 std::to_string(cfg.key_count) +
                 " keys survive selection; raise the key multiplier");
    }

    Rng select_rng(derive_seed(cfg.seed, "select"));
    for (std::size_t i = 0; i < cfg.key_count; ++i) {
        const std::size_t j = i + select_rng.below(eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(cfg.key_count);
    std::sort(eligible.begin(), eligible.end());

    result.keyset.inputs = Matrix(cfg.key_count, dim);
    result.keyset.labels.resize(cfg.key_count);
    for (std::size_t i = 0; i < cfg.key_count; ++i) {
        std::copy_n(candidates.values.data() + eligible[i] * dim, dim,
                    result.keyset.inputs.values.data() + i * dim);
        result.keyset.labels[i] = cand_labels[eligible[i]];
    }
    result.keyset.initial_count = k_prime;
    result.keyset.seed = cfg.seed;
    return result;
}

DetectionResult detect(const PredictionOracle& oracle, const BlackboxKeySet& keyset,
                       const DetectionPolicy& policy) {
    if (policy.key_count != keyset.size()) {
        fail(ErrorCode::Input, "policy derived for K=" + std::to_string(policy.key_count) +
                                   " but keyset holds " + std::to_string(keyset.size()));
    }
    const auto preds = oracle.predict(keyset.inputs);
    if (preds.size() != keyset.size()) {
        fail(ErrorCode::Protocol, "oracle returned " + std::to_string(preds.size()) +
                                      " labels for " + std::to_string(keyset.size()) +
                                      " queries");
    }
    DetectionResult out;
    for (std::size_t i = 0; i < preds.size(); ++i)
        out.mismatches += (preds[i] != keyset.labels[i]);
    out.presence = out.mismatches < policy.mismatch_threshold;
    return out;
}

}  // namespace actmark::blackbox
