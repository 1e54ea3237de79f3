#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "actmark/dataset.hpp"
#include "actmark/matrix.hpp"
#include "actmark/nn.hpp"
#include "actmark/rng.hpp"

namespace actmark::blackbox {

// Trigger inputs with their assigned random labels.
struct BlackboxKeySet {
    Matrix inputs;  // K x input_dim, entries in [0,1]
    std::vector<std::int32_t> labels;
    std::size_t initial_count = 0;  // K' drawn before selection
    std::uint64_t seed = 0;

    std::size_t size() const { return inputs.rows; }
};

inline constexpr std::uint64_t kNoDensityLimit =
    std::numeric_limits<std::uint64_t>::max();

// Rare-region acceptance rule: a candidate passes when at most density_tau
// training latents lie within epsilon of its own latent.
struct RarityConfig {
    double epsilon = 0.0;            // <= 0: derive from the latent scale
    std::uint64_t density_tau = 0;   // kNoDensityLimit disables the check
    int latent_layer = -1;           // hidden ordinal; -1 = last hidden
};

struct DetectionPolicy {
    std::size_t key_count = 0;          // K
    int class_count = 0;                // C
    double fp_bound = 1e-3;
    std::size_t mismatch_threshold = 0; // N_k; presence iff mismatches < N_k
};

// Batch of inputs -> predicted class labels. Implementations must be safe
// to share across concurrent detect calls.
class PredictionOracle {
public:
    virtual ~PredictionOracle() = default;
    virtual std::vector<std::int32_t> predict(const Matrix& batch) const = 0;
};

class ModelOracle final : public PredictionOracle {
public:
    explicit ModelOracle(nn::MlpModel model) : model_(std::move(model)) {}
    std::vector<std::int32_t> predict(const Matrix& batch) const override {
        return nn::predict_labels(model_, batch);
    }

private:
    nn::MlpModel model_;
};

// Line-delimited subprocess protocol: one request line
//   {"inputs": [[...], ...]}
// answered by one response line
//   {"labels": [...]}
// with a flush after every line.
class SubprocessOracle final : public PredictionOracle {
public:
    explicit SubprocessOracle(const std::string& command);
    ~SubprocessOracle() override;
    SubprocessOracle(const SubprocessOracle&) = delete;
    SubprocessOracle& operator=(const SubprocessOracle&) = delete;

    std::vector<std::int32_t> predict(const Matrix& batch) const override;

private:
    mutable std::mutex mutex_;
    int pid_ = -1;
    mutable FILE* to_child_ = nullptr;
    mutable FILE* from_child_ = nullptr;
};

// Probability that an unrelated model (per-key match chance 1/C) produces
// fewer than mismatch_threshold mismatches over K keys; evaluated in
// log-space.
double false_positive_prob(std::size_t key_count, int class_count,
                           std::size_t mismatch_threshold);

// Largest N_k whose false-positive probability stays below fp_bound.
std::size_t detection_threshold(std::size_t key_count, int class_count,
                                double fp_bound);

DetectionPolicy make_policy(std::size_t key_count, int class_count,
                            double fp_bound = 1e-3);

// count x dim uniform samples over the unit box; exact duplicates rejected
Matrix generate_candidates(Rng& rng, std::size_t count, std::size_t dim);
Matrix generate_candidates(std::uint64_t seed, std::size_t count, std::size_t dim);

// Median pairwise distance of a <=1000-row subsample, divided by 4.
double default_epsilon(const Matrix& train_latents, std::uint64_t seed);

// Keeps candidates whose latent neighborhood is sparse enough, replacing
// rejections with fresh draws from rng until the requested count is
// reached or 100x that many draws are spent.
Matrix rarity_filter(const nn::MlpModel& model, const Matrix& candidates,
                     const Matrix& train_latents, const RarityConfig& cfg,
                     Rng& rng);

struct KeyEmbedConfig {
    std::size_t key_count = 20;        // K
    std::size_t key_multiplier = 20;   // K' = key_multiplier * K
    RarityConfig rarity;
    std::size_t epoch_cap = 50;
    double key_accuracy_target = 0.99;
    std::size_t train_mix_ratio = 10;  // training samples per key per epoch
    std::uint64_t seed = 0;
};

struct KeyEmbedResult {
    nn::MlpModel model;
    BlackboxKeySet keyset;
    double key_accuracy = 0.0;      // over all K' candidates
    std::size_t epochs_used = 0;
    std::size_t eligible_count = 0;
};

// Fine-tunes the marked model at a reduced learning rate on rare-region
// candidates mixed with training data until the candidates are memorized,
// then keeps K keys that the tuned model gets right and the unmarked
// reference gets wrong.
KeyEmbedResult embed_output_layer(const nn::MlpModel& marked,
                                  const nn::MlpModel& unmarked,
                                  const Dataset& train_data,
                                  const KeyEmbedConfig& cfg,
                                  const nn::TrainConfig& config);

struct DetectionResult {
    bool presence = false;
    std::size_t mismatches = 0;
};

DetectionResult detect(const PredictionOracle& oracle, const BlackboxKeySet& keyset,
                       const DetectionPolicy& policy);

}  // namespace actmark::blackbox
