#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "actmark/dataset.hpp"
#include "actmark/nn.hpp"
#include "actmark/wm_black.hpp"
#include "actmark/wm_white.hpp"

namespace actmark::attacks {

struct PruneSpec {
    double rate = 0.0;                // fraction of weights zeroed per layer
    std::size_t finetune_epochs = 10; // sparse recovery epochs after masking
};

struct PruneResult {
    nn::MlpModel model;
    // 1 = weight kept, aligned with model.weights; biases are exempt
    std::vector<std::vector<std::uint8_t>> mask;
};

// Zeroes the floor(rate * count) smallest-magnitude weights of each layer
// (ties broken by index), then fine-tunes on loss0 with masked weights
// pinned to zero after every step.
PruneResult prune(const nn::MlpModel& model, const PruneSpec& spec,
                  const Dataset& train_data, const nn::TrainConfig& config);

// Retraining on loss0 only, at the caller-chosen learning rate.
nn::MlpModel finetune_attack(const nn::MlpModel& model, const Dataset& train_data,
                             std::size_t epochs, const nn::TrainConfig& config);

struct OverwriteParams {
    float lambda1 = 0.01f;
    float lambda2 = 0.01f;
    int layer = -1;                  // hidden ordinal; -1 = last hidden
    std::size_t carriers = 1;
    std::size_t key_multiplier = 20;
    blackbox::RarityConfig rarity;
};

struct OverwriteResult {
    nn::MlpModel model;
    whitebox::WhiteboxSecret attacker_secret;
    whitebox::GaussianCenters attacker_centers;
    blackbox::BlackboxKeySet attacker_keyset;
};

// Informed adversary: embeds a fresh hidden-layer watermark on the same
// layer and a fresh key set, reusing the defender's hyper-parameters. The
// victim model doubles as the attacker's unmarked reference for key
// selection.
OverwriteResult overwrite_attack(const nn::MlpModel& marked, const Dataset& train_data,
                                 std::uint64_t attacker_seed, std::size_t wm_length,
                                 std::size_t key_count, const nn::TrainConfig& config,
                                 const OverwriteParams& params = {});

struct AttackReport {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> parameters;
    double test_accuracy = -1.0;
    double whitebox_ber = -1.0;       // < 0: not evaluated
    long long blackbox_mismatches = -1;
    int blackbox_presence = -1;

    // rows of (attack, parameter, metric, value)
    std::vector<std::vector<std::string>> csv_rows() const;
    static const std::vector<std::string>& csv_header();
};

}  // namespace actmark::attacks
