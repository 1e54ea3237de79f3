#include "actmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "actmark/errors.hpp"
#include "actmark/rng.hpp"

namespace actmark::attacks {

namespace {

void apply_mask(nn::MlpModel& model, const std::vector<std::vector<std::uint8_t>>& mask) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        float* w = model.weights[l].values.data();
        const std::uint8_t* m = mask[l].data();
        for (std::size_t i = 0; i < mask[l].size(); ++i) {
            if (!m[i]) w[i] = 0.0f;
        }
    }
}

}  // namespace

PruneResult prune(const nn::MlpModel& model, const PruneSpec& spec,
                  const Dataset& train_data, const nn::TrainConfig& config) {
    if (spec.rate < 0.0 || spec.rate > 1.0) {
        fail(ErrorCode::Input, "prune rate must lie in [0,1]");
    }

    PruneResult result;
    result.model = model;
    result.mask.resize(model.layer_count());

    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const std::size_t count = model.weights[l].size();
        result.mask[l].assign(count, 1);
        const auto zeroed = static_cast<std::size_t>(
            std::floor(spec.rate * static_cast<double>(count)));
        if (zeroed == 0) continue;

        // smallest |w| first; ties resolved by index order
        std::vector<std::size_t> order(count);
        std::iota(order.begin(), order.end(), 0);
        const float* w = model.weights[l].values.data();
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             return std::fabs(w[a]) < std::fabs(w[b]);
                         });
        for (std::size_t i = 0; i < zeroed; ++i) result.mask[l][order[i]] = 0;
    }

    apply_mask(result.model, result.mask);
    if (spec.finetune_epochs > 0) {
        nn::TrainConfig stage = config;
        stage.epochs = 1;
        for (std::size_t e = 0; e < spec.finetune_epochs; ++e) {
            nn::train(result.model, train_data, stage, {}, e);
            apply_mask(result.model, result.mask);
        }
    }
    return result;
}

nn::MlpModel finetune_attack(const nn::MlpModel& model, const Dataset& train_data,
                             std::size_t epochs, const nn::TrainConfig& config) {
    nn::MlpModel out = model;
    if (epochs == 0) return out;
    nn::TrainConfig stage = config;
    stage.epochs = epochs;
    nn::train(out, train_data, stage);
    return out;
}

OverwriteResult overwrite_attack(const nn::MlpModel& marked, const Dataset& train_data,
                                 std::uint64_t attacker_seed, std::size_t wm_length,
                                 std::size_t key_count, const nn::TrainConfig& config,
                                 const OverwriteParams& params) {
    const std::size_t layer =
        params.layer < 0 ? marked.hidden_count() - 1
                         : static_cast<std::size_t>(params.layer);

    OverwriteResult result;
    result.attacker_secret = whitebox::make_secret(
        derive_seed(attacker_seed, "attacker-secret"), train_data.class_count,
        params.carriers, marked.layer_dims[layer + 1], wm_length, params.lambda1,
        params.lambda2, layer);

    nn::TrainConfig embed_cfg = config;
    embed_cfg.seed = derive_seed(attacker_seed, "attacker-embed");
    whitebox::EmbedResult embedded =
        whitebox::embed(marked, train_data, result.attacker_secret, embed_cfg);
    result.attacker_centers = std::move(embedded.centers);

    blackbox::KeyEmbedConfig key_cfg;
    key_cfg.key_count = key_count;
    key_cfg.key_multiplier = params.key_multiplier;
    key_cfg.rarity = params.rarity;
    key_cfg.seed = derive_seed(attacker_seed, "attacker-keys");

    // the victim model is the attacker's pre-fine-tuning reference
    blackbox::KeyEmbedResult keyed = blackbox::embed_output_layer(
        embedded.model, marked, train_data, key_cfg, config);
    result.model = std::move(keyed.model);
    result.attacker_keyset = std::move(keyed.keyset);
    return result;
}

const std::vector<std::string>& AttackReport::csv_header() {
    static const std::vector<std::string> header = {"attack", "parameter", "metric",
                                                    "value"};
    return header;
}

std::vector<std::vector<std::string>> AttackReport::csv_rows() const {
    std::ostringstream param;
    for (std::size_t i = 0; i < parameters.size(); ++i) {
        if (i > 0) param << ' ';
        param << parameters[i].first << '=' << parameters[i].second;
    }
    const std::string p = param.str();

    const auto fmt = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };

    std::vector<std::vector<std::string>> rows;
    if (test_accuracy >= 0.0)
        rows.push_back({kind, p, "test_accuracy", fmt(test_accuracy)});
    if (whitebox_ber >= 0.0)
        rows.push_back({kind, p, "whitebox_ber", fmt(whitebox_ber)});
    if (blackbox_mismatches >= 0)
        rows.push_back({kind, p, "blackbox_mismatches",
                        std::to_string(blackbox_mismatches)});
    if (blackbox_presence >= 0)
        rows.push_back({kind, p, "blackbox_presence", std::to_string(blackbox_presence)});
    return rows;
}

}  // namespace actmark::attacks
