#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "actmark/dataset.hpp"
#include "actmark/matrix.hpp"

namespace actmark::nn {

// Fully-connected network: ReLU on hidden layers, linear output (logits).
struct MlpModel {
    std::vector<std::size_t> layer_dims;         // e.g. {784, 512, 512, 10}
    std::vector<Matrix> weights;                 // dims[i] x dims[i+1]
    std::vector<std::vector<float>> biases;      // dims[i+1]

    std::size_t layer_count() const { return weights.size(); }
    std::size_t hidden_count() const {
        return layer_dims.size() >= 2 ? layer_dims.size() - 2 : 0;
    }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t parameter_count() const;

    // per-layer uniform init in +-sqrt(6/(fan_in+fan_out)), biases zero
    static MlpModel random_init(std::vector<std::size_t> dims, std::uint64_t seed);
    static MlpModel zeros(std::vector<std::size_t> dims);
};

bool same_parameters(const MlpModel& a, const MlpModel& b);  // bitwise

// Input batch plus every post-activation map. hidden(l) is post-ReLU for
// hidden ordinal l; the last entry holds the output logits.
struct ActivationSnapshot {
    Matrix input;
    std::vector<Matrix> layers;

    const Matrix& hidden(std::size_t l) const { return layers[l]; }
    const Matrix& logits() const { return layers.back(); }
    std::size_t batch_size() const { return input.rows; }
};

ActivationSnapshot forward(const MlpModel& model, const Matrix& batch);

struct Loss0Result {
    double loss = 0.0;
    Matrix dlogits;  // (softmax - onehot) / batch
};

// mean softmax cross-entropy
Loss0Result loss0_and_grad(const Matrix& logits, std::span<const std::int32_t> labels);

std::vector<std::int32_t> predict_labels(const MlpModel& model, const Matrix& inputs);
double accuracy(const MlpModel& model, const Dataset& data);

// Activations of one hidden layer over a (possibly large) input set,
// evaluated in chunks.
Matrix hidden_activations(const MlpModel& model, const Matrix& inputs,
                          std::size_t hidden_layer);

struct Gradients {
    std::vector<Matrix> dweights;
    std::vector<std::vector<float>> dbiases;
};

// Backprop from dlogits. extra, when non-empty, carries one additive
// dLoss/d(hidden activation) slot per hidden layer (empty Matrix = none);
// it is added before the ReLU gate at its layer.
Gradients compute_gradients(const MlpModel& model, const ActivationSnapshot& snap,
                            const Matrix& dlogits,
                            std::span<const Matrix> extra = {});

void apply_step(MlpModel& model, const Gradients& grads, float lr);

// one SGD step = compute_gradients + apply_step
void backward_and_step(MlpModel& model, const ActivationSnapshot& snap,
                       const Matrix& dlogits, std::span<const Matrix> extra,
                       float lr);

struct TrainConfig {
    float learning_rate = 0.01f;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    float lr_decay_factor = 10.0f;  // divisor applied for fine-tuning stages
};

// Additive loss evaluated per minibatch. A hook may update its own
// trainable state (e.g. mixture centers) with the step's learning rate;
// the returned gradient is injected into backprop at hidden ordinal
// `layer` (layer < 0 means no activation gradient this step).
struct HookGrad {
    double loss = 0.0;
    int layer = -1;
    Matrix d_hidden;
};
using LossHook =
    std::function<HookGrad(const ActivationSnapshot&, std::span<const std::int32_t>, float lr)>;

struct EpochMetrics {
    double loss0 = 0.0;                 // epoch mean
    std::vector<double> hook_losses;    // epoch mean per hook
    double train_accuracy = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochMetrics&)>;

// Epoch-shuffled minibatch SGD, bitwise reproducible from (seed, dataset,
// config) in this single-threaded path. The shuffle stream is keyed by
// absolute epoch index, so a staged run (epoch_base > 0) replays the same
// permutations as one continuous run.
std::vector<EpochMetrics> train(MlpModel& model, const Dataset& data,
                                const TrainConfig& config,
                                std::span<const LossHook> hooks = {},
                                std::size_t epoch_base = 0,
                                const EpochCallback& on_epoch = {});

}  // namespace actmark::nn
