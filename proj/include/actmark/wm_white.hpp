#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "actmark/dataset.hpp"
#include "actmark/errors.hpp"
#include "actmark/matrix.hpp"
#include "actmark/nn.hpp"

namespace actmark::whitebox {

// s x N binary strings
struct Bits {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> values;

    Bits() = default;
    Bits(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::size_t size() const { return rows * cols; }
};

std::size_t mismatch_count(const Bits& a, const Bits& b);

// Owner-private material for the hidden-layer watermark.
struct WhiteboxSecret {
    std::size_t layer_index = 0;                 // hidden ordinal carrying the WM
    std::vector<std::int32_t> carrier_classes;   // s distinct class indices
    Matrix projection;                           // M x N, i.i.d. standard normal
    Bits bits;                                   // s x N, i.i.d. Bernoulli(1/2)
    float lambda1 = 0.01f;
    float lambda2 = 0.01f;
    std::size_t wm_length = 0;                   // N
    std::uint64_t seed = 0;

    std::size_t carrier_count() const { return carrier_classes.size(); }
    std::size_t layer_width() const { return projection.rows; }
};

// Trainable per-class mixture means at the watermarked layer.
struct GaussianCenters {
    Matrix mu;  // S x M
};

struct ExtractionResult {
    Bits bits_extracted;
    double ber = 0.0;
    std::size_t mismatches = 0;
};

WhiteboxSecret make_secret(std::uint64_t seed, int class_count, std::size_t carriers,
                           std::size_t layer_width, std::size_t wm_length,
                           float lambda1, float lambda2, std::size_t layer_index);

// Pulls activations toward their class center and the centers apart from
// the other classes' activations:
//   lambda1 * mean_b( ||mu_{y_b} - f_b||^2 - mean_{i != y_b} ||mu_i - f_b||^2 )
// d_features carries only the first (attraction) term; the cross-class
// term trains the centers alone.
struct Loss1Result {
    double loss = 0.0;
    Matrix d_features;  // batch x M
    Matrix d_centers;   // S x M
};
Loss1Result loss1_and_grads(const Matrix& features, std::span<const std::int32_t> labels,
                            const GaussianCenters& centers, float lambda1);

Matrix select_rows(const Matrix& m, std::span<const std::int32_t> rows);

// scores = sigmoid(centers_selected . projection); bit = 1 iff score >= threshold
struct Projection {
    Matrix scores;  // s x N
    Bits bits;      // s x N
};
Projection project_bits(const Matrix& centers_selected, const Matrix& projection,
                        float threshold = 0.5f);

// Binary cross-entropy between projected scores and the target string:
//   -lambda2 * sum( b ln G + (1-b) ln(1-G) ), G clamped to [1e-7, 1-1e-7]
// before the logs.
struct Loss2Result {
    double loss = 0.0;
    Matrix d_centers_selected;  // s x M
};
Loss2Result loss2_and_grad(const Matrix& centers_selected, const Matrix& projection,
                           const Bits& bits, float lambda2);

// Per-class activation means over a dataset at one hidden layer (S x M).
Matrix class_activation_means(const nn::MlpModel& model, const Dataset& data,
                              std::size_t hidden_layer, int class_count);

struct EmbedResult {
    nn::MlpModel model;
    GaussianCenters centers;
    std::vector<nn::EpochMetrics> epochs;
    ExtractionResult self_extraction;
};

// Raised when joint training ends with nonzero self-extraction BER. Carries
// the trained artifacts so capacity sweeps can still inspect them.
class EmbedFailedError : public Error {
public:
    explicit EmbedFailedError(EmbedResult result);
    const EmbedResult& result() const { return result_; }

private:
    EmbedResult result_;
};

// Joint training on loss0 + loss1 + loss2. Epoch 0 is a warm-up on loss0
// alone, after which the centers are initialized to the per-class
// activation means; remaining epochs train weights and centers together.
// With lambda1 = lambda2 = 0 the run is bitwise identical to plain
// training and the BER gate is skipped.
EmbedResult embed(const nn::MlpModel& start, const Dataset& train_data,
                  const WhiteboxSecret& secret, const nn::TrainConfig& config);

// The minibatch hook embed() installs; exposed for overwriting attacks.
nn::LossHook make_embed_hook(const WhiteboxSecret& secret, GaussianCenters& centers);

struct ExtractOptions {
    double key_fraction = 0.01;      // share of each carrier class used as key
    std::size_t min_per_class = 10;
};

// Approximates the carrier centers by the mean activation of key samples,
// projects them, and reports the bit error rate against the secret.
// Read-only with respect to the model.
ExtractionResult extract(const nn::MlpModel& model, const Dataset& train_subset,
                         const WhiteboxSecret& secret, const ExtractOptions& opts = {});

}  // namespace actmark::whitebox
