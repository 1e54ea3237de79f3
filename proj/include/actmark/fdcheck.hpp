#pragma once

#include <functional>
#include <span>
#include <vector>

#include "actmark/matrix.hpp"
#include "actmark/nn.hpp"
#include "actmark/wm_white.hpp"

namespace actmark::fdcheck {

// Double-precision mirror of the forward pass and the loss terms. Written
// as straightforward loops, independent of the engine kernels, so it can
// serve as the reference side of gradient and forward checks.

double mirror_loss0_on_logits(const Matrix& logits,
                              std::span<const std::int32_t> labels);
double mirror_loss0(const nn::MlpModel& model, const Matrix& batch,
                    std::span<const std::int32_t> labels);
double mirror_loss1(const Matrix& features, std::span<const std::int32_t> labels,
                    const Matrix& mu, double lambda1);
// Variant matching the trained semantics: the cross-class term reads the
// frozen features, so finite differences on attract_features reproduce the
// gradient that actually reaches the activations.
double mirror_loss1_split(const Matrix& attract_features,
                          const Matrix& frozen_features,
                          std::span<const std::int32_t> labels, const Matrix& mu,
                          double lambda1);
double mirror_loss2(const Matrix& centers_selected, const Matrix& projection,
                    const whitebox::Bits& bits, double lambda2);

// loss0 + loss1 + loss2 with features taken at the secret's layer and
// centers held fixed; the cross-class term of loss1 reads
// frozen_features (the base model's activations).
double mirror_composite(const nn::MlpModel& model, const Matrix& batch,
                        std::span<const std::int32_t> labels,
                        const whitebox::WhiteboxSecret& secret, const Matrix& mu,
                        const Matrix& frozen_features);

// Smallest |pre-activation| over all hidden units; lets callers reject
// instances whose ReLU gates sit too close to the boundary for finite
// differences.
double min_abs_preactivation(const nn::MlpModel& model, const Matrix& batch);

// Central finite differences over every float reachable through `params`
// (perturbed in place), compared against the matching `analytic` layout.
// Returns the largest per-entry error, measured relative to the larger of
// the entry pair and 1% of the gradient's largest entry.
double max_rel_err_fd(std::vector<std::span<float>> params,
                      std::vector<std::span<const float>> analytic,
                      const std::function<double()>& eval,
                      double step = 0x1.0p-12);

std::vector<std::span<float>> model_param_views(nn::MlpModel& model);
std::vector<std::span<const float>> gradient_views(const nn::Gradients& grads);

}  // namespace actmark::fdcheck
