#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actmark/matrix.hpp"

namespace actmark {

// Supervised dataset; features live in the unit box [0,1]^d.
struct Dataset {
    Matrix inputs;  // n x d
    std::vector<std::int32_t> labels;
    int class_count = 0;
    std::string split;  // "train" or "test"

    std::size_t size() const { return inputs.rows; }
    std::size_t dim() const { return inputs.cols; }
};

// Gaussian blobs, one per class, samples clipped to the unit box.
struct SyntheticSpec {
    Matrix class_means;  // C x d, entries in [0,1]
    double sigma = 0.1;
    std::size_t per_class = 100;
    std::uint64_t seed = 0;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

// Means drawn uniformly in [0.1, 0.9]^dim from mean_seed, so a train/test
// pair built from the same mean_seed shares geometry.
SyntheticSpec make_blob_spec(int classes, std::size_t dim, std::size_t per_class,
                             double sigma, std::uint64_t mean_seed,
                             std::uint64_t sample_seed);

// IDX (big-endian) image/label pair; pixels scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace actmark
