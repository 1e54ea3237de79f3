#include "actmark/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

#include "actmark/errors.hpp"
#include "actmark/rng.hpp"

namespace actmark {

Dataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.sigma <= 0.0) fail(ErrorCode::Input, "blob sigma must be > 0");
    if (spec.class_means.empty()) fail(ErrorCode::Input, "blob spec has no class means");

    const std::size_t classes = spec.class_means.rows;
    const std::size_t dim = spec.class_means.cols;

    Dataset out;
    out.class_count = static_cast<int>(classes);
    out.inputs = Matrix(classes * spec.per_class, dim);
    out.labels.resize(classes * spec.per_class);

    Rng rng(derive_seed(spec.seed, "blobs"));
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
            float* dst = out.inputs.values.data() + row * dim;
            const float* mean = spec.class_means.values.data() + c * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                const double v = mean[j] + spec.sigma * rng.normal();
                dst[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
            out.labels[row] = static_cast<std::int32_t>(c);
        }
    }
    return out;
}

SyntheticSpec make_blob_spec(int classes, std::size_t dim, std::size_t per_class,
                             double sigma, std::uint64_t mean_seed,
                             std::uint64_t sample_seed) {
    if (classes < 1) fail(ErrorCode::Input, "blob spec needs at least one class");
    SyntheticSpec spec;
    spec.class_means = Matrix(static_cast<std::size_t>(classes), dim);
    Rng rng(derive_seed(mean_seed, "blob-means"));
    for (float& v : spec.class_means.values)
        v = static_cast<float>(rng.uniform(0.1, 0.9));
    spec.sigma = sigma;
    spec.per_class = per_class;
    spec.seed = sample_seed;
    return spec;
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::ifstream& f, const std::string& path) {
    unsigned char buf[4];
    const auto offset = f.tellg();
    f.read(reinterpret_cast<char*>(buf), 4);
    if (!f) {
        fail(ErrorCode::Format, path + ": truncated at offset " +
                                    std::to_string(static_cast<long long>(offset)));
    }
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

std::vector<std::uint8_t> read_bytes(std::ifstream& f, std::size_t count,
                                     const std::string& path) {
    std::vector<std::uint8_t> bytes(count);
    const auto offset = f.tellg();
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(f.gcount()) != count) {
        fail(ErrorCode::Format, path + ": truncated at offset " +
                                    std::to_string(static_cast<long long>(offset)));
    }
    return bytes;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgf(images_path, std::ios::binary);
    if (!imgf) fail(ErrorCode::Input, "cannot open " + images_path);
    std::ifstream lblf(labels_path, std::ios::binary);
    if (!lblf) fail(ErrorCode::Input, "cannot open " + labels_path);

    const std::uint32_t img_magic = read_u32_be(imgf, images_path);
    if (img_magic != kImagesMagic) {
        fail(ErrorCode::Format, images_path + ": bad magic at offset 0");
    }
    const std::uint32_t n_images = read_u32_be(imgf, images_path);
    const std::uint32_t n_rows = read_u32_be(imgf, images_path);
    const std::uint32_t n_cols = read_u32_be(imgf, images_path);

    const std::uint32_t lbl_magic = read_u32_be(lblf, labels_path);
    if (lbl_magic != kLabelsMagic) {
        fail(ErrorCode::Format, labels_path + ": bad magic at offset 0");
    }
    const std::uint32_t n_labels = read_u32_be(lblf, labels_path);
    if (n_images != n_labels) {
        fail(ErrorCode::Format, "image/label counts disagree: " +
                                    std::to_string(n_images) + " vs " +
                                    std::to_string(n_labels));
    }

    const std::size_t dim = std::size_t(n_rows) * n_cols;
    const auto pixels = read_bytes(imgf, std::size_t(n_images) * dim, images_path);
    const auto labels = read_bytes(lblf, n_labels, labels_path);

    Dataset out;
    out.inputs = Matrix(n_images, dim);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        out.inputs.values[i] = static_cast<float>(pixels[i]) / 255.0f;
    out.labels.resize(n_labels);
    int max_label = -1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.labels[i] = labels[i];
        max_label = std::max(max_label, int(labels[i]));
    }
    out.class_count = max_label + 1;
    return out;
}

}  // namespace actmark
