#include "actmark/matrix.hpp"

#include <cmath>
#include <cstring>

#include "actmark/errors.hpp"

namespace actmark {

namespace {

void require_shapes(std::size_t got, std::size_t want, const char* op) {
    if (got != want) {
        fail(ErrorCode::Shape, std::string(op) + ": inner dimensions disagree (" +
                                   std::to_string(got) + " vs " + std::to_string(want) + ")");
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_shapes(a.cols, b.rows, "matmul");
    Matrix out(a.rows, b.cols);
    std::vector<double> acc(b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a.values.data() + i * a.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            const float* brow = b.values.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) acc[j] += av * brow[j];
        }
        float* orow = out.values.data() + i * out.cols;
        for (std::size_t j = 0; j < b.cols; ++j) orow[j] = static_cast<float>(acc[j]);
    }
    return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    require_shapes(a.rows, b.rows, "matmul_at");
    std::vector<double> acc(a.cols * b.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const float* arow = a.values.data() + r * a.cols;
        const float* brow = b.values.data() + r * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            double* accrow = acc.data() + i * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) accrow[j] += av * brow[j];
        }
    }
    Matrix out(a.cols, b.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = static_cast<float>(acc[i]);
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    require_shapes(a.cols, b.cols, "matmul_bt");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const float* arow = a.values.data() + i * a.cols;
        float* orow = out.values.data() + i * out.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const float* brow = b.values.data() + j * b.cols;
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += double(arow[k]) * brow[k];
            orow[j] = static_cast<float>(acc);
        }
    }
    return out;
}

bool all_finite(const Matrix& m) {
    for (float v : m.values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool same_values(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    return a.values.empty() ||
           std::memcmp(a.values.data(), b.values.data(),
                       a.values.size() * sizeof(float)) == 0;
}

}  // namespace actmark
