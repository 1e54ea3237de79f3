#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace actmark {

// Dense row-major float32 matrix. Reductions over entries (dot products,
// sums) accumulate in double so results are reproducible and well
// conditioned; storage stays 32-bit.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f)
        : rows(r), cols(c), values(r * c, fill) {}

    float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const float> row(std::size_t r) const {
        return {values.data() + r * cols, cols};
    }

    std::size_t size() const { return rows * cols; }
    bool empty() const { return rows == 0 || cols == 0; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// a(m,k) . b(k,n) -> (m,n)
Matrix matmul(const Matrix& a, const Matrix& b);

// a(r,m)^T . b(r,n) -> (m,n)
Matrix matmul_at(const Matrix& a, const Matrix& b);

// a(m,k) . b(n,k)^T -> (m,n)
Matrix matmul_bt(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);
bool same_values(const Matrix& a, const Matrix& b);  // bitwise

}  // namespace actmark
