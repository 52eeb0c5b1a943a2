#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lwsr {

enum class Errc {
    invalid_argument,
    invalid_state,
    missing_file,
    dimension_mismatch,
    duplicate_id,
    non_finite,
    invalid_stream,
    io_error,
    invalid_config,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure in the library surfaces as this one exception type; the code
// tells callers which contract was broken.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Dense row-major matrix. Rows are the unit of meaning everywhere in this
// project (a patch, a slide representation, a class row of the classifier).
template <class T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
    bool operator==(const Matrix&) const = default;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

template <class T>
bool all_finite(std::span<const T> values) {
    for (T v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// Deterministic 64-bit seed for a named random stream, so that e.g. the
// query split does not depend on how much randomness training consumed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream_name) noexcept;

}  // namespace lwsr
