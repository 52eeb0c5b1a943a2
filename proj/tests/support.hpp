#pragma once

// Test-only helpers: scratch directories, random inputs, and a central
// finite-difference oracle that knows nothing about the analytic gradients.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "lwsr/common.hpp"
#include "lwsr/corpus.hpp"

namespace lwsr::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lwsr_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline MatrixF random_matrix_f(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    MatrixF m(rows, cols);
    for (float& v : m.data) v = static_cast<float>(n(rng));
    return m;
}

inline MatrixD random_matrix_d(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    MatrixD m(rows, cols);
    for (double& v : m.data) v = n(rng);
    return m;
}

inline FeatureCube random_cube(std::size_t patches, std::size_t dim, std::mt19937_64& rng, const std::string& id = "q") {
    FeatureCube c;
    c.slide_id = id;
    c.features = random_matrix_f(patches, dim, rng);
    return c;
}

// |a - f| / max(|a|, |f|, floor). The floor keeps gradients that are zero up
// to roundoff from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of `f` in every coordinate of `x`, step h.
inline std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& f,
                                            double h = 1e-4) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

}  // namespace lwsr::testing
