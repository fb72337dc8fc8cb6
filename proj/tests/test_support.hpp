#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "efdrcs/grid.hpp"
#include "efdrcs/wavelet.hpp"

namespace testsupport {

inline std::vector<double> gaussian_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

inline efdrcs::Grid2D gaussian_grid(std::size_t n1, std::size_t n2, std::uint64_t seed) {
    return efdrcs::Grid2D(n1, n2, gaussian_vector(n1 * n2, seed));
}

// Dense n x n matrix of the transform, built one unit image at a time.
inline Eigen::MatrixXd dense_dwt_matrix(std::size_t n1, std::size_t n2, int levels, efdrcs::WaveletFilter filter) {
    const std::size_t n = n1 * n2;
    Eigen::MatrixXd w(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        efdrcs::Grid2D unit(n1, n2, 0.0);
        unit.values()[j] = 1.0;
        const auto pyr = efdrcs::dwt2(unit, levels, filter);
        for (std::size_t i = 0; i < n; ++i) w(i, j) = pyr.coefficients[i];
    }
    return w;
}

// H as a dense K x n matrix.
inline Eigen::MatrixXd dense_h(const efdrcs::AggregationScheme& scheme) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(scheme.size(), scheme.pixels());
    for (std::size_t k = 0; k < scheme.size(); ++k)
        for (auto idx : scheme.block(k)) h(k, idx) = 1.0 / static_cast<double>(scheme.block(k).size());
    return h;
}

}  // namespace testsupport
