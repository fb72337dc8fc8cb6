#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "efdrcs/grid.hpp"
#include "efdrcs/wavelet.hpp"

namespace efdrcs {

enum class Standardizer { mad, stddev };

Standardizer parse_standardizer(std::string_view name);

struct EfdrConfig {
    int levels = 2;
    WaveletFilter filter = WaveletFilter::la8;
    std::size_t n_tests = 100;
    /// FDR level used to decide which coefficients enter mu_hat.
    double alpha = 0.05;
    /// Weight of the coefficient's own z^2 in its ordering score.
    double neighbor_weight = 0.0;
    /// Add the four periodic same-class neighbours to the neighbourhood.
    bool spatial_neighbors = false;
    /// Leave coefficients touched by the periodic wrap out of scale
    /// estimation and testing.
    bool exclude_boundary = true;
    Standardizer standardizer = Standardizer::mad;
    /// Choose n_tests from {25, 50, 100, 200} by generalized degrees of freedom.
    bool gdf = false;
    std::uint64_t gdf_seed = 0;

    void validate(std::size_t coefficients) const;
};

struct EfdrResult {
    double p_value = 1.0;
    Grid2D mu_hat{2, 2, 0.0};
    /// Flat coefficient indices kept in mu_hat, ascending.
    std::vector<std::size_t> rejected;
    /// Flat coefficient indices that were tested, in ranking order.
    std::vector<std::size_t> tested;
    /// Standardized coefficients in pyramid layout.
    std::vector<double> z;
    std::size_t n_tests = 0;
};

/// Robust (or plain) scale of one class; 0 when degenerate.
double class_scale(std::span<const double> values, Standardizer method);

/// Divides every class by its scale estimate. A class whose MAD is zero falls
/// back to the standard deviation; if that is zero too its z-scores are 0.
/// When `excluded` is non-empty the scale uses only coefficients with
/// excluded[i] == 0 (if a class has at least two of them).
std::vector<double> standardize(const PyramidLayout& layout, std::span<const double> coefficients,
                                Standardizer method = Standardizer::mad,
                                std::span<const std::uint8_t> excluded = {});

/// Flat indices of the neighbours of coefficient `index`: the parent, the
/// children and the other two orientations at the same level and position.
/// Smooth coefficients use the three coarsest details at the same position.
/// `spatial` adds the four periodic neighbours in the same class.
std::vector<std::size_t> coefficient_neighbors(const PyramidLayout& layout, std::size_t index, bool spatial = false);

/// w z_i^2 + (1 - w) mean of z_j^2 over the neighbours.
std::vector<double> neighborhood_scores(const PyramidLayout& layout, std::span<const double> z, double weight,
                                        bool spatial = false);

/// Indices by descending score; ties go to the smaller index. Coefficients
/// with excluded[i] != 0 are skipped. Returns the first `count` entries (all
/// when count is 0).
std::vector<std::size_t> order_hypotheses(const PyramidLayout& layout, std::span<const double> z, double weight,
                                          std::size_t count = 0, bool spatial = false,
                                          std::span<const std::uint8_t> excluded = {});

/// Benjamini-Hochberg step-up; returns positions in `pvalues`, ascending.
std::vector<std::size_t> bh_reject(std::span<const double> pvalues, double alpha);

/// min_i p_(i) m / i, clipped to [1e-300, 1].
double smallest_adjusted_p(std::span<const double> pvalues);

/// Test on a coefficient vector; mu_hat is left as a zero 2x2 placeholder
/// and `rejected` indexes the coefficient vector.
EfdrResult efdr_coefficients(const PyramidLayout& layout, std::span<const double> coefficients,
                             const EfdrConfig& config);

EfdrResult efdr_test(const Grid2D& grid, const EfdrConfig& config);

}  // namespace efdrcs
