#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "efdrcs/grid.hpp"
#include "efdrcs/wavelet.hpp"

namespace efdrcs {

enum class CovarianceKind { white, exponential, exponential_nugget, matern_nugget };

CovarianceKind parse_covariance_kind(std::string_view name);
std::string_view covariance_kind_name(CovarianceKind kind);

/// Stationary isotropic covariance C(u) = tau2 * (rho(|u|) + nugget * 1{u = 0}).
///
/// `white` ignores phi (the phi = 0 convention) and has C(u) = tau2 * 1{u = 0}.
/// `exponential` uses rho(d) = exp(-d / phi), which equals Matern with nu = 1/2.
struct CovarianceFamily {
    CovarianceKind kind = CovarianceKind::exponential;
    double tau2 = 1.0;
    double phi = 1.0;
    double nu = 0.5;
    double nugget = 0.0;

    void validate() const;
    bool has_nugget() const noexcept {
        return kind == CovarianceKind::exponential_nugget || kind == CovarianceKind::matern_nugget;
    }
    /// Omega entry (C / tau2) at Euclidean distance d.
    double correlation(double distance) const;
    double operator()(double distance) const { return tau2 * correlation(distance); }
};

/// Dense covariance of the lattice, Sigma_ij = C(s_i - s_j).
Eigen::MatrixXd cov_matrix(const CovarianceFamily& family, std::size_t n1, std::size_t n2,
                           double spacing_x = 1.0, double spacing_y = 1.0, std::size_t max_pixels = 8192);

/// Per-class wavelet variances theta_k = (tau2 / n_k) tr(W_k Omega W_k').
std::vector<double> wavelet_class_variances(const CovarianceFamily& family, std::size_t n1, std::size_t n2,
                                            int levels, WaveletFilter filter, double spacing_x = 1.0,
                                            double spacing_y = 1.0);

struct FittedCovariance {
    CovarianceFamily family;
    int levels = 2;
    WaveletFilter filter = WaveletFilter::la8;
    std::vector<double> theta;
    double neg_log_profile = 0.0;
    int evaluations = 0;
    bool converged = true;
};

struct MlOptions {
    double spacing_x = 1.0;
    double spacing_y = 1.0;
    /// Smoothness held fixed unless the Matern family is requested.
    double nu = 0.5;
    double phi_min = 0.05;
    double phi_max = 200.0;
    double tolerance = 1e-6;
    int max_evaluations = 400;
};

/// Holds H Omega(gamma) H' assembly for one scheme so repeated likelihood
/// evaluations only re-evaluate the covariance on distinct pixel lags.
class BlockCovarianceAssembler {
public:
    BlockCovarianceAssembler(const AggregationScheme& scheme, double spacing_x = 1.0, double spacing_y = 1.0);

    /// K x K matrix H Omega H' for the given family (tau2 ignored).
    Eigen::MatrixXd correlation(const CovarianceFamily& family) const;

    std::size_t blocks() const noexcept { return k_; }

private:
    std::vector<double> lag_table(const CovarianceFamily& family) const;

    std::size_t n1_;
    std::size_t n2_;
    std::size_t k_;
    double hx_;
    double hy_;
    bool singletons_ = false;
    std::vector<std::size_t> rows_;
    std::vector<std::size_t> cols_;
    // pair_class_[k * K + l] for l >= k; each class is a sparse lag histogram.
    std::vector<std::uint32_t> pair_class_;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> classes_;
};

/// Profile objective 0.5 log|H Omega H'| + (K/2) log(Z' (H Omega H')^-1 Z).
/// Returns +inf when the matrix cannot be factorized. Writes the quadratic
/// form to `quad` when non-null.
double profile_objective(const BlockCovarianceAssembler& assembler, std::span<const double> data,
                         const CovarianceFamily& family, double* quad = nullptr);

/// Full Gaussian negative log-likelihood of the aggregated data under mu = 0.
double neg_log_likelihood(const AggregatedData& data, const CovarianceFamily& family, double spacing_x = 1.0,
                          double spacing_y = 1.0);

/// Maximum-likelihood fit under H0 followed by projection to wavelet-class variances.
FittedCovariance ml_fit(const AggregatedData& data, CovarianceKind kind, int levels,
                        WaveletFilter filter = WaveletFilter::la8, const MlOptions& options = {});

/// Derivative-free simplex minimization over a box, used by ml_fit.
struct SimplexResult {
    std::vector<double> x;
    double value;
    int evaluations;
    bool converged;
};
template <class F>
SimplexResult nelder_mead(F&& f, std::vector<double> start, const std::vector<double>& lower,
                          const std::vector<double>& upper, double step, double tolerance, int max_evaluations);

}  // namespace efdrcs

#include "efdrcs/detail/nelder_mead.hpp"
