#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace efdrcs {

enum class CombineMethod { cpl, mom, nve, fisher };

CombineMethod parse_combine_method(std::string_view name);
std::string_view combine_method_name(CombineMethod method);

/// Default Monte Carlo size for the copula rho(r) map.
inline constexpr std::size_t kDefaultCopulaSamples = 100000;

struct CombineResult {
    CombineMethod method = CombineMethod::cpl;
    double T = 0.0;
    /// Unset for NVE.
    std::optional<double> rho_hat;
    std::optional<double> a;
    std::optional<double> b;
    /// Copula correlation r maximizing the composite likelihood (CPL only).
    std::optional<double> r_hat;
    double p_final = 1.0;
    bool reject = false;
};

struct GammaParams {
    double a;
    double b;
};

/// T = -2 sum log p_i, with p clamped below at 1e-300.
double fisher_T(std::span<const double> pvalues);

/// 1 - [sum_{i<j} (t_i - t_j)^2 / (M - 1)] / sum (t_i - 2)^2 before clamping;
/// NaN when every t_i equals 2.
double mom_rho_unclamped(std::span<const double> t);

/// Method-of-moments intra-class correlation of t_i = -2 log p_i, clamped to [0, 1 - 1e-9].
double mom_rho(std::span<const double> t);

/// Composite log-likelihood of the Gaussian copula at correlation r (terms
/// not depending on r dropped).
double copula_log_likelihood(std::span<const double> t, double r);

/// argmax of copula_log_likelihood over [0, 0.999] by golden-section search.
double copula_r(std::span<const double> t);

/// Correlation of (-2 log U1, -2 log U2) with (U1, U2) drawn from the Gaussian
/// copula at r. Monte Carlo on a substream fixed by (seed, mc_samples); values
/// are cached on a 0.001 grid in r and linearly interpolated.
double copula_rho_map(double r, std::size_t mc_samples, std::uint64_t seed);

/// rho(r_hat) clamped to [0, 1 - 1e-9].
double copula_rho(std::span<const double> t, std::size_t mc_samples, std::uint64_t seed);

/// a = M / (1 + (M - 1) rho), b = 1 / (2 (1 + (M - 1) rho)).
GammaParams gamma_params(double rho, std::size_t m);

/// Eigenvalues of sigma2 ((1 - rho) I + rho 1 1') of order M: the simple one
/// sigma2 (1 + (M - 1) rho) and the (M - 1)-fold sigma2 (1 - rho).
struct IntraClassEigenvalues {
    double leading;
    double repeated;
};
IntraClassEigenvalues intra_class_eigenvalues(double sigma2, double rho, std::size_t m);

/// Upper tail of the Gamma(shape a, rate b) law at T.
double gamma_sf(double T, double a, double b);

CombineResult combine(std::span<const double> pvalues, CombineMethod method, double alpha, std::uint64_t seed,
                      std::size_t mc_samples = kDefaultCopulaSamples);

}  // namespace efdrcs
