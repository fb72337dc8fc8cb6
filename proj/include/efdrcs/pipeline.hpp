#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "efdrcs/combine.hpp"
#include "efdrcs/condsim.hpp"
#include "efdrcs/covariance.hpp"
#include "efdrcs/efdr.hpp"
#include "efdrcs/grid.hpp"

namespace efdrcs {

/// Covariance used to condition on the aggregated data.
enum class Conditioning {
    wavelet,     // Sigma(theta_hat) = W' V(theta_hat) W
    parametric,  // tau2_hat * Omega(gamma_hat), dense
};

Conditioning parse_conditioning(std::string_view name);
std::string_view conditioning_name(Conditioning c);

struct PipelineConfig {
    std::size_t M = 100;
    int levels = 2;
    WaveletFilter filter = WaveletFilter::la8;
    /// levels and filter here override the ones in `efdr`.
    EfdrConfig efdr;
    CovarianceKind covariance = CovarianceKind::exponential;
    CombineMethod method = CombineMethod::cpl;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    Conditioning conditioning = Conditioning::wavelet;
    MlOptions ml;
    std::size_t mc_samples = kDefaultCopulaSamples;
    /// Seed of the rho(r) Monte Carlo map; defaults to `seed`. Studies pin it
    /// so the map is shared across replicates.
    std::optional<std::uint64_t> copula_seed;
    int jobs = 1;

    void validate() const;
    EfdrConfig efdr_config() const;
};

struct StageTimes {
    double fit = 0.0;
    double condition = 0.0;
    double test = 0.0;
    double combine = 0.0;
    double total = 0.0;
};

struct DetectionReport {
    CombineResult combined;
    double p_final = 1.0;
    bool reject = false;
    double alpha = 0.05;
    /// mean of the per-simulation signal estimates; reported even when not significant
    Grid2D mu_hat{2, 2, 0.0};
    std::vector<double> pvalues;
    /// Unset when the data are the complete fine grid: the conditional law is
    /// then a point mass and does not depend on the covariance.
    std::optional<FittedCovariance> covariance;
    Conditioning conditioning = Conditioning::wavelet;
    std::size_t M = 0;
    std::uint64_t seed = 0;
    StageTimes times;
};

/// The conditional law used in step 2; exposed for checks and the CLI.
ConditionalLaw conditional_law(const AggregatedData& data, const std::optional<FittedCovariance>& fit,
                               const PipelineConfig& config);

/// Seed of the simulation stream for a pipeline seed.
std::uint64_t simulation_seed(std::uint64_t seed);

/// Steps 1-6: fit under H0, simulate M fine fields given the data, run EFDR
/// on each, estimate the dependence and combine the p-values.
DetectionReport detect(const AggregatedData& data, const PipelineConfig& config);

/// Re-combines the per-simulation p-values of a report with another method.
CombineResult recombine(const DetectionReport& report, CombineMethod method, const PipelineConfig& config);

}  // namespace efdrcs
