#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "efdrcs/combine.hpp"
#include "efdrcs/grid.hpp"
#include "efdrcs/pipeline.hpp"

namespace efdrcs {

/// Square of width r and height h centred on the middle four pixels of an
/// n x n grid: 0-based rows and columns n/2 - r/2 ... n/2 - 1 + r/2.
struct SignalSpec {
    std::size_t r = 10;
    double h = 0.0;
    std::size_t n = 64;

    void validate() const;
};

/// Exponential noise with range phi (phi = 0 is white) on coordinates
/// deformed as s -> |s|^kappa s, with s measured from pixel (0, 0).
struct NoiseSpec {
    double phi = 0.0;
    double kappa = 0.0;
    double tau2 = 1.0;

    void validate() const;
};

std::vector<std::size_t> signal_pixels(const SignalSpec& signal);
Grid2D signal_field(const SignalSpec& signal);

/// Dense noise covariance of an n x n lattice under `noise`.
Eigen::MatrixXd noise_covariance(const NoiseSpec& noise, std::size_t n);

/// Z = mu + delta for one seed. Factorizations of the noise covariance are
/// cached per (n, phi, kappa, tau2).
Grid2D gen_field(const SignalSpec& signal, const NoiseSpec& noise, std::uint64_t seed);

/// Aggregation label: 64 keeps the 64 x 64 pixels (the direct EFDR path),
/// 16 and 8 average into 16 x 16 and 8 x 8 grids of cells.
AggregationScheme aggregation_scheme(int label, std::size_t n = 64);

/// Experiment 2 mask: blocks meeting the upper-right 3n/8 x 3n/8 pixel square.
std::vector<std::size_t> corner_blocks(const AggregationScheme& scheme);

/// Experiment 3 mask: 9/64 of the blocks drawn without replacement among the
/// blocks that avoid the central n/4 x n/4 pixel square.
std::vector<std::size_t> random_blocks(const AggregationScheme& scheme, std::uint64_t seed);

struct StudyCell {
    int experiment = 1;
    std::size_t r = 10;
    double h = 0.0;
    double phi = 5.0;
    double kappa = 0.0;
    int agg = 16;
};

struct StudyOptions {
    std::size_t replicates = 100;
    std::uint64_t seed = 1;
    int jobs = 1;
    double alpha = 0.05;
    PipelineConfig pipeline;
    /// Methods evaluated on the same simulations (ignored on the direct path).
    std::vector<CombineMethod> methods = {CombineMethod::cpl};
    std::function<void(const std::string&)> progress;
};

/// Method label of a p-value row: "idl" for the direct path.
std::string method_label(const StudyCell& cell, CombineMethod method);

/// p-values of one replicate for each requested method (one entry on the direct path).
std::vector<double> replicate_pvalues(const StudyCell& cell, std::size_t replicate, const StudyOptions& options);

struct PowerRow {
    StudyCell cell;
    std::string method;
    std::size_t replicates = 0;
    std::size_t rejections = 0;
    double rate = 0.0;
    double se = 0.0;
};

std::vector<PowerRow> run_power_study(const std::vector<StudyCell>& cells, const StudyOptions& options);

struct RocPoint {
    double alpha;
    double false_positive;
    double true_positive;
};

struct RocRow {
    StudyCell cell;
    std::string method;
    double auc = 0.0;
    std::vector<RocPoint> curve;
};

/// Mann-Whitney estimate of P(p_alt < p_null) with ties counted half.
double roc_auc(const std::vector<double>& null_p, const std::vector<double>& alt_p);

/// Null replicates use indices [0, R) at h = 0; alternatives use [R, 2R).
std::vector<RocRow> run_roc_study(const std::vector<StudyCell>& cells, const StudyOptions& options);

struct Type1Options {
    std::vector<std::size_t> sizes = {80, 85, 90, 95};
    std::vector<double> alphas = {0.01, 0.05, 0.1};
    std::size_t population = 100;
    std::size_t M = 100;
    std::size_t replicates = 5000;
    std::uint64_t seed = 1;
    int jobs = 1;
    std::size_t mc_samples = kDefaultCopulaSamples;
    std::vector<CombineMethod> methods = {CombineMethod::nve, CombineMethod::cpl, CombineMethod::mom};
};

struct Type1Row {
    double alpha;
    std::size_t N;
    std::string method;
    std::size_t replicates;
    std::size_t rejections;
    double rate;
    double se;
};

/// p_k = 2(1 - Phi(sqrt(N) |mean of subsample k|)) for M subsamples of size N
/// drawn without replacement from `population` N(0, 1) draws.
std::vector<double> subsample_pvalues(std::size_t N, std::size_t population, std::size_t M, std::uint64_t seed);

std::vector<Type1Row> run_type1_study(const Type1Options& options);

/// Tidy CSV text, one row per cell and method.
std::string power_csv(const std::vector<PowerRow>& rows);
std::string roc_csv(const std::vector<RocRow>& rows);
std::string type1_csv(const std::vector<Type1Row>& rows);

}  // namespace efdrcs
