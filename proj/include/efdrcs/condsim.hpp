#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "efdrcs/grid.hpp"
#include "efdrcs/wavelet.hpp"

namespace efdrcs {

/// Gaussian law of the fine-resolution field given aggregated data:
///   mean = Sigma H' (H Sigma H')^-1 Z,  cov = Sigma - Sigma H' (H Sigma H')^-1 H Sigma.
///
/// A draw is mean + R eps with eps standard Gaussian of length rank() and
/// R R' equal to the conditional covariance. R is held in one of three forms:
/// an explicit eigen-root, a projected Cholesky root (I - A H) L, or the
/// wavelet-model root where L = W' V^(1/2) is never materialized.
class ConditionalLaw {
public:
    struct DenseRoot {
        Eigen::MatrixXd root;  // n x q
    };
    struct ProjectedRoot {
        Eigen::MatrixXd chol;     // n x n lower factor of Sigma
        Eigen::MatrixXd gain;     // n x K, Sigma H' (H Sigma H')^-1
        std::shared_ptr<const AggregationScheme> scheme;
    };
    struct WaveletRoot {
        std::shared_ptr<const WaveletTransform> transform;
        Eigen::VectorXd sqrt_variance;  // per coefficient
        Eigen::SparseMatrix<double> basis;     // n x K, W H'
        Eigen::SparseMatrix<double> weighted;  // n x K, V W H'
        Eigen::LLT<Eigen::MatrixXd> inner;  // H Sigma H' = (W H')' V (W H')
        Eigen::VectorXd mean_coefficients;
    };

    ConditionalLaw(std::size_t n1, std::size_t n2, Eigen::VectorXd mean, DenseRoot root);
    ConditionalLaw(std::size_t n1, std::size_t n2, Eigen::VectorXd mean, ProjectedRoot root);
    ConditionalLaw(std::size_t n1, std::size_t n2, Eigen::VectorXd mean, WaveletRoot root);

    std::size_t n1() const noexcept { return n1_; }
    std::size_t n2() const noexcept { return n2_; }
    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    /// Number of Gaussian inputs per draw (q for the eigen-root form).
    std::size_t rank() const noexcept;
    bool is_point_mass() const noexcept { return rank() == 0; }
    bool has_wavelet_root() const noexcept { return std::holds_alternative<WaveletRoot>(root_); }

    /// Applies the root to a vector of length rank().
    Eigen::VectorXd apply_root(const Eigen::VectorXd& eps) const;

    /// Draw `index` of the stream keyed by `seed`; independent of other draws.
    Eigen::VectorXd draw(std::uint64_t seed, std::uint64_t index) const;

    /// Draws with indices [first, first + count) in the wavelet domain of the
    /// model (columns). Only valid for the wavelet-model form.
    Eigen::MatrixXd draw_coefficients(std::uint64_t seed, std::uint64_t first, std::size_t count) const;
    const WaveletTransform& wavelet_transform() const;

    /// Dense conditional covariance R R'; for checks on small problems.
    Eigen::MatrixXd covariance() const;

private:
    Eigen::VectorXd standard_normals(std::uint64_t seed, std::uint64_t index) const;

    std::size_t n1_;
    std::size_t n2_;
    Eigen::VectorXd mean_;
    std::variant<DenseRoot, ProjectedRoot, WaveletRoot> root_;
};

/// Exact law from a dense Sigma, with the root taken from a symmetric
/// eigendecomposition (eigenvalues clamped at zero; columns kept while
/// lambda > 1e-10 * lambda_max).
ConditionalLaw build_conditional(const Eigen::MatrixXd& sigma, const AggregatedData& data);

/// Same law from a dense Sigma using the root (I - A H) L, L = chol(Sigma).
/// Costs one n x n Cholesky instead of an n x n eigendecomposition.
ConditionalLaw build_conditional_projected(const Eigen::MatrixXd& sigma, const AggregatedData& data);

/// Law under the wavelet-diagonal model Sigma(theta) = W' V(theta) W.
ConditionalLaw build_conditional_wavelet(std::span<const double> theta, int levels, WaveletFilter filter,
                                         const AggregatedData& data);

/// M draws as fine-resolution grids; draw i depends only on (seed, i).
std::vector<Grid2D> sample(const ConditionalLaw& law, std::size_t count, std::uint64_t seed, int jobs = 1);

/// W H' computed with one transform per translation class of blocks.
Eigen::MatrixXd wavelet_block_basis(const WaveletTransform& transform, const AggregationScheme& scheme);

}  // namespace efdrcs
