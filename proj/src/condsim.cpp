#include "efdrcs/condsim.hpp"

#include <cmath>
#include <map>
#include <string>
#include <tuple>

#include "efdrcs/error.hpp"
#include "efdrcs/parallel.hpp"
#include "efdrcs/rng.hpp"

namespace efdrcs {

namespace {

void check_data(const AggregatedData& data, std::size_t n) {
    if (data.scheme.pixels() != n) throw InputError("conditional law: Sigma size does not match the scheme");
}

// H Sigma as K x n.
Eigen::MatrixXd left_aggregate(const Eigen::MatrixXd& sigma, const AggregationScheme& scheme) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(scheme.size()), sigma.cols());
    for (std::size_t k = 0; k < scheme.size(); ++k) {
        const auto& b = scheme.block(k);
        for (auto idx : b) out.row(static_cast<Eigen::Index>(k)) += sigma.row(static_cast<Eigen::Index>(idx));
        out.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(b.size());
    }
    return out;
}

// Solves (H Sigma H') x = z, jittering when needed. Jitter is accepted only if
// the unjittered system is still reproduced, i.e. H * mean = Z to 1e-8.
Eigen::VectorXd solve_checked(const Eigen::MatrixXd& inner, const Eigen::LLT<Eigen::MatrixXd>& llt,
                              const Eigen::VectorXd& z) {
    Eigen::VectorXd x = llt.solve(z);
    const double residual = (inner * x - z).norm();
    if (!std::isfinite(residual) || residual > 1e-8 * (1.0 + z.norm()))
        throw NumericalError("H Sigma H' is singular and the data are inconsistent with it");
    return x;
}

Eigen::LLT<Eigen::MatrixXd> factor_inner(Eigen::MatrixXd inner, double scale) {
    Eigen::LLT<Eigen::MatrixXd> llt(inner);
    if (llt.info() == Eigen::Success) return llt;
    inner.diagonal().array() += 1e-10 * scale;
    llt.compute(inner);
    if (llt.info() != Eigen::Success)
        throw NumericalError("H Sigma H' is singular even after jitter; the blocks may be linearly dependent");
    warn("added jitter 1e-10 * tau2 to H Sigma H'");
    return llt;
}

ConditionalLaw point_mass(const AggregatedData& data) {
    const auto& scheme = data.scheme;
    Eigen::VectorXd mean(static_cast<Eigen::Index>(scheme.pixels()));
    for (std::size_t k = 0; k < scheme.size(); ++k) mean(static_cast<Eigen::Index>(scheme.block(k)[0])) = data.values[k];
    Eigen::MatrixXd empty(mean.size(), 0);
    return ConditionalLaw(scheme.n1(), scheme.n2(), std::move(mean), ConditionalLaw::DenseRoot{std::move(empty)});
}

}  // namespace

ConditionalLaw::ConditionalLaw(std::size_t n1, std::size_t n2, Eigen::VectorXd mean, DenseRoot root)
    : n1_(n1), n2_(n2), mean_(std::move(mean)), root_(std::move(root)) {}
ConditionalLaw::ConditionalLaw(std::size_t n1, std::size_t n2, Eigen::VectorXd mean, ProjectedRoot root)
    : n1_(n1), n2_(n2), mean_(std::move(mean)), root_(std::move(root)) {}
ConditionalLaw::ConditionalLaw(std::size_t n1, std::size_t n2, Eigen::VectorXd mean, WaveletRoot root)
    : n1_(n1), n2_(n2), mean_(std::move(mean)), root_(std::move(root)) {}

std::size_t ConditionalLaw::rank() const noexcept {
    if (auto* d = std::get_if<DenseRoot>(&root_)) return static_cast<std::size_t>(d->root.cols());
    return n1_ * n2_;
}

Eigen::VectorXd ConditionalLaw::apply_root(const Eigen::VectorXd& eps) const {
    if (static_cast<std::size_t>(eps.size()) != rank()) throw InputError("apply_root: wrong input length");
    return std::visit(
        [&](const auto& r) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseRoot>) {
                return r.root * eps;
            } else if constexpr (std::is_same_v<T, ProjectedRoot>) {
                const Eigen::VectorXd y = r.chol.template triangularView<Eigen::Lower>() * eps;
                const auto hy = r.scheme->apply(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
                const Eigen::Map<const Eigen::VectorXd> h(hy.data(), static_cast<Eigen::Index>(hy.size()));
                return y - r.gain * h;
            } else {
                const Eigen::VectorXd s = r.sqrt_variance.cwiseProduct(eps);
                const Eigen::VectorXd coeffs = s - r.weighted * r.inner.solve(r.basis.transpose() * s);
                Eigen::VectorXd out(coeffs.size());
                r.transform->inverse(std::span<const double>(coeffs.data(), static_cast<std::size_t>(coeffs.size())),
                                     std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
                return out;
            }
        },
        root_);
}

Eigen::VectorXd ConditionalLaw::standard_normals(std::uint64_t seed, std::uint64_t index) const {
    Philox rng(seed, stream_id({0x636f6e64ULL, index}));
    Eigen::VectorXd eps(static_cast<Eigen::Index>(rank()));
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
    return eps;
}

Eigen::VectorXd ConditionalLaw::draw(std::uint64_t seed, std::uint64_t index) const {
    if (rank() == 0) return mean_;
    return mean_ + apply_root(standard_normals(seed, index));
}

const WaveletTransform& ConditionalLaw::wavelet_transform() const {
    const auto* r = std::get_if<WaveletRoot>(&root_);
    if (!r) throw InputError("conditional law does not use the wavelet model");
    return *r->transform;
}

Eigen::MatrixXd ConditionalLaw::draw_coefficients(std::uint64_t seed, std::uint64_t first, std::size_t count) const {
    const auto* r = std::get_if<WaveletRoot>(&root_);
    if (!r) throw InputError("draw_coefficients requires the wavelet-model law");
    const auto n = static_cast<Eigen::Index>(n1_ * n2_);
    Eigen::MatrixXd s(n, static_cast<Eigen::Index>(count));
    for (std::size_t c = 0; c < count; ++c)
        s.col(static_cast<Eigen::Index>(c)) = r->sqrt_variance.cwiseProduct(standard_normals(seed, first + c));
    const Eigen::MatrixXd w = r->inner.solve(Eigen::MatrixXd(r->basis.transpose() * s));
    s.noalias() -= r->weighted * w;
    s.colwise() += r->mean_coefficients;
    return s;
}

Eigen::MatrixXd ConditionalLaw::covariance() const {
    const auto q = static_cast<Eigen::Index>(rank());
    const auto n = static_cast<Eigen::Index>(n1_ * n2_);
    if (auto* d = std::get_if<DenseRoot>(&root_)) return d->root * d->root.transpose();
    Eigen::MatrixXd root(n, q);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        e(j) = 1.0;
        root.col(j) = apply_root(e);
        e(j) = 0.0;
    }
    return root * root.transpose();
}

ConditionalLaw build_conditional(const Eigen::MatrixXd& sigma, const AggregatedData& data) {
    const auto n = static_cast<std::size_t>(sigma.rows());
    check_data(data, n);
    if (data.scheme.is_complete_identity()) return point_mass(data);
    const auto& scheme = data.scheme;
    const Eigen::MatrixXd hs = left_aggregate(sigma, scheme);            // K x n
    const Eigen::MatrixXd hsh = left_aggregate(hs.transpose(), scheme);  // K x K
    const auto llt = factor_inner(hsh, sigma.diagonal().mean());
    const Eigen::Map<const Eigen::VectorXd> z(data.values.data(), static_cast<Eigen::Index>(data.values.size()));
    Eigen::VectorXd mean = hs.transpose() * solve_checked(hsh, llt, z);

    Eigen::MatrixXd cond = sigma - hs.transpose() * llt.solve(hs);
    cond = 0.5 * (cond + cond.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cond);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of the conditional covariance failed");
    const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    const double top = lambda.size() ? lambda.maxCoeff() : 0.0;
    const double floor = 1e-10 * top;
    std::vector<Eigen::Index> keep;
    if (top > 0.0)
        for (Eigen::Index i = 0; i < lambda.size(); ++i)
            if (lambda(i) > floor) keep.push_back(i);
    Eigen::MatrixXd root(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        root.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]) * std::sqrt(lambda(keep[c]));
    return ConditionalLaw(scheme.n1(), scheme.n2(), std::move(mean), ConditionalLaw::DenseRoot{std::move(root)});
}

ConditionalLaw build_conditional_projected(const Eigen::MatrixXd& sigma, const AggregatedData& data) {
    const auto n = static_cast<std::size_t>(sigma.rows());
    check_data(data, n);
    if (data.scheme.is_complete_identity()) return point_mass(data);
    const auto& scheme = data.scheme;
    const Eigen::MatrixXd hs = left_aggregate(sigma, scheme);
    const Eigen::MatrixXd hsh = left_aggregate(hs.transpose(), scheme);
    const auto llt = factor_inner(hsh, sigma.diagonal().mean());
    Eigen::MatrixXd gain = llt.solve(hs).transpose();  // n x K
    const Eigen::Map<const Eigen::VectorXd> z(data.values.data(), static_cast<Eigen::Index>(data.values.size()));
    Eigen::VectorXd mean = hs.transpose() * solve_checked(hsh, llt, z);
    Eigen::LLT<Eigen::MatrixXd> chol(sigma);
    if (chol.info() != Eigen::Success) {
        Eigen::MatrixXd jittered = sigma;
        jittered.diagonal().array() += 1e-10 * sigma.diagonal().mean();
        chol.compute(jittered);
        if (chol.info() != Eigen::Success) throw NumericalError("Cholesky factorization of Sigma failed");
        warn("added jitter 1e-10 * tau2 to Sigma");
    }
    ConditionalLaw::ProjectedRoot root{Eigen::MatrixXd(chol.matrixL()), std::move(gain),
                                       std::make_shared<const AggregationScheme>(scheme)};
    return ConditionalLaw(scheme.n1(), scheme.n2(), std::move(mean), std::move(root));
}

Eigen::MatrixXd wavelet_block_basis(const WaveletTransform& transform, const AggregationScheme& scheme) {
    const auto& layout = transform.layout();
    const std::size_t n = layout.size();
    const long period = 1L << layout.levels();
    const BlockShapes shapes = index_block_shapes(scheme);
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(scheme.size()));
    // (shape, anchor row mod 2^J, anchor col mod 2^J) -> representative block
    std::map<std::tuple<std::size_t, long, long>, std::size_t> representative;
    std::vector<double> image(n);
    for (std::size_t k = 0; k < scheme.size(); ++k) {
        const auto& a = shapes.anchors[k];
        const auto key = std::tuple{a.shape, a.row % period, a.col % period};
        auto col = std::span<double>(basis.col(static_cast<Eigen::Index>(k)).data(), n);
        if (auto it = representative.find(key); it != representative.end()) {
            const auto& ra = shapes.anchors[it->second];
            const auto src = std::span<const double>(basis.col(static_cast<Eigen::Index>(it->second)).data(), n);
            shift_coefficients(layout, src, a.row - ra.row, a.col - ra.col, col);
            continue;
        }
        std::fill(image.begin(), image.end(), 0.0);
        const auto& b = scheme.block(k);
        for (auto idx : b) image[idx] = 1.0 / static_cast<double>(b.size());
        transform.forward(image, col);
        representative.emplace(key, k);
    }
    return basis;
}

ConditionalLaw build_conditional_wavelet(std::span<const double> theta, int levels, WaveletFilter filter,
                                         const AggregatedData& data) {
    const auto& scheme = data.scheme;
    auto transform = std::make_shared<const WaveletTransform>(scheme.n1(), scheme.n2(), levels, filter);
    const auto& layout = transform->layout();
    if (theta.size() != layout.class_count())
        throw InputError("conditional law: theta must have 3J+1 entries");
    for (double t : theta)
        if (!(t > 0.0)) throw InputError("conditional law: every theta_k must be positive");
    if (scheme.is_complete_identity()) return point_mass(data);

    const auto n = static_cast<Eigen::Index>(layout.size());
    Eigen::VectorXd variance(n);
    for (std::size_t c = 0; c < layout.class_count(); ++c)
        variance.segment(static_cast<Eigen::Index>(layout.class_offset(c)),
                         static_cast<Eigen::Index>(layout.class_size(c)))
            .setConstant(theta[c]);

    // Each block touches few coefficients, so W H' is stored sparse.
    Eigen::SparseMatrix<double> basis = wavelet_block_basis(*transform, scheme).sparseView();
    Eigen::SparseMatrix<double> weighted = variance.asDiagonal() * basis;
    const Eigen::MatrixXd inner = Eigen::MatrixXd(Eigen::SparseMatrix<double>(basis.transpose()) * weighted);
    auto llt = factor_inner(inner, variance.mean());
    const Eigen::Map<const Eigen::VectorXd> z(data.values.data(), static_cast<Eigen::Index>(data.values.size()));
    Eigen::VectorXd mean_coeffs = weighted * solve_checked(inner, llt, z);
    Eigen::VectorXd mean(n);
    transform->inverse(std::span<const double>(mean_coeffs.data(), static_cast<std::size_t>(n)),
                       std::span<double>(mean.data(), static_cast<std::size_t>(n)));
    ConditionalLaw::WaveletRoot root{std::move(transform), variance.cwiseSqrt(), std::move(basis),
                                     std::move(weighted), std::move(llt), std::move(mean_coeffs)};
    return ConditionalLaw(scheme.n1(), scheme.n2(), std::move(mean), std::move(root));
}

std::vector<Grid2D> sample(const ConditionalLaw& law, std::size_t count, std::uint64_t seed, int jobs) {
    if (count < 1) throw InputError("sample: M must be >= 1");
    std::vector<std::vector<double>> draws(count);
    parallel_for(count, jobs, [&](std::size_t i) {
        const Eigen::VectorXd x = law.draw(seed, i);
        draws[i].assign(x.data(), x.data() + x.size());
    });
    std::vector<Grid2D> out;
    out.reserve(count);
    for (auto& d : draws) out.emplace_back(law.n1(), law.n2(), std::move(d));
    return out;
}

}  // namespace efdrcs
