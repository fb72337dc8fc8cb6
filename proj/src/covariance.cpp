#include "efdrcs/covariance.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include <boost/math/tools/minima.hpp>

#include "efdrcs/error.hpp"

namespace efdrcs {

CovarianceKind parse_covariance_kind(std::string_view name) {
    if (name == "white") return CovarianceKind::white;
    if (name == "exp" || name == "exponential") return CovarianceKind::exponential;
    if (name == "exp-nugget" || name == "exponential+nugget") return CovarianceKind::exponential_nugget;
    if (name == "matern" || name == "matern+nugget") return CovarianceKind::matern_nugget;
    throw InputError("unknown covariance family '" + std::string(name) + "'");
}

std::string_view covariance_kind_name(CovarianceKind kind) {
    switch (kind) {
        case CovarianceKind::white: return "white";
        case CovarianceKind::exponential: return "exp";
        case CovarianceKind::exponential_nugget: return "exp-nugget";
        case CovarianceKind::matern_nugget: return "matern";
    }
    return "?";
}

void CovarianceFamily::validate() const {
    if (!(tau2 > 0.0)) throw InputError("covariance: tau2 must be positive");
    if (kind != CovarianceKind::white && !(phi > 0.0)) throw InputError("covariance: phi must be positive");
    if (kind == CovarianceKind::matern_nugget && !(nu > 0.0)) throw InputError("covariance: nu must be positive");
    if (has_nugget() && !(nugget >= 0.0)) throw InputError("covariance: nugget must be non-negative");
}

double CovarianceFamily::correlation(double d) const {
    if (d <= 0.0) return 1.0 + (has_nugget() ? nugget : 0.0);
    switch (kind) {
        case CovarianceKind::white: return 0.0;
        case CovarianceKind::exponential:
        case CovarianceKind::exponential_nugget: return std::exp(-d / phi);
        case CovarianceKind::matern_nugget: {
            if (nu == 0.5) return std::exp(-d / phi);
            const double x = std::sqrt(2.0 * nu) * d / phi;
            if (x > 700.0) return 0.0;
            return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
        }
    }
    return 0.0;
}

Eigen::MatrixXd cov_matrix(const CovarianceFamily& family, std::size_t n1, std::size_t n2, double hx, double hy,
                           std::size_t max_pixels) {
    family.validate();
    const std::size_t n = n1 * n2;
    if (n > max_pixels)
        throw InputError("cov_matrix: " + std::to_string(n) + " pixels exceeds the dense limit of " +
                         std::to_string(max_pixels));
    std::vector<double> lag(n);
    for (std::size_t dr = 0; dr < n1; ++dr)
        for (std::size_t dc = 0; dc < n2; ++dc)
            lag[dr * n2 + dc] = family(std::hypot(static_cast<double>(dr) * hx, static_cast<double>(dc) * hy));
    Eigen::MatrixXd sigma(n, n);
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t ar = a / n2, ac = a % n2;
        for (std::size_t b = 0; b <= a; ++b) {
            const std::size_t br = b / n2, bc = b % n2;
            const std::size_t dr = ar > br ? ar - br : br - ar;
            const std::size_t dc = ac > bc ? ac - bc : bc - ac;
            sigma(a, b) = sigma(b, a) = lag[dr * n2 + dc];
        }
    }
    return sigma;
}

namespace {

// Weights A_k(|dr|, |dc|) = sum over pixel pairs at that lag of (W_k' W_k)(a, b),
// so that tr(W_k Omega W_k') = sum_lag A_k(lag) * Omega(lag).
std::vector<std::vector<double>> compute_class_lag_weights(std::size_t n1, std::size_t n2, int levels,
                                                           WaveletFilter filter) {
    const WaveletTransform transform(n1, n2, levels, filter);
    const auto& layout = transform.layout();
    const std::size_t n = n1 * n2;
    const std::size_t classes = layout.class_count();
    const std::size_t period = std::size_t{1} << levels;
    std::vector<std::vector<double>> weights(classes, std::vector<double>(n, 0.0));

    std::vector<double> unit(n), coeffs(n), kept(n), column(n);
    // proj[a * classes + k] = (P_k e_b0)(a)
    std::vector<double> proj(n * classes);
    std::vector<double> acc(n * classes);
    for (std::size_t b0r = 0; b0r < period; ++b0r)
        for (std::size_t b0c = 0; b0c < period; ++b0c) {
            std::fill(unit.begin(), unit.end(), 0.0);
            unit[b0r * n2 + b0c] = 1.0;
            transform.forward(unit, coeffs);
            for (std::size_t k = 0; k < classes; ++k) {
                std::fill(kept.begin(), kept.end(), 0.0);
                const auto off = layout.class_offset(k);
                std::copy_n(coeffs.begin() + off, layout.class_size(k), kept.begin() + off);
                transform.inverse(kept, column);
                for (std::size_t a = 0; a < n; ++a) proj[a * classes + k] = column[a];
            }
            std::fill(acc.begin(), acc.end(), 0.0);
            // Every column b = b0 + period * m is the periodic shift of column b0.
            for (std::size_t mr = 0; mr < n1 / period; ++mr)
                for (std::size_t mc = 0; mc < n2 / period; ++mc) {
                    const std::size_t br = b0r + period * mr;
                    const std::size_t bc = b0c + period * mc;
                    for (std::size_t ar = 0; ar < n1; ++ar) {
                        const std::size_t sr = (ar + n1 - period * mr) % n1;
                        const std::size_t dr = ar > br ? ar - br : br - ar;
                        for (std::size_t ac = 0; ac < n2; ++ac) {
                            const std::size_t sc = (ac + n2 - period * mc) % n2;
                            const std::size_t dc = ac > bc ? ac - bc : bc - ac;
                            const double* src = &proj[(sr * n2 + sc) * classes];
                            double* dst = &acc[(dr * n2 + dc) * classes];
                            for (std::size_t k = 0; k < classes; ++k) dst[k] += src[k];
                        }
                    }
                }
            for (std::size_t lag = 0; lag < n; ++lag)
                for (std::size_t k = 0; k < classes; ++k) weights[k][lag] += acc[lag * classes + k];
        }
    return weights;
}

const std::vector<std::vector<double>>& class_lag_weights(std::size_t n1, std::size_t n2, int levels,
                                                          WaveletFilter filter) {
    using Key = std::tuple<std::size_t, std::size_t, int, int>;
    static std::mutex mutex;
    static std::map<Key, std::vector<std::vector<double>>> cache;
    const Key key{n1, n2, levels, static_cast<int>(filter)};
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    auto weights = compute_class_lag_weights(n1, n2, levels, filter);
    std::lock_guard lock(mutex);
    return cache.try_emplace(key, std::move(weights)).first->second;
}

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

std::vector<double> wavelet_class_variances(const CovarianceFamily& family, std::size_t n1, std::size_t n2,
                                            int levels, WaveletFilter filter, double hx, double hy) {
    family.validate();
    const PyramidLayout layout(n1, n2, levels);
    std::vector<double> theta(layout.class_count(), family.tau2);
    if (family.kind == CovarianceKind::white) return theta;
    const auto& weights = class_lag_weights(n1, n2, levels, filter);
    std::vector<double> lag(n1 * n2);
    for (std::size_t dr = 0; dr < n1; ++dr)
        for (std::size_t dc = 0; dc < n2; ++dc)
            lag[dr * n2 + dc] = family.correlation(std::hypot(static_cast<double>(dr) * hx, static_cast<double>(dc) * hy));
    for (std::size_t k = 0; k < theta.size(); ++k) {
        double trace = 0.0;
        for (std::size_t i = 0; i < lag.size(); ++i) trace += weights[k][i] * lag[i];
        theta[k] = family.tau2 * trace / static_cast<double>(layout.class_size(k));
    }
    return theta;
}

BlockCovarianceAssembler::BlockCovarianceAssembler(const AggregationScheme& scheme, double hx, double hy)
    : n1_(scheme.n1()), n2_(scheme.n2()), k_(scheme.size()), hx_(hx), hy_(hy) {
    singletons_ = std::all_of(scheme.blocks().begin(), scheme.blocks().end(),
                              [](const auto& b) { return b.size() == 1; });
    if (singletons_) {
        rows_.reserve(k_);
        cols_.reserve(k_);
        for (const auto& b : scheme.blocks()) {
            rows_.push_back(b[0] / n2_);
            cols_.push_back(b[0] % n2_);
        }
        return;
    }
    const BlockShapes shapes = index_block_shapes(scheme);
    std::map<std::tuple<std::size_t, std::size_t, long, long>, std::uint32_t> lookup;
    pair_class_.assign(k_ * k_, 0);
    std::vector<double> scratch(n1_ * n2_, 0.0);
    std::vector<std::uint32_t> touched;
    for (std::size_t a = 0; a < k_; ++a)
        for (std::size_t b = a; b < k_; ++b) {
            const auto& pa = shapes.anchors[a];
            const auto& pb = shapes.anchors[b];
            const auto key = std::tuple{pa.shape, pb.shape, pb.row - pa.row, pb.col - pa.col};
            auto [it, inserted] = lookup.try_emplace(key, static_cast<std::uint32_t>(classes_.size()));
            if (inserted) {
                const auto& oa = shapes.offsets[pa.shape];
                const auto& ob = shapes.offsets[pb.shape];
                const double w = 1.0 / (static_cast<double>(oa.size()) * static_cast<double>(ob.size()));
                touched.clear();
                for (const auto& [ra, ca] : oa)
                    for (const auto& [rb, cb] : ob) {
                        const long dr = std::labs(pb.row + rb - pa.row - ra);
                        const long dc = std::labs(pb.col + cb - pa.col - ca);
                        const auto idx = static_cast<std::uint32_t>(dr * static_cast<long>(n2_) + dc);
                        if (scratch[idx] == 0.0) touched.push_back(idx);
                        scratch[idx] += w;
                    }
                std::vector<std::pair<std::uint32_t, double>> hist;
                hist.reserve(touched.size());
                for (auto idx : touched) {
                    hist.emplace_back(idx, scratch[idx]);
                    scratch[idx] = 0.0;
                }
                classes_.push_back(std::move(hist));
            }
            pair_class_[a * k_ + b] = it->second;
        }
}

std::vector<double> BlockCovarianceAssembler::lag_table(const CovarianceFamily& family) const {
    std::vector<double> lag(n1_ * n2_);
    for (std::size_t dr = 0; dr < n1_; ++dr)
        for (std::size_t dc = 0; dc < n2_; ++dc)
            lag[dr * n2_ + dc] =
                family.correlation(std::hypot(static_cast<double>(dr) * hx_, static_cast<double>(dc) * hy_));
    return lag;
}

Eigen::MatrixXd BlockCovarianceAssembler::correlation(const CovarianceFamily& family) const {
    const auto lag = lag_table(family);
    Eigen::MatrixXd s(k_, k_);
    if (singletons_) {
        for (std::size_t a = 0; a < k_; ++a)
            for (std::size_t b = 0; b <= a; ++b) {
                const std::size_t dr = rows_[a] > rows_[b] ? rows_[a] - rows_[b] : rows_[b] - rows_[a];
                const std::size_t dc = cols_[a] > cols_[b] ? cols_[a] - cols_[b] : cols_[b] - cols_[a];
                s(a, b) = s(b, a) = lag[dr * n2_ + dc];
            }
        return s;
    }
    std::vector<double> values(classes_.size());
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        double v = 0.0;
        for (const auto& [idx, w] : classes_[c]) v += w * lag[idx];
        values[c] = v;
    }
    for (std::size_t a = 0; a < k_; ++a)
        for (std::size_t b = a; b < k_; ++b) s(a, b) = s(b, a) = values[pair_class_[a * k_ + b]];
    return s;
}

namespace {

// Cholesky with escalating diagonal jitter; returns false if it never succeeds.
bool factorize(Eigen::MatrixXd& s, Eigen::LLT<Eigen::MatrixXd>& llt, bool warn_on_jitter) {
    llt.compute(s);
    if (llt.info() == Eigen::Success) return true;
    const double scale = s.diagonal().mean();
    for (double rel = 1e-10; rel <= 1e-6; rel *= 100.0) {
        s.diagonal().array() += rel * scale;
        llt.compute(s);
        if (llt.info() == Eigen::Success) {
            if (warn_on_jitter) warn("added diagonal jitter " + std::to_string(rel) + " to H Omega H'");
            return true;
        }
    }
    return false;
}

}  // namespace

double profile_objective(const BlockCovarianceAssembler& assembler, std::span<const double> data,
                         const CovarianceFamily& family, double* quad) {
    Eigen::MatrixXd s = assembler.correlation(family);
    Eigen::LLT<Eigen::MatrixXd> llt;
    if (!factorize(s, llt, false)) return std::numeric_limits<double>::infinity();
    const Eigen::Map<const Eigen::VectorXd> z(data.data(), static_cast<Eigen::Index>(data.size()));
    const Eigen::VectorXd w = llt.matrixL().solve(z);
    const double q = w.squaredNorm();
    if (quad) *quad = q;
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double k = static_cast<double>(data.size());
    if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
    return 0.5 * logdet + 0.5 * k * std::log(q);
}

double neg_log_likelihood(const AggregatedData& data, const CovarianceFamily& family, double hx, double hy) {
    family.validate();
    const BlockCovarianceAssembler assembler(data.scheme, hx, hy);
    Eigen::MatrixXd s = assembler.correlation(family) * family.tau2;
    Eigen::LLT<Eigen::MatrixXd> llt;
    if (!factorize(s, llt, true)) throw NumericalError("neg_log_likelihood: H Sigma H' is singular");
    const Eigen::Map<const Eigen::VectorXd> z(data.values.data(), static_cast<Eigen::Index>(data.values.size()));
    const double q = llt.matrixL().solve(z).squaredNorm();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return 0.5 * logdet + 0.5 * q + 0.5 * static_cast<double>(data.values.size()) * kLog2Pi;
}

FittedCovariance ml_fit(const AggregatedData& data, CovarianceKind kind, int levels, WaveletFilter filter,
                        const MlOptions& options) {
    const std::size_t k = data.values.size();
    if (k < 2) throw InputError("ml_fit: need at least two aggregated values");
    const PyramidLayout layout(data.scheme.n1(), data.scheme.n2(), levels);
    const BlockCovarianceAssembler assembler(data.scheme, options.spacing_x, options.spacing_y);

    CovarianceFamily family;
    family.kind = kind;
    family.nu = options.nu;
    FittedCovariance fit;
    fit.levels = levels;
    fit.filter = filter;

    const double lo_phi = std::log(options.phi_min);
    const double hi_phi = std::log(options.phi_max);
    auto objective = [&](const CovarianceFamily& f) { return profile_objective(assembler, data.values, f); };

    switch (kind) {
        case CovarianceKind::white: fit.evaluations = 1; break;
        case CovarianceKind::exponential: {
            // Coarse scan of log(phi) then Brent on the bracket around the best node.
            constexpr int kNodes = 12;
            std::vector<double> nodes(kNodes), values(kNodes);
            for (int i = 0; i < kNodes; ++i) {
                nodes[i] = lo_phi + (hi_phi - lo_phi) * i / (kNodes - 1);
                family.phi = std::exp(nodes[i]);
                values[i] = objective(family);
            }
            const auto best = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
            const double a = nodes[std::max(best - 1, 0)];
            const double b = nodes[std::min(best + 1, kNodes - 1)];
            boost::uintmax_t iters = static_cast<boost::uintmax_t>(options.max_evaluations);
            auto [x, fx] = boost::math::tools::brent_find_minima(
                [&](double lp) {
                    family.phi = std::exp(lp);
                    return objective(family);
                },
                a, b, 40, iters);
            if (values[best] < fx) {
                x = nodes[best];
                fx = values[best];
            }
            family.phi = std::exp(x);
            fit.evaluations = kNodes + static_cast<int>(iters);
            fit.converged = iters < static_cast<boost::uintmax_t>(options.max_evaluations);
            break;
        }
        case CovarianceKind::exponential_nugget:
        case CovarianceKind::matern_nugget: {
            const bool matern = kind == CovarianceKind::matern_nugget;
            std::vector<double> lower{lo_phi, std::log(1e-8)};
            std::vector<double> upper{hi_phi, std::log(1e2)};
            if (matern) {
                lower.push_back(std::log(0.1));
                upper.push_back(std::log(4.0));
            }
            auto unpack = [&](const std::vector<double>& x) {
                CovarianceFamily f = family;
                f.phi = std::exp(x[0]);
                f.nugget = std::exp(x[1]);
                if (matern) f.nu = std::exp(x[2]);
                return f;
            };
            SimplexResult best{{}, std::numeric_limits<double>::infinity(), 0, false};
            int total = 0;
            for (double phi0 : {1.0, 4.0, 16.0}) {
                std::vector<double> start{std::log(phi0), std::log(0.1)};
                if (matern) start.push_back(std::log(0.5));
                auto r = nelder_mead([&](const std::vector<double>& x) { return objective(unpack(x)); }, start,
                                     lower, upper, 0.5, options.tolerance, options.max_evaluations);
                total += r.evaluations;
                if (r.value < best.value) best = r;
            }
            family = unpack(best.x);
            fit.evaluations = total;
            fit.converged = best.converged;
            break;
        }
    }

    double quad = 0.0;
    const double obj = profile_objective(assembler, data.values, family, &quad);
    if (!std::isfinite(obj)) throw NumericalError("ml_fit: H Omega H' is singular at the optimum");
    if (!fit.converged) warn("ml_fit: optimizer did not converge; reporting the best point found");
    family.tau2 = quad / static_cast<double>(k);
    const double kd = static_cast<double>(k);
    fit.neg_log_profile = obj + 0.5 * kd * (1.0 - std::log(kd) + kLog2Pi);
    fit.family = family;
    fit.theta = wavelet_class_variances(family, layout.n1(), layout.n2(), levels, filter, options.spacing_x,
                                        options.spacing_y);
    return fit;
}

}  // namespace efdrcs
