#include "efdrcs/combine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include <boost/math/special_functions/gamma.hpp>

#include "efdrcs/error.hpp"
#include "efdrcs/normal.hpp"
#include "efdrcs/rng.hpp"

namespace efdrcs {

namespace {

constexpr double kPFloor = 1e-300;
constexpr double kRhoCeiling = 1.0 - 1e-9;
constexpr double kRMax = 0.999;
constexpr int kMapNodes = 1000;  // grid step 0.001 on [0, 1]

double clamp_rho(double rho) { return std::clamp(rho, 0.0, kRhoCeiling); }

void check_pvalues(std::span<const double> pvalues) {
    if (pvalues.empty()) throw InputError("combine: need at least one p-value");
    for (double p : pvalues)
        if (!(p > 0.0 && p <= 1.0)) throw InputError("combine: p-values must lie in (0, 1]");
}

double simulate_rho(double r, std::size_t samples, std::uint64_t seed) {
    if (r == 0.0) return 0.0;
    Philox rng(seed, stream_id({0x636f70756c61ULL, samples}));
    const double s = std::sqrt(1.0 - r * r);
    double m1 = 0, m2 = 0, c11 = 0, c22 = 0, c12 = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double x1 = rng.normal();
        const double x2 = r * x1 + s * rng.normal();
        // t = -2 log(1 - Phi(x)) is the Exp(1/2) variable whose copula score is x
        const double t1 = -2.0 * std::log(std::max(normal_sf(x1), kPFloor));
        const double t2 = -2.0 * std::log(std::max(normal_sf(x2), kPFloor));
        // Welford update of means and co-moments
        const double n = static_cast<double>(i + 1);
        const double d1 = t1 - m1, d2 = t2 - m2;
        m1 += d1 / n;
        m2 += d2 / n;
        c11 += d1 * (t1 - m1);
        c22 += d2 * (t2 - m2);
        c12 += d1 * (t2 - m2);
    }
    return c12 / std::sqrt(c11 * c22);
}

double rho_node(int node, std::size_t samples, std::uint64_t seed) {
    using Key = std::tuple<std::uint64_t, std::size_t, int>;
    static std::mutex mutex;
    static std::map<Key, double> cache;
    const Key key{seed, samples, node};
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    const double v = simulate_rho(static_cast<double>(node) / kMapNodes, samples, seed);
    std::lock_guard lock(mutex);
    return cache.try_emplace(key, v).first->second;
}

// Pair sums entering the composite likelihood, with scores a_i = Phi^-1(1 - p_i).
struct CopulaSums {
    double pairs;
    double squares;  // sum_{i<j} (a_i^2 + a_j^2)
    double cross;    // sum_{i<j} a_i a_j
};

CopulaSums copula_sums(std::span<const double> t) {
    const double m = static_cast<double>(t.size());
    double s = 0, s2 = 0;
    for (double x : t) {
        const double a = normal_quantile_upper(std::max(std::exp(-0.5 * x), kPFloor));
        s += a;
        s2 += a * a;
    }
    return {0.5 * m * (m - 1.0), (m - 1.0) * s2, 0.5 * (s * s - s2)};
}

double composite(const CopulaSums& c, double r) {
    const double one_minus = 1.0 - r * r;
    return -0.5 * c.pairs * std::log(one_minus) - (r * r * c.squares - 2.0 * r * c.cross) / (2.0 * one_minus);
}

}  // namespace

CombineMethod parse_combine_method(std::string_view name) {
    if (name == "cpl" || name == "CPL") return CombineMethod::cpl;
    if (name == "mom" || name == "MOM") return CombineMethod::mom;
    if (name == "nve" || name == "NVE") return CombineMethod::nve;
    if (name == "fisher" || name == "FISHER") return CombineMethod::fisher;
    throw InputError("unknown combination method '" + std::string(name) + "'");
}

std::string_view combine_method_name(CombineMethod method) {
    switch (method) {
        case CombineMethod::cpl: return "cpl";
        case CombineMethod::mom: return "mom";
        case CombineMethod::nve: return "nve";
        case CombineMethod::fisher: return "fisher";
    }
    return "?";
}

double fisher_T(std::span<const double> pvalues) {
    check_pvalues(pvalues);
    double t = 0.0;
    for (double p : pvalues) t -= 2.0 * std::log(std::max(p, kPFloor));
    return t;
}

double mom_rho_unclamped(std::span<const double> t) {
    const std::size_t m = t.size();
    if (m < 2) throw InputError("mom_rho: need M >= 2");
    // sum_{i<j} (t_i - t_j)^2 = M sum t^2 - (sum t)^2
    double s = 0, s2 = 0, dev = 0;
    for (double x : t) {
        s += x;
        s2 += x * x;
        dev += (x - 2.0) * (x - 2.0);
    }
    const double pair = static_cast<double>(m) * s2 - s * s;
    if (!(dev > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - (std::max(pair, 0.0) / static_cast<double>(m - 1)) / dev;
}

double mom_rho(std::span<const double> t) {
    const double rho = mom_rho_unclamped(t);
    if (std::isnan(rho)) {
        warn("mom_rho: every t_i equals 2; rho set to the upper clamp");
        return kRhoCeiling;
    }
    return clamp_rho(rho);
}

double copula_log_likelihood(std::span<const double> t, double r) {
    if (t.size() < 2) throw InputError("copula likelihood: need M >= 2");
    if (!(r >= 0.0 && r < 1.0)) throw InputError("copula likelihood: r must lie in [0, 1)");
    return composite(copula_sums(t), r);
}

double copula_r(std::span<const double> t) {
    if (t.size() < 2) throw InputError("copula_r: need M >= 2");
    const auto sums = copula_sums(t);
    auto f = [&](double r) { return composite(sums, r); };
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = 0.0, hi = kRMax;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > 1e-7) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    double best = 0.5 * (lo + hi);
    double fbest = f(best);
    for (double edge : {0.0, kRMax}) {
        const double fe = f(edge);
        if (fe > fbest) {
            best = edge;
            fbest = fe;
        }
    }
    if (!std::isfinite(fbest)) {
        warn("copula_r: composite likelihood is not finite; r set to 0");
        return 0.0;
    }
    return best;
}

double copula_rho_map(double r, std::size_t mc_samples, std::uint64_t seed) {
    if (!(r >= 0.0 && r < 1.0)) throw InputError("copula_rho_map: r must lie in [0, 1)");
    if (mc_samples < 2) throw InputError("copula_rho_map: need at least 2 Monte Carlo samples");
    const double pos = r * kMapNodes;
    const int lo = static_cast<int>(std::floor(pos));
    const double frac = pos - lo;
    const double v0 = rho_node(lo, mc_samples, seed);
    if (frac == 0.0) return v0;
    return (1.0 - frac) * v0 + frac * rho_node(lo + 1, mc_samples, seed);
}

double copula_rho(std::span<const double> t, std::size_t mc_samples, std::uint64_t seed) {
    return clamp_rho(copula_rho_map(copula_r(t), mc_samples, seed));
}

GammaParams gamma_params(double rho, std::size_t m) {
    if (m < 1) throw InputError("gamma_params: M must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw InputError("gamma_params: rho must lie in [0, 1)");
    const double inflation = 1.0 + static_cast<double>(m - 1) * rho;
    // a is built from b so that a == 2M * b holds bitwise
    const double b = 0.5 / inflation;
    return {2.0 * static_cast<double>(m) * b, b};
}

IntraClassEigenvalues intra_class_eigenvalues(double sigma2, double rho, std::size_t m) {
    if (m < 1) throw InputError("intra_class_eigenvalues: M must be >= 1");
    return {sigma2 * (1.0 + static_cast<double>(m - 1) * rho), sigma2 * (1.0 - rho)};
}

double gamma_sf(double T, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw InputError("gamma_sf: a and b must be positive");
    if (!(T >= 0.0)) throw InputError("gamma_sf: T must be non-negative");
    if (T == 0.0) return 1.0;
    return boost::math::gamma_q(a, b * T);
}

CombineResult combine(std::span<const double> pvalues, CombineMethod method, double alpha, std::uint64_t seed,
                      std::size_t mc_samples) {
    check_pvalues(pvalues);
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("combine: alpha must lie in (0, 1)");
    const std::size_t m = pvalues.size();
    CombineResult out;
    out.method = method;
    out.T = fisher_T(pvalues);
    if (method == CombineMethod::nve) {
        double s = 0.0;
        for (double p : pvalues) s += p;
        out.p_final = s / static_cast<double>(m);
    } else {
        double rho = 0.0;
        if (m >= 2 && method != CombineMethod::fisher) {
            std::vector<double> t(m);
            for (std::size_t i = 0; i < m; ++i) t[i] = -2.0 * std::log(std::max(pvalues[i], kPFloor));
            if (method == CombineMethod::mom) {
                rho = mom_rho(t);
            } else {
                out.r_hat = copula_r(t);
                rho = clamp_rho(copula_rho_map(*out.r_hat, mc_samples, seed));
            }
        }
        const auto g = gamma_params(rho, m);
        out.rho_hat = rho;
        out.a = g.a;
        out.b = g.b;
        out.p_final = std::clamp(gamma_sf(out.T, g.a, g.b), kPFloor, 1.0);
    }
    out.reject = out.p_final < alpha;
    return out;
}

}  // namespace efdrcs
