#include "efdrcs/efdr.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <tuple>
#include <string>

#include "efdrcs/error.hpp"
#include "efdrcs/normal.hpp"
#include "efdrcs/rng.hpp"

namespace efdrcs {

namespace {

constexpr double kMadToSigma = 1.4826;

double median_in_place(std::vector<double>& v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

std::size_t wrap(long v, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
}

std::vector<double> pvalues_of(std::span<const double> z, std::span<const std::size_t> idx) {
    std::vector<double> p(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) p[i] = two_sided_p(z[idx[i]]);
    return p;
}

// Retained coefficients in standardized units for one candidate n_tests.
std::vector<double> fitted_z(std::span<const double> z, std::span<const std::size_t> order, std::size_t m,
                             double alpha) {
    std::vector<double> out(z.size(), 0.0);
    const auto tested = order.first(std::min(m, order.size()));
    const auto p = pvalues_of(z, tested);
    for (auto pos : bh_reject(p, alpha)) out[tested[pos]] = z[tested[pos]];
    return out;
}

std::size_t choose_n_tests_gdf(const PyramidLayout& layout, std::span<const double> z, const EfdrConfig& config,
                               std::span<const std::uint8_t> excluded) {
    constexpr int kPerturbations = 20;
    constexpr double kTau = 0.1;
    const std::array<std::size_t, 4> candidates = {25, 50, 100, 200};
    std::size_t best = config.n_tests;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> zp(z.size());
    for (std::size_t m : candidates) {
        if (m > z.size()) continue;
        const auto order = order_hypotheses(layout, z, config.neighbor_weight, 0, config.spatial_neighbors, excluded);
        const auto fit = fitted_z(z, order, m, config.alpha);
        double rss = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) rss += (z[i] - fit[i]) * (z[i] - fit[i]);
        double gdf = 0.0;
        for (int r = 0; r < kPerturbations; ++r) {
            Philox rng(config.gdf_seed, stream_id({0x676466ULL, static_cast<std::uint64_t>(r)}));
            std::vector<double> delta(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                delta[i] = kTau * rng.normal();
                zp[i] = z[i] + delta[i];
            }
            const auto fp = fitted_z(
                zp, order_hypotheses(layout, zp, config.neighbor_weight, 0, config.spatial_neighbors, excluded), m,
                config.alpha);
            for (std::size_t i = 0; i < z.size(); ++i) gdf += (fp[i] - fit[i]) * delta[i];
        }
        gdf /= kPerturbations * kTau * kTau;
        const double loss = rss + 2.0 * gdf;
        if (loss < best_loss) {
            best_loss = loss;
            best = m;
        }
    }
    return best;
}

}  // namespace

namespace {

// Neighbour lists in compressed form, cached per layout.
struct NeighborTable {
    std::vector<std::size_t> start;
    std::vector<std::uint32_t> index;
};

const NeighborTable& neighbor_table(const PyramidLayout& layout, bool spatial) {
    using Key = std::tuple<std::size_t, std::size_t, int, bool>;
    static std::mutex mutex;
    static std::map<Key, std::shared_ptr<const NeighborTable>> cache;
    const Key key{layout.n1(), layout.n2(), layout.levels(), spatial};
    std::lock_guard lock(mutex);
    auto& slot = cache[key];
    if (!slot) {
        auto t = std::make_shared<NeighborTable>();
        t->start.reserve(layout.size() + 1);
        t->start.push_back(0);
        for (std::size_t i = 0; i < layout.size(); ++i) {
            for (auto j : coefficient_neighbors(layout, i, spatial)) t->index.push_back(static_cast<std::uint32_t>(j));
            t->start.push_back(t->index.size());
        }
        slot = std::move(t);
    }
    return *slot;
}

}  // namespace

Standardizer parse_standardizer(std::string_view name) {
    if (name == "mad") return Standardizer::mad;
    if (name == "stddev" || name == "sd") return Standardizer::stddev;
    throw InputError("unknown standardizer '" + std::string(name) + "'");
}

void EfdrConfig::validate(std::size_t coefficients) const {
    if (n_tests < 1 || n_tests > coefficients)
        throw InputError("n_tests must lie in [1, " + std::to_string(coefficients) + "]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("EFDR alpha must lie in (0, 1)");
    if (!(neighbor_weight >= 0.0 && neighbor_weight <= 1.0)) throw InputError("neighbour weight must lie in [0, 1]");
}

double class_scale(std::span<const double> values, Standardizer method) {
    const std::size_t n = values.size();
    if (n < 2) throw InputError("standardize: every class needs at least 2 coefficients");
    if (method == Standardizer::mad) {
        std::vector<double> v(values.begin(), values.end());
        const double med = median_in_place(v);
        for (std::size_t i = 0; i < n; ++i) v[i] = std::abs(values[i] - med);
        return kMadToSigma * median_in_place(v);
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : values) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

std::vector<double> standardize(const PyramidLayout& layout, std::span<const double> coefficients,
                                Standardizer method, std::span<const std::uint8_t> excluded) {
    if (coefficients.size() != layout.size()) throw InputError("standardize: coefficient count mismatch");
    if (!excluded.empty() && excluded.size() != layout.size()) throw InputError("standardize: mask size mismatch");
    std::vector<double> z(coefficients.size(), 0.0);
    std::vector<double> interior;
    for (std::size_t k = 0; k < layout.class_count(); ++k) {
        const std::size_t off = layout.class_offset(k);
        const auto cls = coefficients.subspan(off, layout.class_size(k));
        auto basis = cls;
        if (!excluded.empty()) {
            interior.clear();
            for (std::size_t i = 0; i < cls.size(); ++i)
                if (!excluded[off + i]) interior.push_back(cls[i]);
            if (interior.size() >= 2) basis = interior;
        }
        double scale = class_scale(basis, method);
        if (!(scale > 0.0) && method == Standardizer::mad) scale = class_scale(basis, Standardizer::stddev);
        if (!(scale > 0.0)) {
            warn("standardize: class " + std::to_string(k + 1) + " has zero spread; its z-scores are set to 0");
            continue;
        }
        for (std::size_t i = 0; i < cls.size(); ++i) z[off + i] = cls[i] / scale;
    }
    return z;
}

std::vector<std::size_t> coefficient_neighbors(const PyramidLayout& layout, std::size_t index, bool spatial) {
    const std::size_t k = layout.class_of_index(index);
    const std::size_t local = index - layout.class_offset(k);
    const std::size_t rows = layout.class_rows(k), cols = layout.class_cols(k);
    const std::size_t r = local / cols, c = local % cols;
    const int level = layout.class_level(k);
    std::vector<std::size_t> out;
    out.reserve(12);
    auto at = [&](std::size_t cls, std::size_t rr, std::size_t cc) {
        return layout.class_offset(cls) + rr * layout.class_cols(cls) + cc;
    };
    if (spatial)
        for (auto [dr, dc] : {std::pair{-1L, 0L}, std::pair{1L, 0L}, std::pair{0L, -1L}, std::pair{0L, 1L}})
            out.push_back(at(k, wrap(static_cast<long>(r) + dr, rows), wrap(static_cast<long>(c) + dc, cols)));
    if (layout.is_smooth(k)) {
        for (int m = 1; m <= 3; ++m) out.push_back(at(layout.detail_class(level, static_cast<Orientation>(m)), r, c));
    } else {
        const auto orient = layout.class_orientation(k);
        for (int m = 1; m <= 3; ++m)
            if (m != static_cast<int>(orient)) out.push_back(at(layout.detail_class(level, static_cast<Orientation>(m)), r, c));
        if (level < layout.levels()) out.push_back(at(layout.detail_class(level + 1, orient), r / 2, c / 2));
        if (level > 1) {
            const auto child = layout.detail_class(level - 1, orient);
            for (std::size_t a = 0; a < 2; ++a)
                for (std::size_t b = 0; b < 2; ++b) out.push_back(at(child, 2 * r + a, 2 * c + b));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    std::erase(out, index);
    return out;
}

std::vector<double> neighborhood_scores(const PyramidLayout& layout, std::span<const double> z, double weight,
                                        bool spatial) {
    if (z.size() != layout.size()) throw InputError("neighbourhood scores: coefficient count mismatch");
    const auto& table = neighbor_table(layout, spatial);
    std::vector<double> score(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const std::size_t begin = table.start[i], end = table.start[i + 1];
        double s = 0.0;
        for (std::size_t e = begin; e < end; ++e) s += z[table.index[e]] * z[table.index[e]];
        const double mean = end > begin ? s / static_cast<double>(end - begin) : 0.0;
        score[i] = weight * z[i] * z[i] + (1.0 - weight) * mean;
    }
    return score;
}

std::vector<std::size_t> order_hypotheses(const PyramidLayout& layout, std::span<const double> z, double weight,
                                          std::size_t count, bool spatial, std::span<const std::uint8_t> excluded) {
    if (!excluded.empty() && excluded.size() != z.size()) throw InputError("order_hypotheses: mask size mismatch");
    const auto score = neighborhood_scores(layout, z, weight, spatial);
    std::vector<std::size_t> idx;
    idx.reserve(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        if (excluded.empty() || !excluded[i]) idx.push_back(i);
    auto before = [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); };
    if (count == 0 || count >= idx.size()) {
        std::sort(idx.begin(), idx.end(), before);
        return idx;
    }
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), before);
    idx.resize(count);
    return idx;
}

std::vector<std::size_t> bh_reject(std::span<const double> pvalues, double alpha) {
    const std::size_t m = pvalues.size();
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    std::size_t cut = 0;
    for (std::size_t i = m; i >= 1; --i)
        if (pvalues[idx[i - 1]] <= static_cast<double>(i) * alpha / static_cast<double>(m)) {
            cut = i;
            break;
        }
    std::vector<std::size_t> out(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    std::sort(out.begin(), out.end());
    return out;
}

double smallest_adjusted_p(std::span<const double> pvalues) {
    if (pvalues.empty()) throw InputError("smallest_adjusted_p: empty list");
    std::vector<double> p(pvalues.begin(), pvalues.end());
    std::sort(p.begin(), p.end());
    const double m = static_cast<double>(p.size());
    double best = 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) best = std::min(best, p[i] * m / static_cast<double>(i + 1));
    return std::clamp(best, 1e-300, 1.0);
}

EfdrResult efdr_coefficients(const PyramidLayout& layout, std::span<const double> coefficients,
                             const EfdrConfig& config) {
    config.validate(layout.size());
    EfdrResult result;
    const auto excluded = config.exclude_boundary ? boundary_mask(layout, config.filter) : std::vector<std::uint8_t>{};
    result.z = standardize(layout, coefficients, config.standardizer, excluded);
    result.n_tests = config.gdf ? choose_n_tests_gdf(layout, result.z, config, excluded) : config.n_tests;
    result.tested = order_hypotheses(layout, result.z, config.neighbor_weight, result.n_tests,
                                     config.spatial_neighbors, excluded);
    if (result.tested.empty()) return result;
    const auto p = pvalues_of(result.z, result.tested);
    result.p_value = smallest_adjusted_p(p);
    for (auto pos : bh_reject(p, config.alpha)) result.rejected.push_back(result.tested[pos]);
    std::sort(result.rejected.begin(), result.rejected.end());
    return result;
}

EfdrResult efdr_test(const Grid2D& grid, const EfdrConfig& config) {
    const WaveletTransform transform(grid.n1(), grid.n2(), config.levels, config.filter);
    std::vector<double> coeffs(grid.size());
    transform.forward(grid.values(), coeffs);
    auto result = efdr_coefficients(transform.layout(), coeffs, config);
    std::vector<double> kept(coeffs.size(), 0.0);
    for (auto i : result.rejected) kept[i] = coeffs[i];
    std::vector<double> image(coeffs.size());
    transform.inverse(kept, image);
    result.mu_hat = Grid2D(grid.n1(), grid.n2(), std::move(image), grid.spacing_x(), grid.spacing_y());
    return result;
}

}  // namespace efdrcs
