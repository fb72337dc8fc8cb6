#include "efdrcs/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <list>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <tuple>

#include "efdrcs/efdr.hpp"
#include "efdrcs/error.hpp"
#include "efdrcs/normal.hpp"
#include "efdrcs/parallel.hpp"
#include "efdrcs/rng.hpp"

namespace efdrcs {

namespace {

constexpr std::uint64_t kFieldTag = 0x6669656c64ULL;
constexpr std::uint64_t kMaskTag = 0x6d61736bULL;
constexpr std::uint64_t kPipelineTag = 0x7069706eULL;
constexpr std::uint64_t kType1Tag = 0x74797065ULL;
constexpr std::size_t kFactorCacheSize = 3;

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

// Lower Cholesky factors of noise covariances, least recently used dropped first.
class FactorCache {
public:
    std::shared_ptr<const Eigen::MatrixXd> get(const NoiseSpec& noise, std::size_t n) {
        const Key key{n, bits(noise.phi), bits(noise.kappa), bits(noise.tau2)};
        std::shared_ptr<Entry> entry;
        {
            std::lock_guard lock(mutex_);
            auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
            if (it != entries_.end()) {
                entries_.splice(entries_.begin(), entries_, it);
            } else {
                entries_.emplace_front(key, std::make_shared<Entry>());
                if (entries_.size() > kFactorCacheSize) entries_.pop_back();
            }
            entry = entries_.front().second;
        }
        std::call_once(entry->once, [&] {
            Eigen::LLT<Eigen::MatrixXd> llt(noise_covariance(noise, n));
            if (llt.info() != Eigen::Success) {
                Eigen::MatrixXd s = noise_covariance(noise, n);
                s.diagonal().array() += 1e-10 * noise.tau2;
                llt.compute(s);
                if (llt.info() != Eigen::Success) throw NumericalError("noise covariance is not positive definite");
                warn("gen_field: added jitter 1e-10 * tau2 to the noise covariance");
            }
            entry->factor = std::make_shared<const Eigen::MatrixXd>(llt.matrixL());
        });
        return entry->factor;
    }

private:
    using Key = std::tuple<std::size_t, std::uint64_t, std::uint64_t, std::uint64_t>;
    struct Entry {
        std::once_flag once;
        std::shared_ptr<const Eigen::MatrixXd> factor;
    };
    std::mutex mutex_;
    std::list<std::pair<Key, std::shared_ptr<Entry>>> entries_;
};

FactorCache& factor_cache() {
    static FactorCache cache;
    return cache;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

AggregationScheme cell_scheme(const StudyCell& cell, std::size_t replicate, std::uint64_t seed) {
    const auto base = aggregation_scheme(cell.agg);
    switch (cell.experiment) {
        case 1:
        case 4: return base;
        case 2: {
            const auto removed = corner_blocks(base);
            return drop_blocks(base, removed);
        }
        case 3: {
            const auto removed = random_blocks(base, stream_id({seed, kMaskTag, static_cast<std::uint64_t>(cell.agg), replicate}));
            return drop_blocks(base, removed);
        }
        default: throw InputError("experiment must be 1, 2, 3 or 4");
    }
}

bool direct_path(const StudyCell& cell) { return cell.agg == 64 && (cell.experiment == 1 || cell.experiment == 4); }

void validate_cell(const StudyCell& cell) {
    if (cell.experiment < 1 || cell.experiment > 4) throw InputError("experiment must be 1, 2, 3 or 4");
    if (cell.agg != 64 && cell.agg != 16 && cell.agg != 8) throw InputError("aggregation must be 64, 16 or 8");
    SignalSpec{cell.r, cell.h, 64}.validate();
    NoiseSpec{cell.phi, cell.kappa, 1.0}.validate();
    if (cell.experiment != 4 && cell.kappa != 0.0) throw InputError("kappa is only used by experiment 4");
}

std::string cell_name(const StudyCell& c) {
    return "experiment=" + std::to_string(c.experiment) + " r=" + std::to_string(c.r) + " h=" + format_double(c.h) +
           " phi=" + format_double(c.phi) + " kappa=" + format_double(c.kappa) + " agg=" + std::to_string(c.agg);
}

std::string cell_columns(const StudyCell& c) {
    return std::to_string(c.experiment) + "," + std::to_string(c.r) + "," + format_double(c.h) + "," +
           format_double(c.phi) + "," + format_double(c.kappa) + "," + std::to_string(c.agg);
}

}  // namespace

void SignalSpec::validate() const {
    if (n < 4 || n % 2 != 0) throw InputError("signal grid size must be even and >= 4");
    if (r % 2 != 0 || r > n) throw InputError("signal width r must be even and at most the grid size");
    if (!std::isfinite(h)) throw InputError("signal height must be finite");
}

void NoiseSpec::validate() const {
    if (!(phi >= 0.0)) throw InputError("phi must be >= 0");
    if (!(tau2 > 0.0)) throw InputError("tau2 must be positive");
    if (!(kappa > -1.0) || !std::isfinite(kappa)) throw InputError("kappa must be finite and > -1");
}

std::vector<std::size_t> signal_pixels(const SignalSpec& signal) {
    signal.validate();
    std::vector<std::size_t> out;
    const std::size_t lo = signal.n / 2 - signal.r / 2;
    for (std::size_t i = lo; i < lo + signal.r; ++i)
        for (std::size_t j = lo; j < lo + signal.r; ++j) out.push_back(i * signal.n + j);
    return out;
}

Grid2D signal_field(const SignalSpec& signal) {
    Grid2D g(signal.n, signal.n, 0.0);
    for (auto idx : signal_pixels(signal)) g.values()[idx] = signal.h;
    return g;
}

Eigen::MatrixXd noise_covariance(const NoiseSpec& noise, std::size_t n) {
    noise.validate();
    const std::size_t size = n * n;
    if (noise.phi == 0.0) return noise.tau2 * Eigen::MatrixXd::Identity(size, size);
    std::vector<double> x(size), y(size);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = static_cast<double>(i), b = static_cast<double>(j);
            const double norm = std::hypot(a, b);
            const double scale = (noise.kappa == 0.0 || norm == 0.0) ? 1.0 : std::pow(norm, noise.kappa);
            x[i * n + j] = scale * a;
            y[i * n + j] = scale * b;
        }
    Eigen::MatrixXd s(size, size);
    for (std::size_t p = 0; p < size; ++p) {
        s(p, p) = noise.tau2;
        for (std::size_t q = 0; q < p; ++q)
            s(p, q) = s(q, p) = noise.tau2 * std::exp(-std::hypot(x[p] - x[q], y[p] - y[q]) / noise.phi);
    }
    return s;
}

Grid2D gen_field(const SignalSpec& signal, const NoiseSpec& noise, std::uint64_t seed) {
    signal.validate();
    noise.validate();
    const std::size_t size = signal.n * signal.n;
    Philox rng(seed, 0);
    Eigen::VectorXd eps(static_cast<Eigen::Index>(size));
    for (auto& e : eps) e = rng.normal();
    Eigen::VectorXd delta;
    if (noise.phi == 0.0) {
        delta = std::sqrt(noise.tau2) * eps;
    } else {
        const auto factor = factor_cache().get(noise, signal.n);
        delta = factor->triangularView<Eigen::Lower>() * eps;
    }
    auto g = signal_field(signal);
    for (std::size_t i = 0; i < size; ++i) g.values()[i] += delta(static_cast<Eigen::Index>(i));
    return g;
}

AggregationScheme aggregation_scheme(int label, std::size_t n) {
    if (label <= 0 || n % static_cast<std::size_t>(label) != 0)
        throw InputError("aggregation label must divide the grid size");
    const std::size_t b = n / static_cast<std::size_t>(label);
    return regular_blocks(n, n, b, b);
}

std::vector<std::size_t> corner_blocks(const AggregationScheme& scheme) {
    const std::size_t lo1 = scheme.n1() - 3 * scheme.n1() / 8, lo2 = scheme.n2() - 3 * scheme.n2() / 8;
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < scheme.size(); ++k) {
        const auto& b = scheme.block(k);
        if (std::any_of(b.begin(), b.end(), [&](std::size_t i) { return i / scheme.n2() >= lo1 && i % scheme.n2() >= lo2; }))
            out.push_back(k);
    }
    return out;
}

std::vector<std::size_t> random_blocks(const AggregationScheme& scheme, std::uint64_t seed) {
    const std::size_t lo1 = scheme.n1() / 2 - scheme.n1() / 8, hi1 = scheme.n1() / 2 + scheme.n1() / 8;
    const std::size_t lo2 = scheme.n2() / 2 - scheme.n2() / 8, hi2 = scheme.n2() / 2 + scheme.n2() / 8;
    std::vector<std::size_t> eligible;
    for (std::size_t k = 0; k < scheme.size(); ++k) {
        const auto& b = scheme.block(k);
        const bool central = std::any_of(b.begin(), b.end(), [&](std::size_t i) {
            const std::size_t r = i / scheme.n2(), c = i % scheme.n2();
            return r >= lo1 && r < hi1 && c >= lo2 && c < hi2;
        });
        if (!central) eligible.push_back(k);
    }
    const auto count = static_cast<std::size_t>(std::llround(9.0 * static_cast<double>(scheme.size()) / 64.0));
    if (count > eligible.size()) throw InputError("random mask: not enough blocks outside the central square");
    Philox rng(seed, 0);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(count);
    std::sort(eligible.begin(), eligible.end());
    return eligible;
}

std::string method_label(const StudyCell& cell, CombineMethod method) {
    return direct_path(cell) ? "idl" : std::string(combine_method_name(method));
}

std::vector<double> replicate_pvalues(const StudyCell& cell, std::size_t replicate, const StudyOptions& options) {
    validate_cell(cell);
    const SignalSpec signal{cell.r, cell.h, 64};
    const NoiseSpec noise{cell.phi, cell.kappa, 1.0};
    // the noise depends on (phi, kappa, replicate) only, so cells differing in
    // signal or aggregation share it
    const auto field = gen_field(signal, noise, stream_id({options.seed, kFieldTag, bits(cell.phi), bits(cell.kappa), replicate}));
    if (direct_path(cell)) return {efdr_test(field, options.pipeline.efdr_config()).p_value};

    const auto data = aggregate(field, cell_scheme(cell, replicate, options.seed));
    PipelineConfig config = options.pipeline;
    config.seed = stream_id({options.seed, kPipelineTag, replicate});
    config.copula_seed = options.seed;
    config.jobs = 1;
    const auto report = detect(data, config);
    std::vector<double> out;
    for (auto m : options.methods)
        out.push_back(combine(report.pvalues, m, options.alpha, options.seed, config.mc_samples).p_final);
    return out;
}

std::vector<PowerRow> run_power_study(const std::vector<StudyCell>& cells, const StudyOptions& options) {
    if (options.replicates < 1) throw InputError("replicates must be >= 1");
    if (options.methods.empty()) throw InputError("at least one method is required");
    for (const auto& c : cells) validate_cell(c);
    std::vector<PowerRow> rows;
    for (const auto& cell : cells) {
        std::vector<std::vector<double>> slots(options.replicates);
        parallel_for(options.replicates, options.jobs,
                     [&](std::size_t r) { slots[r] = replicate_pvalues(cell, r, options); });
        const std::size_t methods = direct_path(cell) ? 1 : options.methods.size();
        for (std::size_t m = 0; m < methods; ++m) {
            PowerRow row;
            row.cell = cell;
            row.method = method_label(cell, options.methods[m]);
            row.replicates = options.replicates;
            for (const auto& s : slots) row.rejections += s[m] < options.alpha ? 1 : 0;
            row.rate = static_cast<double>(row.rejections) / static_cast<double>(row.replicates);
            row.se = std::sqrt(row.rate * (1.0 - row.rate) / static_cast<double>(row.replicates));
            rows.push_back(row);
        }
        if (options.progress) options.progress("power " + cell_name(cell) + " done");
    }
    return rows;
}

double roc_auc(const std::vector<double>& null_p, const std::vector<double>& alt_p) {
    if (null_p.empty() || alt_p.empty()) throw InputError("roc_auc: empty sample");
    double wins = 0.0;
    for (double a : alt_p)
        for (double b : null_p) wins += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
    return wins / (static_cast<double>(null_p.size()) * static_cast<double>(alt_p.size()));
}

std::vector<RocRow> run_roc_study(const std::vector<StudyCell>& cells, const StudyOptions& options) {
    if (options.replicates < 1) throw InputError("replicates must be >= 1");
    for (const auto& c : cells) validate_cell(c);
    const std::size_t R = options.replicates;
    using NullKey = std::tuple<int, int, std::uint64_t, std::uint64_t>;
    std::map<NullKey, std::vector<std::vector<double>>> nulls;
    std::vector<RocRow> rows;
    for (const auto& cell : cells) {
        const NullKey key{cell.experiment, cell.agg, bits(cell.phi), bits(cell.kappa)};
        if (!nulls.contains(key)) {
            StudyCell null_cell = cell;
            null_cell.h = 0.0;
            std::vector<std::vector<double>> slots(R);
            parallel_for(R, options.jobs, [&](std::size_t r) { slots[r] = replicate_pvalues(null_cell, r, options); });
            nulls.emplace(key, std::move(slots));
        }
        std::vector<std::vector<double>> alt(R);
        parallel_for(R, options.jobs, [&](std::size_t r) { alt[r] = replicate_pvalues(cell, R + r, options); });
        const auto& null_slots = nulls.at(key);
        const std::size_t methods = direct_path(cell) ? 1 : options.methods.size();
        for (std::size_t m = 0; m < methods; ++m) {
            std::vector<double> pn(R), pa(R);
            for (std::size_t r = 0; r < R; ++r) {
                pn[r] = null_slots[r][m];
                pa[r] = alt[r][m];
            }
            RocRow row;
            row.cell = cell;
            row.method = method_label(cell, options.methods[m]);
            row.auc = roc_auc(pn, pa);
            for (int i = 0; i <= 100; ++i) {
                const double a = i / 100.0;
                const auto below = [&](const std::vector<double>& v) {
                    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double p) { return p < a; })) /
                           static_cast<double>(v.size());
                };
                row.curve.push_back({a, below(pn), below(pa)});
            }
            rows.push_back(std::move(row));
        }
        if (options.progress) options.progress("roc " + cell_name(cell) + " done");
    }
    return rows;
}

std::vector<double> subsample_pvalues(std::size_t N, std::size_t population, std::size_t M, std::uint64_t seed) {
    if (N < 1 || N > population) throw InputError("subsample size must lie in [1, population]");
    if (M < 1) throw InputError("M must be >= 1");
    Philox rng(seed, 0);
    std::vector<double> x(population);
    for (auto& v : x) v = rng.normal();
    std::vector<std::size_t> idx(population);
    std::vector<double> p(M);
    const double root_n = std::sqrt(static_cast<double>(N));
    for (std::size_t k = 0; k < M; ++k) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(population - i));
            std::swap(idx[i], idx[j]);
            sum += x[idx[i]];
        }
        p[k] = two_sided_p(root_n * sum / static_cast<double>(N));
    }
    return p;
}

std::vector<Type1Row> run_type1_study(const Type1Options& options) {
    if (options.replicates < 1) throw InputError("replicates must be >= 1");
    for (double a : options.alphas)
        if (!(a > 0.0 && a < 1.0)) throw InputError("alpha must lie in (0, 1)");
    std::vector<Type1Row> rows;
    for (std::size_t N : options.sizes) {
        if (N < 1 || N > options.population) throw InputError("N must lie in [1, population]");
        std::vector<std::vector<double>> slots(options.replicates);
        parallel_for(options.replicates, options.jobs, [&](std::size_t r) {
            const auto p = subsample_pvalues(N, options.population, options.M, stream_id({options.seed, kType1Tag, N, r}));
            for (auto m : options.methods)
                slots[r].push_back(combine(p, m, 0.5, options.seed, options.mc_samples).p_final);
        });
        for (double a : options.alphas)
            for (std::size_t m = 0; m < options.methods.size(); ++m) {
                Type1Row row{a, N, std::string(combine_method_name(options.methods[m])), options.replicates, 0, 0, 0};
                for (const auto& s : slots) row.rejections += s[m] < a ? 1 : 0;
                row.rate = static_cast<double>(row.rejections) / static_cast<double>(row.replicates);
                row.se = std::sqrt(row.rate * (1.0 - row.rate) / static_cast<double>(row.replicates));
                rows.push_back(row);
            }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Type1Row& x, const Type1Row& y) {
        return std::tie(x.alpha, x.N) < std::tie(y.alpha, y.N);
    });
    return rows;
}

std::string power_csv(const std::vector<PowerRow>& rows) {
    std::ostringstream out;
    out << "experiment,r,h,phi,kappa,agg,method,replicates,rejections,rate,se\n";
    for (const auto& r : rows)
        out << cell_columns(r.cell) << ',' << r.method << ',' << r.replicates << ',' << r.rejections << ','
            << format_double(r.rate) << ',' << format_double(r.se) << '\n';
    return out.str();
}

std::string roc_csv(const std::vector<RocRow>& rows) {
    std::ostringstream out;
    out << "experiment,r,h,phi,kappa,agg,method,auc,alpha,false_positive,true_positive\n";
    for (const auto& r : rows)
        for (const auto& pt : r.curve)
            out << cell_columns(r.cell) << ',' << r.method << ',' << format_double(r.auc) << ','
                << format_double(pt.alpha) << ',' << format_double(pt.false_positive) << ','
                << format_double(pt.true_positive) << '\n';
    return out.str();
}

std::string type1_csv(const std::vector<Type1Row>& rows) {
    std::ostringstream out;
    out << "alpha,N,method,replicates,rejections,rate,se\n";
    for (const auto& r : rows)
        out << format_double(r.alpha) << ',' << r.N << ',' << r.method << ',' << r.replicates << ',' << r.rejections
            << ',' << format_double(r.rate) << ',' << format_double(r.se) << '\n';
    return out.str();
}

}  // namespace efdrcs
