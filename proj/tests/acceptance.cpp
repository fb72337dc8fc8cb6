// Acceptance suite: one PASS/FAIL line per criterion. `--smoke` runs the
// Type-I lattice with 50 replicates and skips the long studies.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "CLI11.hpp"

#include "efdrcs/combine.hpp"
#include "efdrcs/condsim.hpp"
#include "efdrcs/covariance.hpp"
#include "efdrcs/efdr.hpp"
#include "efdrcs/error.hpp"
#include "efdrcs/harness.hpp"
#include "efdrcs/wavelet.hpp"

using namespace efdrcs;

namespace {

struct Outcome {
    enum { pass, fail, skip } status;
    std::vector<std::string> details;
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void quiet(const std::string&) {}

// Table of Type-I rates, 50,000 replicates: {alpha, N} -> {NVE, CPL, MOM}.
const std::map<std::pair<double, std::size_t>, std::array<double, 3>> kTable = {
    {{0.01, 80}, {0.0016, 0.0078, 0.0063}}, {{0.01, 85}, {0.0030, 0.0089, 0.0073}},
    {{0.01, 90}, {0.0049, 0.0098, 0.0087}}, {{0.01, 95}, {0.0065, 0.0098, 0.0090}},
    {{0.05, 80}, {0.0161, 0.0454, 0.0446}}, {{0.05, 85}, {0.0233, 0.0488, 0.0481}},
    {{0.05, 90}, {0.0305, 0.0482, 0.0478}}, {{0.05, 95}, {0.0389, 0.0485, 0.0482}},
    {{0.10, 80}, {0.0443, 0.0958, 0.1033}}, {{0.10, 85}, {0.0574, 0.0968, 0.1044}},
    {{0.10, 90}, {0.0686, 0.0949, 0.1001}}, {{0.10, 95}, {0.0828, 0.0971, 0.0997}},
};

Outcome type1_table(int jobs) {
    Type1Options options;
    options.replicates = 5000;
    options.jobs = jobs;
    const auto rows = run_type1_study(options);
    Outcome out{Outcome::pass, {}};
    double worst = 0;
    for (const auto& r : rows) {
        const auto& ref = kTable.at({std::round(r.alpha * 100) / 100, r.N});
        if (r.method == "nve") {
            if (r.alpha != 0.05) continue;
            const double se = std::sqrt(r.alpha * (1 - r.alpha) / static_cast<double>(r.replicates));
            const bool ok = r.rate < r.alpha - 2 * se;
            out.details.push_back(fmt("nve alpha=0.05 N=%zu rate=%.4f (table %.4f) bound %.4f %s", r.N, r.rate,
                                      ref[0], r.alpha - 2 * se, ok ? "ok" : "FAIL"));
            if (!ok) out.status = Outcome::fail;
            continue;
        }
        const double table = r.method == "cpl" ? ref[1] : ref[2];
        const double diff = r.rate - table;
        worst = std::max(worst, std::abs(diff));
        if (std::abs(diff) > 0.010) {
            out.status = Outcome::fail;
            out.details.push_back(fmt("%s alpha=%.2f N=%zu rate=%.4f table=%.4f FAIL", r.method.c_str(), r.alpha,
                                      r.N, r.rate, table));
        }
    }
    out.details.push_back(fmt("largest |CPL/MOM - table| = %.4f (tolerance 0.010)", worst));
    return out;
}

using CellKey = std::tuple<int, std::size_t, double, double, int>;
CellKey key(const StudyCell& c) { return {c.experiment, c.r, c.h, c.phi, c.agg}; }

class PowerBook {
public:
    PowerBook(std::vector<StudyCell> cells, StudyOptions options) {
        for (const auto& row : run_power_study(cells, options)) rows_[key(row.cell)] = row;
    }
    const PowerRow& at(int experiment, std::size_t r, double h, double phi, int agg) const {
        return rows_.at({experiment, r, h, phi, agg});
    }

private:
    std::map<CellKey, PowerRow> rows_;
};

std::string describe(const PowerRow& row) {
    return fmt("exp%d r=%zu h=%g phi=%g agg=%d %s: %.3f (se %.3f)", row.cell.experiment, row.cell.r, row.cell.h,
               row.cell.phi, row.cell.agg, row.method.c_str(), row.rate, row.se);
}

StudyOptions study_options(std::size_t replicates, int jobs) {
    StudyOptions options;
    options.replicates = replicates;
    options.jobs = jobs;
    options.methods = {CombineMethod::cpl};
    options.progress = [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); };
    return options;
}

Outcome pipeline_type1(std::size_t replicates, int jobs) {
    std::vector<StudyCell> cells;
    for (double phi : {0.0, 5.0, 10.0})
        for (int agg : {64, 16, 8}) cells.push_back({1, 10, 0.0, phi, 0.0, agg});
    const auto rows = run_power_study(cells, study_options(replicates, jobs));
    Outcome out{Outcome::pass, {}};
    for (const auto& row : rows) {
        const bool ok = row.rate >= 0.01 && row.rate <= 0.11;
        if (!ok) out.status = Outcome::fail;
        out.details.push_back(describe(row) + (ok ? "" : "  outside [0.01, 0.11]"));
    }
    return out;
}

Outcome power_orderings(const PowerBook& book) {
    Outcome out{Outcome::pass, {}};
    auto require = [&](bool ok, const std::string& what) {
        if (!ok) out.status = Outcome::fail;
        out.details.push_back(what + (ok ? "" : "  FAIL"));
    };
    for (int h = 0; h < 5; ++h) {
        const auto& lo = book.at(1, 10, h, 5.0, 16);
        const auto& hi = book.at(1, 10, h + 1, 5.0, 16);
        const double slack = 2 * std::max(lo.se, hi.se);
        require(hi.rate >= lo.rate - slack,
                fmt("h=%d -> %d: %.3f -> %.3f (slack %.3f)", h, h + 1, lo.rate, hi.rate, slack));
    }
    const auto& p0 = book.at(1, 10, 3.0, 0.0, 16);
    const auto& p10 = book.at(1, 10, 3.0, 10.0, 16);
    require(p0.rate >= p10.rate, fmt("h=3: phi=0 %.3f >= phi=10 %.3f", p0.rate, p10.rate));
    const auto& a16 = book.at(1, 10, 5.0, 5.0, 16);
    const auto& a8 = book.at(1, 10, 5.0, 5.0, 8);
    require(a16.rate >= a8.rate, fmt("h=5: 16x16 %.3f >= 8x8 %.3f", a16.rate, a8.rate));
    return out;
}

Outcome roc_orderings(int jobs) {
    const std::vector<StudyCell> cells{
        {1, 4, 1.0, 5.0, 0.0, 16}, {1, 8, 3.0, 5.0, 0.0, 16}, {1, 10, 5.0, 5.0, 0.0, 16}, {1, 10, 5.0, 5.0, 0.0, 8}};
    const auto rows = run_roc_study(cells, study_options(100, jobs));
    std::vector<double> auc;
    Outcome out{Outcome::pass, {}};
    for (const auto& row : rows) {
        auc.push_back(row.auc);
        out.details.push_back(fmt("(h=%g, r=%zu) agg=%d %s: AUC %.4f", row.cell.h, row.cell.r, row.cell.agg,
                                  row.method.c_str(), row.auc));
    }
    if (!(auc[0] < auc[1] && auc[1] < auc[2])) {
        out.status = Outcome::fail;
        out.details.push_back("AUC does not increase with h r^2");
    }
    if (!(auc[2] >= auc[3])) {
        out.status = Outcome::fail;
        out.details.push_back("AUC(16x16) < AUC(8x8) at (5, 10)");
    }
    return out;
}

Outcome missing_data(const PowerBook& book) {
    Outcome out{Outcome::pass, {}};
    const auto& complete = book.at(1, 10, 5.0, 5.0, 16);
    out.details.push_back(describe(complete));
    for (int experiment : {2, 3}) {
        const auto& row = book.at(experiment, 10, 5.0, 5.0, 16);
        const bool ok = std::abs(row.rate - complete.rate) <= 0.15;
        if (!ok) out.status = Outcome::fail;
        out.details.push_back(describe(row) + (ok ? "" : "  differs by more than 0.15"));
    }
    return out;
}

// Oracle suites, 1000 random instances each.

double max_dwt_error(std::mt19937_64& gen, double& parseval) {
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> pick(0, 2);
    const std::size_t sizes[] = {16, 32, 64};
    double worst = 0;
    parseval = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n1 = sizes[pick(gen)], n2 = sizes[pick(gen)];
        const int levels = 1 + pick(gen);
        const auto filter = i % 2 ? WaveletFilter::haar : WaveletFilter::la8;
        std::vector<double> v(n1 * n2);
        for (auto& x : v) x = normal(gen) * (1 + 10 * (i % 5));
        const Grid2D g(n1, n2, v);
        const auto pyr = dwt2(g, levels, filter);
        const auto back = idwt2(pyr);
        double e2 = 0, c2 = 0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            worst = std::max(worst, std::abs(back.values()[k] - v[k]));
            e2 += v[k] * v[k];
            c2 += pyr.coefficients[k] * pyr.coefficients[k];
        }
        parseval = std::max(parseval, std::abs(e2 - c2) / e2);
    }
    return worst;
}

AggregationScheme random_scheme(std::size_t n1, std::size_t n2, std::mt19937_64& gen) {
    std::vector<std::size_t> pixels(n1 * n2);
    std::iota(pixels.begin(), pixels.end(), 0);
    std::shuffle(pixels.begin(), pixels.end(), gen);
    std::uniform_int_distribution<std::size_t> size(1, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 0.6 + 0.4 * u(gen);
    std::vector<std::vector<std::size_t>> blocks;
    for (std::size_t at = 0; at < pixels.size();) {
        const std::size_t s = std::min(size(gen), pixels.size() - at);
        std::vector<std::size_t> block(pixels.begin() + static_cast<long>(at), pixels.begin() + static_cast<long>(at + s));
        std::sort(block.begin(), block.end());
        if (u(gen) < keep) blocks.push_back(std::move(block));
        at += s;
    }
    if (blocks.empty()) blocks.push_back({0});
    return AggregationScheme(n1, n2, std::move(blocks));
}

double max_condsim_error(std::mt19937_64& gen) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n1 = 8, n2 = i % 3 == 2 ? 16 : 8;
        const auto scheme = random_scheme(n1, n2, gen);
        std::vector<double> z(scheme.size());
        for (auto& x : z) x = 3 * normal(gen);
        const AggregatedData data(scheme, z);
        CovarianceFamily family;
        family.phi = 0.5 + 8 * u(gen);
        family.tau2 = 0.2 + 3 * u(gen);
        const auto sigma = cov_matrix(family, n1, n2);
        const ConditionalLaw law = [&] {
            switch (i % 3) {
                case 0: return build_conditional(sigma, data);
                case 1: return build_conditional_projected(sigma, data);
                default: {
                    std::vector<double> theta(7);
                    for (auto& t : theta) t = 0.1 + 2 * u(gen);
                    return build_conditional_wavelet(theta, 2, WaveletFilter::haar, data);
                }
            }
        }();
        const Eigen::VectorXd x = law.draw(static_cast<std::uint64_t>(i), 0);
        const auto hx = scheme.apply(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
        for (std::size_t k = 0; k < hx.size(); ++k) worst = std::max(worst, std::abs(hx[k] - z[k]));
    }
    return worst;
}

int bh_mismatches(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 8);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> p(static_cast<std::size_t>(len(gen)));
        for (auto& x : p) x = i % 4 == 0 ? std::round(u(gen) * 20) / 200 + 1e-4 : std::pow(u(gen), 3);
        const double alpha = 0.01 + 0.2 * u(gen);
        std::vector<double> s = p;
        std::sort(s.begin(), s.end());
        const double m = static_cast<double>(p.size());
        double cut = -1, adjusted = 1.0;
        for (std::size_t k = 1; k <= s.size(); ++k) {
            if (s[k - 1] <= alpha * static_cast<double>(k) / m) cut = s[k - 1];
            adjusted = std::min(adjusted, s[k - 1] * m / static_cast<double>(k));
        }
        std::vector<std::size_t> expected;
        for (std::size_t k = 0; k < p.size(); ++k)
            if (p[k] <= cut) expected.push_back(k);
        auto got = bh_reject(p, alpha);
        std::sort(got.begin(), got.end());
        if (got != expected) ++bad;
        if (std::abs(smallest_adjusted_p(p) - adjusted) > 1e-15 * std::max(1.0, adjusted)) ++bad;
    }
    return bad;
}

double gamma_tail_quadrature(double T, double a, double b) {
    const double log_norm = a * std::log(b) - std::lgamma(a);
    auto density = [&](double x) { return std::exp(log_norm + (a - 1.0) * std::log(x) - b * x); };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        density, T, std::numeric_limits<double>::infinity(), 15, 1e-13);
}

double max_gamma_error(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const double a = 0.3 + 150.0 * u(gen) * u(gen);
        const double b = 0.005 + u(gen);
        const double T = a / b * (0.05 + 2.5 * u(gen));
        worst = std::max(worst, std::abs(gamma_sf(T, a, b) - gamma_tail_quadrature(T, a, b)));
    }
    return worst;
}

double max_eigen_error(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const int m = 2 + i % 9;
        const double sigma2 = 0.5 + 3 * u(gen);
        const double rho = 0.999 * u(gen);
        const Eigen::MatrixXd U =
            sigma2 * ((1 - rho) * Eigen::MatrixXd::Identity(m, m) + rho * Eigen::MatrixXd::Ones(m, m));
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(U).eigenvalues();
        const auto f = intra_class_eigenvalues(sigma2, rho, static_cast<std::size_t>(m));
        for (int k = 0; k < m - 1; ++k) worst = std::max(worst, std::abs(ev(k) - f.repeated));
        worst = std::max(worst, std::abs(ev(m - 1) - f.leading));
    }
    return worst;
}

int gamma_identity_failures(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int bad = 0;
    for (std::size_t m = 1; m <= 1000; ++m) {
        const auto fisher = gamma_params(0.0, m);
        if (fisher.a != static_cast<double>(m) || fisher.b != 0.5) ++bad;
        const auto g = gamma_params(u(gen) * (1 - 1e-9), m);
        if (g.a != 2.0 * static_cast<double>(m) * g.b) ++bad;
    }
    return bad;
}

Outcome oracle_suites() {
    Outcome out{Outcome::pass, {}};
    auto require = [&](bool ok, const std::string& what) {
        if (!ok) out.status = Outcome::fail;
        out.details.push_back(what + (ok ? "" : "  FAIL"));
    };
    std::mt19937_64 gen(20240611);
    double parseval = 0;
    const double dwt = max_dwt_error(gen, parseval);
    require(dwt < 1e-9, fmt("DWT round trip: max error %.2e (< 1e-9)", dwt));
    require(parseval < 1e-10, fmt("Parseval: max relative error %.2e (< 1e-10)", parseval));
    const double cs = max_condsim_error(gen);
    require(cs < 1e-7, fmt("H x = Z: max error %.2e over 1000 instances (< 1e-7)", cs));
    const int bh = bh_mismatches(gen);
    require(bh == 0, fmt("BH and smallest adjusted p: %d mismatches over 1000 lists", bh));
    const double gq = max_gamma_error(gen);
    require(gq < 1e-8, fmt("Gamma tail vs quadrature: max error %.2e (< 1e-8)", gq));
    const double ev = max_eigen_error(gen);
    require(ev < 1e-10, fmt("intra-class eigenvalues: max error %.2e (< 1e-10)", ev));
    const int gp = gamma_identity_failures(gen);
    require(gp == 0, fmt("gamma_params a = 2M b and rho = 0 gives (M, 1/2): %d failures", gp));
    return out;
}

Outcome determinism() {
    Outcome out{Outcome::pass, {}};
    auto options = study_options(6, 1);
    options.progress = nullptr;
    options.methods = {CombineMethod::cpl, CombineMethod::mom, CombineMethod::nve};
    options.pipeline.mc_samples = 20000;
    const std::vector<StudyCell> cells{{1, 10, 3.0, 5.0, 0.0, 16}, {2, 10, 5.0, 5.0, 0.0, 8},
                                       {3, 10, 1.0, 10.0, 0.0, 16}, {1, 10, 2.0, 0.0, 0.0, 64}};
    const auto power1 = power_csv(run_power_study(cells, options));
    const auto roc1 = roc_csv(run_roc_study({cells[0]}, options));
    Type1Options t1;
    t1.replicates = 100;
    t1.mc_samples = 20000;
    const auto type1 = type1_csv(run_type1_study(t1));
    options.jobs = 8;
    t1.jobs = 8;
    const bool same_power = power_csv(run_power_study(cells, options)) == power1;
    const bool same_roc = roc_csv(run_roc_study({cells[0]}, options)) == roc1;
    const bool same_type1 = type1_csv(run_type1_study(t1)) == type1;
    out.details.push_back(fmt("power CSV %s, ROC CSV %s, type-I CSV %s", same_power ? "identical" : "DIFFERS",
                              same_roc ? "identical" : "DIFFERS", same_type1 ? "identical" : "DIFFERS"));
    if (!(same_power && same_roc && same_type1)) out.status = Outcome::fail;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    bool smoke = false;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string only;
    app.add_flag("--smoke", smoke, "Short Type-I lattice run; skips the long studies");
    app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--only", only, "Comma list of criterion numbers to run");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    for (const auto& part : CLI::detail::split(only, ','))
        if (!part.empty()) selected.insert(std::stoi(part));
    auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

    set_warning_sink(quiet);
    const std::set<int> long_running{1, 3, 4, 5};
    std::map<int, Outcome> results;
    std::unique_ptr<PowerBook> book;
    auto need_book = [&] {
        if (book) return;
        std::vector<StudyCell> cells;
        for (double h : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) cells.push_back({1, 10, h, 5.0, 0.0, 16});
        cells.push_back({1, 10, 3.0, 0.0, 0.0, 16});
        cells.push_back({1, 10, 3.0, 10.0, 0.0, 16});
        cells.push_back({1, 10, 5.0, 5.0, 0.0, 8});
        cells.push_back({2, 10, 5.0, 5.0, 0.0, 16});
        cells.push_back({3, 10, 5.0, 5.0, 0.0, 16});
        book = std::make_unique<PowerBook>(cells, study_options(200, jobs));
    };

    const char* names[] = {"",
                           "Type-I table of the combination rules",
                           "Type-I control of the full pipeline",
                           "power orderings",
                           "ROC orderings",
                           "missing-data robustness",
                           "oracle and property suites",
                           "determinism across job counts"};
    bool all_pass = true;
    for (int c = 1; c <= 7; ++c) {
        if (!wanted(c)) continue;
        Outcome outcome{Outcome::skip, {"skipped in smoke mode"}};
        const auto start = std::chrono::steady_clock::now();
        std::fprintf(stderr, "criterion %d: %s\n", c, names[c]);
        try {
            if (!(smoke && long_running.count(c))) {
                switch (c) {
                    case 1: outcome = type1_table(jobs); break;
                    case 2: outcome = pipeline_type1(smoke ? 50 : 200, jobs); break;
                    case 3: need_book(); outcome = power_orderings(*book); break;
                    case 4: outcome = roc_orderings(jobs); break;
                    case 5: need_book(); outcome = missing_data(*book); break;
                    case 6: outcome = oracle_suites(); break;
                    case 7: outcome = determinism(); break;
                }
            }
        } catch (const std::exception& e) {
            outcome = {Outcome::fail, {std::string("error: ") + e.what()}};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* status = outcome.status == Outcome::pass ? "PASS" : outcome.status == Outcome::fail ? "FAIL" : "SKIP";
        if (outcome.status == Outcome::fail) all_pass = false;
        std::printf("C%d %s  %s%s (%.0f s)\n", c, status, names[c], smoke && c == 2 ? " [50 replicates]" : "", secs);
        for (const auto& d : outcome.details) std::printf("     %s\n", d.c_str());
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
