#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "efdrcs/error.hpp"
#include "efdrcs/harness.hpp"

using namespace efdrcs;

namespace {

std::set<std::size_t> pixels_of(const AggregationScheme& scheme, const std::vector<std::size_t>& blocks) {
    std::set<std::size_t> out;
    for (auto k : blocks) out.insert(scheme.block(k).begin(), scheme.block(k).end());
    return out;
}

double auc_oracle(const std::vector<double>& null_p, const std::vector<double>& alt_p) {
    double s = 0;
    for (double a : alt_p)
        for (double b : null_p) s += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
    return s / static_cast<double>(null_p.size() * alt_p.size());
}

// Lag-1 horizontal correlation over pixels in rows/cols [lo, lo + w).
double lag1_corr(const std::vector<Grid2D>& fields, std::size_t lo, std::size_t w) {
    double sxy = 0, sxx = 0, syy = 0;
    for (const auto& f : fields)
        for (std::size_t i = lo; i < lo + w; ++i)
            for (std::size_t j = lo; j + 1 < lo + w; ++j) {
                sxy += f(i, j) * f(i, j + 1);
                sxx += f(i, j) * f(i, j);
                syy += f(i, j + 1) * f(i, j + 1);
            }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("signal square sits on the middle four pixels") {
    const auto px = signal_pixels(SignalSpec{10, 1.0, 64});
    CHECK(px.size() == 100);
    CHECK(px.front() == 27 * 64 + 27);
    CHECK(px.back() == 36 * 64 + 36);
    const auto g = signal_field(SignalSpec{4, 2.5, 8});
    double total = 0;
    for (double v : g.values()) total += v;
    CHECK(total == 2.5 * 16);
    CHECK(g(2, 2) == 2.5);
    CHECK(g(5, 5) == 2.5);
    CHECK(g(1, 2) == 0.0);
    CHECK_THROWS_AS(signal_pixels(SignalSpec{5, 1.0, 64}), InputError);
}

TEST_CASE("white-noise field moments") {
    const auto g = gen_field(SignalSpec{10, 0.0, 64}, NoiseSpec{0.0, 0.0, 1.0}, 17);
    double s = 0, s2 = 0;
    for (double v : g.values()) {
        s += v;
        s2 += v * v;
    }
    const double mean = s / 4096, var = s2 / 4096 - mean * mean;
    CHECK(std::abs(mean) < 4.0 / 64.0);
    CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("signal contrast") {
    const auto g = gen_field(SignalSpec{10, 5.0, 64}, NoiseSpec{0.0, 0.0, 1.0}, 18);
    const auto px = signal_pixels(SignalSpec{10, 5.0, 64});
    const std::set<std::size_t> inside(px.begin(), px.end());
    double in = 0, out = 0;
    for (std::size_t i = 0; i < 4096; ++i) (inside.count(i) ? in : out) += g.values()[i];
    const double contrast = in / 100 - out / 3996;
    CHECK(contrast >= 4.5);
    CHECK(contrast <= 5.5);
}

TEST_CASE("fields are reproducible from the seed") {
    const SignalSpec s{10, 1.0, 32};
    const NoiseSpec n{5.0, 0.0, 1.0};
    const auto a = gen_field(s, n, 3), b = gen_field(s, n, 3), c = gen_field(s, n, 4);
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
    CHECK(!std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST_CASE("deformed covariance") {
    const std::size_t n = 32;
    const auto stationary = noise_covariance(NoiseSpec{5.0, 0.0, 1.0}, n);
    CHECK(stationary(0, 1) == doctest::Approx(std::exp(-1.0 / 5.0)));
    CHECK(stationary(0, n + 1) == doctest::Approx(std::exp(-std::sqrt(2.0) / 5.0)));
    const auto deformed = noise_covariance(NoiseSpec{5.0, 2.0, 1.0}, n);
    // g(s) = |s|^2 s: pixel (0,1) maps to (0,1), pixel (0,2) to (0,8)
    CHECK(deformed(0, 1) == doctest::Approx(std::exp(-1.0 / 5.0)));
    CHECK(deformed(1, 2) == doctest::Approx(std::exp(-7.0 / 5.0)));
    CHECK(deformed(0, 0) == 1.0);
}

TEST_CASE("kappa = 2 field is more dependent near the origin") {
    const SignalSpec s{4, 0.0, 32};
    const NoiseSpec noise{5.0, 2.0, 1.0};
    std::vector<Grid2D> fields;
    for (std::uint64_t r = 0; r < 200; ++r) fields.push_back(gen_field(s, noise, 50 + r));
    const double near = lag1_corr(fields, 0, 3);
    const double far = lag1_corr(fields, 29, 3);
    INFO("near " << near << " far " << far);
    CHECK(near > far + 0.1);
}

TEST_CASE("aggregation labels") {
    CHECK(aggregation_scheme(64).size() == 4096);
    CHECK(aggregation_scheme(64).is_complete_identity());
    const auto s16 = aggregation_scheme(16);
    CHECK(s16.size() == 256);
    CHECK(s16.block(0).size() == 16);
    const auto s8 = aggregation_scheme(8);
    CHECK(s8.size() == 64);
    CHECK(s8.block(0).size() == 64);
    CHECK(aggregation_scheme(32).size() == 1024);
    CHECK_THROWS_AS(aggregation_scheme(24), InputError);
    CHECK_THROWS_AS(aggregation_scheme(0), InputError);
}

TEST_CASE("corner mask") {
    const auto px = signal_pixels(SignalSpec{10, 1.0, 64});
    const std::set<std::size_t> signal(px.begin(), px.end());
    for (auto [agg, survivors] : {std::pair{8, 55u}, std::pair{16, 220u}, std::pair{64, 4096u - 576u}}) {
        const auto scheme = aggregation_scheme(agg);
        const auto removed = corner_blocks(scheme);
        const auto pix = pixels_of(scheme, removed);
        CHECK(pix.size() == 576);  // 9/64 of the pixels
        for (auto p : pix) {
            CHECK(p / 64 >= 40);
            CHECK(p % 64 >= 40);
            CHECK(signal.count(p) == 0);
        }
        CHECK(drop_blocks(scheme, removed).size() == survivors);
    }
}

TEST_CASE("random mask avoids the central square") {
    const auto px = signal_pixels(SignalSpec{10, 1.0, 64});
    const std::set<std::size_t> signal(px.begin(), px.end());
    for (auto [agg, count] : {std::pair{8, 9u}, std::pair{16, 36u}}) {
        const auto scheme = aggregation_scheme(agg);
        std::set<std::vector<std::size_t>> seen;
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto removed = random_blocks(scheme, seed);
            CHECK(removed.size() == count);
            CHECK(std::set<std::size_t>(removed.begin(), removed.end()).size() == count);
            for (auto p : pixels_of(scheme, removed)) {
                CHECK(signal.count(p) == 0);
                const bool central = p / 64 >= 24 && p / 64 < 40 && p % 64 >= 24 && p % 64 < 40;
                CHECK(!central);
            }
            CHECK(drop_blocks(scheme, removed).size() == scheme.size() - count);
            seen.insert(removed);
        }
        CHECK(random_blocks(scheme, 3) == random_blocks(scheme, 3));
        CHECK(seen.size() > 20);
    }
}

TEST_CASE("AUC against the pairwise oracle") {
    const std::vector<double> null_p{0.5, 0.2, 0.9, 0.2, 0.04};
    const std::vector<double> alt_p{0.01, 0.2, 0.6, 0.001};
    CHECK(roc_auc(null_p, alt_p) == doctest::Approx(auc_oracle(null_p, alt_p)));
    CHECK(roc_auc({0.5}, {0.5}) == 0.5);
    CHECK(roc_auc({0.9, 0.8}, {0.1, 0.2}) == 1.0);
}

TEST_CASE("null-versus-null ROC is near chance") {
    StudyOptions options;
    options.replicates = 100;
    options.seed = 4;
    const std::vector<StudyCell> cells{{1, 10, 0.0, 5.0, 0.0, 64}};
    const auto rows = run_roc_study(cells, options);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].method == "idl");
    CHECK(rows[0].auc >= 0.4);
    CHECK(rows[0].auc <= 0.6);
    CHECK(rows[0].curve.size() == 101);
    for (std::size_t i = 1; i < rows[0].curve.size(); ++i) {
        CHECK(rows[0].curve[i].false_positive >= rows[0].curve[i - 1].false_positive);
        CHECK(rows[0].curve[i].true_positive >= rows[0].curve[i - 1].true_positive);
    }
}

TEST_CASE("power study rows, standard errors and job-count independence") {
    StudyOptions options;
    options.replicates = 6;
    options.seed = 9;
    options.pipeline.mc_samples = 20000;
    options.methods = {CombineMethod::cpl, CombineMethod::mom};
    const std::vector<StudyCell> cells{{1, 10, 5.0, 5.0, 0.0, 64}, {3, 10, 3.0, 5.0, 0.0, 8}};
    const auto a = run_power_study(cells, options);
    REQUIRE(a.size() == 3);
    CHECK(a[0].method == "idl");
    CHECK(a[1].method == "cpl");
    CHECK(a[2].method == "mom");
    for (const auto& row : a) {
        CHECK(row.replicates == 6);
        CHECK(row.rate == doctest::Approx(row.rejections / 6.0));
        CHECK(row.se == doctest::Approx(std::sqrt(row.rate * (1 - row.rate) / 6.0)));
    }
    options.jobs = 3;
    CHECK(power_csv(run_power_study(cells, options)) == power_csv(a));

    const auto p = replicate_pvalues(cells[1], 2, options);
    REQUIRE(p.size() == 2);
    CHECK(p == replicate_pvalues(cells[1], 2, options));
}

TEST_CASE("invalid cells") {
    StudyOptions options;
    options.replicates = 1;
    CHECK_THROWS_AS(run_power_study({{5, 10, 0.0, 5.0, 0.0, 16}}, options), InputError);
    CHECK_THROWS_AS(run_power_study({{1, 10, 0.0, 5.0, 0.0, 32}}, options), InputError);
    CHECK_THROWS_AS(run_power_study({{1, 10, 0.0, 5.0, 2.0, 16}}, options), InputError);
    CHECK_THROWS_AS(run_power_study({{4, 10, 0.0, 5.0, -1.0, 16}}, options), InputError);
}

TEST_CASE("subsampled z-test p-values") {
    const auto p = subsample_pvalues(90, 100, 100, 5);
    CHECK(p.size() == 100);
    for (double x : p) {
        CHECK(x > 0.0);
        CHECK(x <= 1.0);
    }
    CHECK(p == subsample_pvalues(90, 100, 100, 5));
    const auto full = subsample_pvalues(100, 100, 10, 5);
    for (double x : full) CHECK(x == doctest::Approx(full.front()).epsilon(1e-12));
    CHECK_THROWS_AS(subsample_pvalues(101, 100, 10, 1), InputError);
}

TEST_CASE("type1 study shape and determinism") {
    Type1Options options;
    options.replicates = 200;
    options.sizes = {90};
    options.alphas = {0.05};
    options.mc_samples = 20000;
    const auto rows = run_type1_study(options);
    CHECK(rows.size() == 3);
    options.jobs = 4;
    CHECK(type1_csv(run_type1_study(options)) == type1_csv(rows));
    for (const auto& r : rows) {
        CHECK(r.N == 90);
        CHECK(r.rate < 0.2);
    }
}
