#include "doctest.h"

#include <cmath>
#include <string>

#include "efdrcs/error.hpp"
#include "efdrcs/harness.hpp"
#include "efdrcs/io.hpp"
#include "efdrcs/pipeline.hpp"

using namespace efdrcs;

namespace {

void quiet(const std::string&) {}

PipelineConfig small_config(std::uint64_t seed) {
    PipelineConfig c;
    c.seed = seed;
    c.mc_samples = 20000;
    return c;
}

AggregatedData observed(double h, double phi, int agg, std::uint64_t seed) {
    const auto field = gen_field(SignalSpec{10, h, 64}, NoiseSpec{phi, 0.0, 1.0}, seed);
    return aggregate(field, aggregation_scheme(agg));
}

}  // namespace

TEST_CASE("identity scheme with a strong signal rejects") {
    const auto data = observed(5.0, 5.0, 64, 1);
    const auto report = detect(data, small_config(2));
    CHECK(report.reject);
    CHECK(!report.covariance.has_value());
}

TEST_CASE("identity scheme, pure noise: every simulation is the data") {
    set_warning_sink(quiet);
    const auto data = observed(0.0, 5.0, 64, 3);
    const auto report = detect(data, small_config(4));
    set_warning_sink(nullptr);
    for (double p : report.pvalues) CHECK(p == report.pvalues.front());
    // r_hat sits at the top of its range, where rho(r) is just below 1
    CHECK(report.combined.rho_hat.value() > 0.99);
    CHECK(report.p_final == doctest::Approx(report.pvalues.front()).epsilon(1e-3));
    auto mom = small_config(4);
    mom.method = CombineMethod::mom;
    set_warning_sink(quiet);
    const auto m = detect(data, mom);
    set_warning_sink(nullptr);
    CHECK(m.combined.rho_hat.value() == doctest::Approx(1.0 - 1e-9).epsilon(1e-15));
    CHECK(m.p_final == doctest::Approx(m.pvalues.front()).epsilon(1e-6));
    EfdrConfig efdr;
    CHECK(report.pvalues.front() == doctest::Approx(efdr_test(Grid2D(64, 64, data.values), efdr).p_value));
}

TEST_CASE("reports are bit-identical for identical inputs, whatever the job count") {
    const auto data = observed(2.0, 5.0, 16, 5);
    auto config = small_config(6);
    const auto a = detect(data, config);
    config.jobs = 4;
    const auto b = detect(data, config);
    CHECK(report_json(a) == report_json(b));
    CHECK(grid_csv(a.mu_hat) == grid_csv(b.mu_hat));
    config.seed = 7;
    CHECK(report_json(detect(data, config)) != report_json(a));
}

TEST_CASE("mu_hat is the mean of the per-simulation estimates") {
    const auto data = observed(3.0, 5.0, 16, 8);
    for (auto conditioning : {Conditioning::wavelet, Conditioning::parametric}) {
        auto config = small_config(9);
        config.M = 12;
        config.conditioning = conditioning;
        const auto report = detect(data, config);
        const auto law = conditional_law(data, report.covariance, config);
        const auto efdr = config.efdr_config();
        std::vector<double> mean(64 * 64, 0.0);
        for (std::size_t i = 0; i < config.M; ++i) {
            const Eigen::VectorXd x = law.draw(simulation_seed(config.seed), i);
            const Grid2D field(64, 64, std::vector<double>(x.data(), x.data() + x.size()));
            const auto r = efdr_test(field, efdr);
            CHECK(r.p_value == doctest::Approx(report.pvalues[i]).epsilon(1e-9));
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += r.mu_hat.values()[k] / config.M;
        }
        double worst = 0;
        for (std::size_t k = 0; k < mean.size(); ++k)
            worst = std::max(worst, std::abs(mean[k] - report.mu_hat.values()[k]));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("simulations reproduce the aggregated data") {
    const auto data = observed(1.0, 5.0, 8, 10);
    auto config = small_config(11);
    const auto fit = ml_fit(data, config.covariance, config.levels, config.filter);
    for (auto conditioning : {Conditioning::wavelet, Conditioning::parametric}) {
        config.conditioning = conditioning;
        const auto law = conditional_law(data, fit, config);
        for (std::uint64_t i = 0; i < 5; ++i) {
            const Eigen::VectorXd x = law.draw(3, i);
            const auto hx = data.scheme.apply(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
            for (std::size_t k = 0; k < hx.size(); ++k) CHECK(std::abs(hx[k] - data.values[k]) < 1e-7);
        }
    }
}

TEST_CASE("recombine shares T") {
    const auto data = observed(2.0, 5.0, 16, 12);
    const auto config = small_config(13);
    const auto report = detect(data, config);
    const auto mom = recombine(report, CombineMethod::mom, config);
    CHECK(mom.T == report.combined.T);
    CHECK(recombine(report, CombineMethod::cpl, config).p_final == report.p_final);
}

TEST_CASE("high-SNR decision is stable across seeds") {
    int rejects = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto data = observed(5.0, 5.0, 16, 100 + s);
        rejects += detect(data, small_config(200 + s)).reject;
    }
    CHECK(rejects >= 19);
}

TEST_CASE("pure-noise rejection rate at 16 x 16") {
    int rejects = 0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
        const auto data = observed(0.0, 5.0, 16, 1000 + static_cast<std::uint64_t>(r));
        auto config = small_config(5000 + static_cast<std::uint64_t>(r));
        config.copula_seed = 1;
        rejects += detect(data, config).reject;
    }
    const double rate = static_cast<double>(rejects) / reps;
    INFO("rate = " << rate);
    CHECK(rate >= 0.02);
    CHECK(rate <= 0.10);
}

TEST_CASE("stage-tagged errors") {
    const auto data = observed(0.0, 5.0, 16, 1);
    auto config = small_config(1);
    config.levels = 7;
    try {
        detect(data, config);
        FAIL("expected an error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "input");
        CHECK(!e.numerical());
    } catch (const InputError&) {
        // rejected before the pipeline started
    }
    config = small_config(1);
    config.M = 0;
    CHECK_THROWS_AS(config.validate(), InputError);
    CHECK(parse_conditioning("parametric") == Conditioning::parametric);
    CHECK_THROWS_AS(parse_conditioning("kriging"), InputError);
}
