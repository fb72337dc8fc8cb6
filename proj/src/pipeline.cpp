#include "efdrcs/pipeline.hpp"

#include <chrono>
#include <string>

#include "efdrcs/error.hpp"
#include "efdrcs/parallel.hpp"
#include "efdrcs/rng.hpp"

namespace efdrcs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const NumericalError& e) {
        throw StageError(stage, e, true);
    } catch (const std::exception& e) {
        throw StageError(stage, e, false);
    }
}

constexpr std::size_t kBatch = 16;

}  // namespace

Conditioning parse_conditioning(std::string_view name) {
    if (name == "wavelet") return Conditioning::wavelet;
    if (name == "parametric") return Conditioning::parametric;
    throw InputError("unknown conditioning '" + std::string(name) + "'");
}

std::string_view conditioning_name(Conditioning c) {
    return c == Conditioning::wavelet ? "wavelet" : "parametric";
}

void PipelineConfig::validate() const {
    if (M < 1) throw InputError("M must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (levels < 1) throw InputError("J must be >= 1");
}

EfdrConfig PipelineConfig::efdr_config() const {
    EfdrConfig e = efdr;
    e.levels = levels;
    e.filter = filter;
    return e;
}

std::uint64_t simulation_seed(std::uint64_t seed) { return mix64(seed ^ 0x73696d756c617465ULL); }

ConditionalLaw conditional_law(const AggregatedData& data, const std::optional<FittedCovariance>& fit,
                               const PipelineConfig& config) {
    if (data.scheme.is_complete_identity()) {
        // point mass at the data whatever the covariance
        const std::vector<double> unit(3 * static_cast<std::size_t>(config.levels) + 1, 1.0);
        return build_conditional_wavelet(unit, config.levels, config.filter, data);
    }
    if (!fit) throw InputError("a fitted covariance is required");
    if (config.conditioning == Conditioning::wavelet)
        return build_conditional_wavelet(fit->theta, config.levels, config.filter, data);
    const auto sigma = cov_matrix(fit->family, data.scheme.n1(), data.scheme.n2(), config.ml.spacing_x,
                                  config.ml.spacing_y);
    return build_conditional_projected(sigma, data);
}

DetectionReport detect(const AggregatedData& data, const PipelineConfig& config) {
    config.validate();
    const auto start = Clock::now();
    const auto efdr = config.efdr_config();
    const std::size_t n1 = data.scheme.n1(), n2 = data.scheme.n2();
    run_stage("input", [&] {
        efdr.validate(n1 * n2);
        PyramidLayout(n1, n2, config.levels);
        return 0;
    });

    DetectionReport report;
    report.alpha = config.alpha;
    report.M = config.M;
    report.seed = config.seed;
    report.conditioning = config.conditioning;

    // 1. covariance under H0
    auto t = Clock::now();
    const bool complete = data.scheme.is_complete_identity();
    if (!complete)
        report.covariance = run_stage("fit", [&] {
            return ml_fit(data, config.covariance, config.levels, config.filter, config.ml);
        });
    report.times.fit = seconds_since(t);

    // 2. conditional law of the fine field
    t = Clock::now();
    const auto law = run_stage("condition", [&] { return conditional_law(data, report.covariance, config); });
    report.times.condition = seconds_since(t);

    // 3. EFDR on each simulated field, 5. mean of the signal estimates
    t = Clock::now();
    const WaveletTransform transform(n1, n2, config.levels, config.filter);
    const auto& layout = transform.layout();
    const std::size_t n = layout.size();
    report.pvalues.assign(config.M, 1.0);
    std::vector<double> kept_sum(n, 0.0);
    run_stage("test", [&] {
        if (law.is_point_mass()) {
            // every draw equals the data
            std::vector<double> coeffs(n);
            const Eigen::VectorXd& x = law.mean();
            transform.forward(std::span<const double>(x.data(), n), coeffs);
            const auto r = efdr_coefficients(layout, coeffs, efdr);
            std::fill(report.pvalues.begin(), report.pvalues.end(), r.p_value);
            for (auto i : r.rejected) kept_sum[i] = coeffs[i] * static_cast<double>(config.M);
            return 0;
        }
        const std::size_t batches = (config.M + kBatch - 1) / kBatch;
        std::vector<std::vector<double>> partial(batches, std::vector<double>());
        const auto sim_seed = simulation_seed(config.seed);
        parallel_for(batches, config.jobs, [&](std::size_t b) {
            const std::size_t first = b * kBatch;
            const std::size_t count = std::min(kBatch, config.M - first);
            Eigen::MatrixXd coeffs;
            if (law.has_wavelet_root()) {
                coeffs = law.draw_coefficients(sim_seed, first, count);
            } else {
                coeffs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(count));
                for (std::size_t c = 0; c < count; ++c) {
                    const Eigen::VectorXd x = law.draw(sim_seed, first + c);
                    transform.forward(std::span<const double>(x.data(), n),
                                      std::span<double>(coeffs.col(static_cast<Eigen::Index>(c)).data(), n));
                }
            }
            auto& acc = partial[b];
            acc.assign(n, 0.0);
            for (std::size_t c = 0; c < count; ++c) {
                const auto col = std::span<const double>(coeffs.col(static_cast<Eigen::Index>(c)).data(), n);
                const auto r = efdr_coefficients(layout, col, efdr);
                report.pvalues[first + c] = r.p_value;
                for (auto i : r.rejected) acc[i] += col[i];
            }
        });
        for (const auto& acc : partial)
            for (std::size_t i = 0; i < n; ++i) kept_sum[i] += acc[i];
        return 0;
    });
    for (auto& v : kept_sum) v /= static_cast<double>(config.M);
    std::vector<double> image(n);
    transform.inverse(kept_sum, image);
    report.mu_hat = Grid2D(n1, n2, std::move(image), config.ml.spacing_x, config.ml.spacing_y);
    report.times.test = seconds_since(t);

    // 4, 6. dependence estimate and final test
    t = Clock::now();
    report.combined = run_stage("combine", [&] {
        return combine(report.pvalues, config.method, config.alpha, config.copula_seed.value_or(config.seed),
                       config.mc_samples);
    });
    report.p_final = report.combined.p_final;
    report.reject = report.combined.reject;
    report.times.combine = seconds_since(t);
    report.times.total = seconds_since(start);
    return report;
}

CombineResult recombine(const DetectionReport& report, CombineMethod method, const PipelineConfig& config) {
    return combine(report.pvalues, method, report.alpha, config.copula_seed.value_or(config.seed), config.mc_samples);
}

}  // namespace efdrcs
