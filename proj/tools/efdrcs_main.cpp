#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "efdrcs/error.hpp"
#include "efdrcs/harness.hpp"
#include "efdrcs/io.hpp"
#include "efdrcs/pipeline.hpp"

namespace fs = std::filesystem;
using namespace efdrcs;

namespace {

constexpr int kExitParse = 2;
constexpr int kExitNumerical = 3;

struct Common {
    std::uint64_t seed = 0;
    std::size_t M = 100;
    int J = 2;
    std::string filter = "la8";
    std::size_t ntests = 100;
    double alpha = 0.05;
    std::string method = "cpl";
    std::string cov = "exp";
    std::string agg;
    std::string conditioning = "wavelet";
    std::size_t mc_samples = kDefaultCopulaSamples;
    int jobs = 1;
    std::string out = ".";
};

void add_pipeline_flags(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Seed of all randomness")->capture_default_str();
    app->add_option("--M", c.M, "Number of conditional simulations")->capture_default_str();
    app->add_option("--J", c.J, "Wavelet decomposition depth")->capture_default_str();
    app->add_option("--filter", c.filter, "Wavelet filter")
        ->check(CLI::IsMember({"la8", "haar"}))
        ->capture_default_str();
    app->add_option("--ntests", c.ntests, "Number of tested wavelet coefficients")->capture_default_str();
    app->add_option("--alpha", c.alpha, "Significance level")->capture_default_str();
    app->add_option("--method", c.method, "Combination rule")
        ->check(CLI::IsMember({"cpl", "mom", "nve", "fisher"}))
        ->capture_default_str();
    app->add_option("--cov", c.cov, "Covariance family fitted under H0")
        ->check(CLI::IsMember({"white", "exp", "exp-nugget", "matern"}))
        ->capture_default_str();
    app->add_option("--conditioning", c.conditioning, "Covariance used for conditioning")
        ->check(CLI::IsMember({"wavelet", "parametric"}))
        ->capture_default_str();
    app->add_option("--mc-samples", c.mc_samples, "Monte Carlo size of the copula correlation map")
        ->capture_default_str();
    app->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

PipelineConfig pipeline_config(const Common& c) {
    PipelineConfig p;
    p.M = c.M;
    p.levels = c.J;
    p.filter = parse_filter(c.filter);
    p.efdr.n_tests = c.ntests;
    p.covariance = parse_covariance_kind(c.cov);
    p.method = parse_combine_method(c.method);
    p.alpha = c.alpha;
    p.efdr.alpha = c.alpha;
    p.seed = c.seed;
    p.conditioning = parse_conditioning(c.conditioning);
    p.mc_samples = c.mc_samples;
    p.jobs = c.jobs;
    p.validate();
    return p;
}

// 64, 16 and 8 name the standard schemes of a 64 x 64 grid; anything else is a scheme JSON file.
std::optional<AggregationScheme> scheme_from_flag(const std::string& agg, std::size_t n1, std::size_t n2) {
    if (agg.empty()) return std::nullopt;
    if (agg == "64" || agg == "16" || agg == "8") {
        const auto cells = static_cast<std::size_t>(std::stoul(agg));
        if (n1 % cells || n2 % cells)
            throw InputError("--agg " + agg + " needs grid sides divisible by " + agg);
        return regular_blocks(n1, n2, n1 / cells, n2 / cells);
    }
    if (agg.find_first_not_of("0123456789") == std::string::npos)
        throw InputError("--agg must be 64, 16, 8 or a scheme JSON path");
    return parse_scheme_json(read_text(agg));
}

struct Inputs {
    std::string grid;
    std::string data;
};

void add_input_flags(CLI::App* app, Inputs& in) {
    auto* g = app->add_option("--grid", in.grid, "Fine-resolution grid CSV (NA marks missing pixels)");
    auto* d = app->add_option("--data", in.data, "Aggregated observations JSON");
    g->excludes(d);
    d->excludes(g);
}

AggregatedData load_data(const Inputs& in, const std::string& agg) {
    if (!in.data.empty()) {
        if (!agg.empty()) throw InputError("--agg cannot be combined with --data");
        return parse_aggregated_json(read_text(in.data));
    }
    if (in.grid.empty()) throw InputError("one of --grid or --data is required");
    const auto grid = parse_grid_csv(read_text(in.grid));
    auto scheme = scheme_from_flag(agg, grid.n1(), grid.n2());
    if (!grid.complete()) {
        if (scheme) throw InputError("a grid with NA cells is observed pixel by pixel; drop --agg");
        return aggregate(grid, observed_pixel_scheme(grid));
    }
    return aggregate(grid, scheme ? *scheme : identity_scheme(grid.n1(), grid.n2()));
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            if constexpr (std::is_floating_point_v<T>) {
                out.push_back(static_cast<T>(std::stod(item, &used)));
            } else {
                out.push_back(static_cast<T>(std::stoll(item, &used)));
            }
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InputError(std::string(flag) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw InputError(std::string(flag) + ": empty list");
    return out;
}

std::vector<CombineMethod> parse_methods(const std::string& text) {
    std::vector<CombineMethod> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_combine_method(item));
    if (out.empty()) throw InputError("--methods: empty list");
    return out;
}

// "-h" is left free for the signal height flag.
CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& description) {
    auto* sub = app.add_subcommand(name, description);
    sub->set_help_flag("--help", "Print this help message and exit");
    return sub;
}

void progress_line(const std::string& line) { std::cerr << line << '\n'; }

fs::path output_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (!fs::is_directory(p)) throw InputError("cannot create output directory '" + dir + "'");
    return p;
}

int cmd_detect(const Inputs& in, const Common& c, bool timing) {
    const auto config = pipeline_config(c);
    const auto data = load_data(in, c.agg);
    const auto report = detect(data, config);
    const auto dir = output_dir(c.out);
    write_text_atomic(dir / "report.json", report_json(report, timing));
    write_text_atomic(dir / "mu_hat.csv", grid_csv(report.mu_hat));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", report.p_final);
    std::cout << "p=" << buf << " reject=" << (report.reject ? "true" : "false") << std::endl;
    return 0;
}

int cmd_fit(const Inputs& in, const Common& c) {
    const auto config = pipeline_config(c);
    const auto data = load_data(in, c.agg);
    MlOptions ml = config.ml;
    const auto fit = ml_fit(data, config.covariance, config.levels, config.filter, ml);
    const auto text = covariance_json(fit);
    write_text_atomic(output_dir(c.out) / "covariance.json", text);
    std::cout << text;
    return 0;
}

struct SimulateFlags {
    std::size_t n = 64;
    std::size_t r = 10;
    double h = 0.0;
    double phi = 5.0;
    double kappa = 0.0;
    std::string missing = "none";
};

int cmd_simulate(const SimulateFlags& s, const Common& c) {
    SignalSpec signal{s.r, s.h, s.n};
    NoiseSpec noise{s.phi, s.kappa, 1.0};
    signal.validate();
    noise.validate();
    const auto field = gen_field(signal, noise, c.seed);
    const auto dir = output_dir(c.out);
    write_text_atomic(dir / "field.csv", grid_csv(field));
    auto scheme = c.agg.empty() ? identity_scheme(s.n, s.n) : *scheme_from_flag(c.agg, s.n, s.n);
    if (s.missing == "corner") {
        scheme = drop_blocks(scheme, corner_blocks(scheme));
    } else if (s.missing == "random") {
        scheme = drop_blocks(scheme, random_blocks(scheme, c.seed));
    }
    write_text_atomic(dir / "data.json", aggregated_json(aggregate(field, scheme)));
    std::cerr << "wrote " << (dir / "field.csv").string() << " and " << (dir / "data.json").string() << '\n';
    return 0;
}

struct ExperimentFlags {
    int experiment = 1;
    std::string r = "10";
    std::string h = "0,1,3,5";
    std::string phi = "5";
    std::string kappa;
    std::string agg = "16";
    std::string methods = "cpl";
    std::size_t replicates = 100;
    bool roc = false;
};

int cmd_experiment(const ExperimentFlags& e, const Common& c) {
    const auto rs = parse_list<std::size_t>(e.r, "--r");
    const auto hs = parse_list<double>(e.h, "--h");
    const auto phis = parse_list<double>(e.phi, "--phi");
    const auto kappas = parse_list<double>(e.kappa.empty() ? (e.experiment == 4 ? "2" : "0") : e.kappa, "--kappa");
    const auto aggs = parse_list<int>(e.agg, "--agg");
    std::vector<StudyCell> cells;
    for (int agg : aggs)
        for (double phi : phis)
            for (double kappa : kappas)
                for (std::size_t r : rs)
                    for (double h : hs) cells.push_back({e.experiment, r, h, phi, kappa, agg});

    StudyOptions options;
    options.replicates = e.replicates;
    options.seed = c.seed;
    options.jobs = c.jobs;
    options.alpha = c.alpha;
    options.pipeline = pipeline_config(c);
    options.methods = parse_methods(e.methods);
    options.progress = progress_line;

    const auto dir = output_dir(c.out);
    const std::string stem = "experiment" + std::to_string(e.experiment);
    if (e.roc) {
        const auto rows = run_roc_study(cells, options);
        write_text_atomic(dir / (stem + "_roc.csv"), roc_csv(rows));
        write_text_atomic(dir / (stem + "_roc_manifest.json"), power_manifest_json(cells, options, "roc"));
        std::cerr << "wrote " << (dir / (stem + "_roc.csv")).string() << '\n';
    } else {
        const auto rows = run_power_study(cells, options);
        write_text_atomic(dir / (stem + "_power.csv"), power_csv(rows));
        write_text_atomic(dir / (stem + "_power_manifest.json"), power_manifest_json(cells, options, "power"));
        std::cerr << "wrote " << (dir / (stem + "_power.csv")).string() << '\n';
    }
    return 0;
}

struct Type1Flags {
    std::string alphas = "0.01,0.05,0.1";
    std::string sizes = "80,85,90,95";
    std::string methods = "nve,cpl,mom";
    std::size_t replicates = 5000;
    std::size_t population = 100;
};

int cmd_type1(const Type1Flags& t, const Common& c, bool alpha_given) {
    Type1Options options;
    options.alphas = alpha_given ? std::vector<double>{c.alpha} : parse_list<double>(t.alphas, "--alphas");
    options.sizes = parse_list<std::size_t>(t.sizes, "--N");
    options.methods = parse_methods(t.methods);
    options.replicates = t.replicates;
    options.population = t.population;
    options.M = c.M;
    options.seed = c.seed;
    options.jobs = c.jobs;
    options.mc_samples = c.mc_samples;
    const auto rows = run_type1_study(options);
    const auto dir = output_dir(c.out);
    write_text_atomic(dir / "type1.csv", type1_csv(rows));
    write_text_atomic(dir / "type1_manifest.json", type1_manifest_json(options));
    std::cerr << "wrote " << (dir / "type1.csv").string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Signal detection on aggregated lattice data"};
    app.require_subcommand(1);

    Common common;
    Inputs inputs;
    bool timing = false;
    auto* detect_cmd = subcommand(app, "detect", "Test for a signal and estimate it");
    add_input_flags(detect_cmd, inputs);
    add_pipeline_flags(detect_cmd, common);
    detect_cmd->add_option("--agg", common.agg, "Aggregate the grid: 64, 16, 8 or a scheme JSON");
    detect_cmd->add_flag("--times", timing, "Include stage timings in the report");

    auto* fit_cmd = subcommand(app, "fit", "Fit the H0 covariance");
    add_input_flags(fit_cmd, inputs);
    add_pipeline_flags(fit_cmd, common);
    fit_cmd->add_option("--agg", common.agg, "Aggregate the grid: 64, 16, 8 or a scheme JSON");

    SimulateFlags sim;
    auto* sim_cmd = subcommand(app, "simulate", "Generate a synthetic field and its aggregated data");
    add_pipeline_flags(sim_cmd, common);
    sim_cmd->add_option("--n", sim.n, "Grid side")->capture_default_str();
    sim_cmd->add_option("--r", sim.r, "Signal square width")->capture_default_str();
    sim_cmd->add_option("--h", sim.h, "Signal height")->capture_default_str();
    sim_cmd->add_option("--phi", sim.phi, "Noise range (0 is white)")->capture_default_str();
    sim_cmd->add_option("--kappa", sim.kappa, "Deformation exponent")->capture_default_str();
    sim_cmd->add_option("--agg", common.agg, "Aggregation: 64, 16, 8 or a scheme JSON");
    sim_cmd->add_option("--missing", sim.missing, "Missing blocks")
        ->check(CLI::IsMember({"none", "corner", "random"}))
        ->capture_default_str();

    ExperimentFlags exp;
    auto* exp_cmd = subcommand(app, "experiment", "Monte Carlo power or ROC study");
    exp_cmd->add_option("id", exp.experiment, "Experiment 1-4")->required()->check(CLI::Range(1, 4));
    add_pipeline_flags(exp_cmd, common);
    exp_cmd->add_option("--r", exp.r, "Signal widths (comma list)")->capture_default_str();
    exp_cmd->add_option("--h", exp.h, "Signal heights (comma list)")->capture_default_str();
    exp_cmd->add_option("--phi", exp.phi, "Noise ranges (comma list)")->capture_default_str();
    exp_cmd->add_option("--kappa", exp.kappa, "Deformation exponents (comma list; experiment 4)");
    exp_cmd->add_option("--agg", exp.agg, "Aggregations among 64,16,8 (comma list)")->capture_default_str();
    exp_cmd->add_option("--methods", exp.methods, "Combination rules (comma list)")->capture_default_str();
    exp_cmd->add_option("--replicates", exp.replicates, "Replicates per cell")->capture_default_str();
    exp_cmd->add_flag("--roc", exp.roc, "Write ROC curves and AUC instead of power");

    Type1Flags t1;
    auto* t1_cmd = subcommand(app, "type1", "Type-I study of the combination rules");
    add_pipeline_flags(t1_cmd, common);
    t1_cmd->add_option("--alphas", t1.alphas, "Levels (comma list); --alpha selects one")->capture_default_str();
    t1_cmd->add_option("--N", t1.sizes, "Subsample sizes (comma list)")->capture_default_str();
    t1_cmd->add_option("--methods", t1.methods, "Combination rules (comma list)")->capture_default_str();
    t1_cmd->add_option("--replicates", t1.replicates, "Replicates per cell")->capture_default_str();
    t1_cmd->add_option("--population", t1.population, "Population size")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitParse;
    }

    try {
        if (*detect_cmd) return cmd_detect(inputs, common, timing);
        if (*fit_cmd) return cmd_fit(inputs, common);
        if (*sim_cmd) return cmd_simulate(sim, common);
        if (*exp_cmd) return cmd_experiment(exp, common);
        if (*t1_cmd) return cmd_type1(t1, common, t1_cmd->count("--alpha") > 0);
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.numerical() ? kExitNumerical : kExitParse;
    } catch (const NumericalError& e) {
        std::cerr << "error: [numerical] " << e.what() << '\n';
        return kExitNumerical;
    } catch (const InputError& e) {
        std::cerr << "error: [input] " << e.what() << '\n';
        return kExitParse;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
