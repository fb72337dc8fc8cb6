#include "efdrcs/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "efdrcs/error.hpp"
#include "json.hpp"

namespace efdrcs {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view field, std::size_t line) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end || field.empty())
        throw InputError("grid CSV line " + std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
    return value;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class F>
auto json_guard(std::string_view what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw InputError(std::string(what) + ": " + e.what());
    }
}

json scheme_to_json(const AggregationScheme& scheme) {
    return {{"n1", scheme.n1()}, {"n2", scheme.n2()}, {"blocks", scheme.blocks()}};
}

AggregationScheme scheme_from_json(const json& j) {
    return AggregationScheme(j.at("n1").get<std::size_t>(), j.at("n2").get<std::size_t>(),
                             j.at("blocks").get<std::vector<std::vector<std::size_t>>>());
}

json family_to_json(const CovarianceFamily& f) {
    return {{"kind", std::string(covariance_kind_name(f.kind))},
            {"tau2", f.tau2},
            {"gamma", {{"phi", f.phi}, {"nu", f.nu}, {"nugget", f.nugget}}}};
}

json pipeline_to_json(const PipelineConfig& c) {
    const auto e = c.efdr_config();
    return {{"M", c.M},
            {"J", c.levels},
            {"filter", std::string(filter_name(c.filter))},
            {"covariance", std::string(covariance_kind_name(c.covariance))},
            {"method", std::string(combine_method_name(c.method))},
            {"alpha", c.alpha},
            {"seed", c.seed},
            {"conditioning", std::string(conditioning_name(c.conditioning))},
            {"mc_samples", c.mc_samples},
            {"copula_seed", c.copula_seed ? json(*c.copula_seed) : json(nullptr)},
            {"efdr",
             {{"n_tests", e.n_tests},
              {"alpha", e.alpha},
              {"neighbor_weight", e.neighbor_weight},
              {"spatial_neighbors", e.spatial_neighbors},
              {"exclude_boundary", e.exclude_boundary},
              {"gdf", e.gdf}}}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Grid2D parse_grid_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(start, nl - start));
        if (!line.empty()) lines.push_back(line);
        start = nl + 1;
    }
    if (lines.empty()) throw InputError("grid CSV: empty input");
    const auto header = split_fields(lines[0]);
    if (header.size() != 2) throw InputError("grid CSV: header must be 'n1,n2'");
    const auto n1 = parse_number<std::size_t>(header[0], 1);
    const auto n2 = parse_number<std::size_t>(header[1], 1);
    if (n1 == 0 || n2 == 0) throw InputError("grid CSV: empty grid");
    if (lines.size() != n1 + 1)
        throw InputError("grid CSV: expected " + std::to_string(n1) + " rows, found " +
                         std::to_string(lines.size() - 1));
    std::vector<double> values(n1 * n2, 0.0);
    std::vector<std::uint8_t> mask(n1 * n2, 1);
    bool missing = false;
    for (std::size_t i = 0; i < n1; ++i) {
        const auto fields = split_fields(lines[i + 1]);
        if (fields.size() != n2)
            throw InputError("grid CSV line " + std::to_string(i + 2) + ": expected " + std::to_string(n2) +
                             " values, found " + std::to_string(fields.size()));
        for (std::size_t j = 0; j < n2; ++j) {
            if (fields[j] == "NA") {
                mask[i * n2 + j] = 0;
                missing = true;
                continue;
            }
            const double v = parse_number<double>(fields[j], i + 2);
            if (!std::isfinite(v)) throw InputError("grid CSV line " + std::to_string(i + 2) + ": non-finite value");
            values[i * n2 + j] = v;
        }
    }
    Grid2D grid(n1, n2, std::move(values));
    if (missing) grid.set_mask(std::move(mask));
    return grid;
}

std::string grid_csv(const Grid2D& grid) {
    std::string out = std::to_string(grid.n1()) + "," + std::to_string(grid.n2()) + "\n";
    for (std::size_t i = 0; i < grid.n1(); ++i) {
        for (std::size_t j = 0; j < grid.n2(); ++j) {
            if (j) out += ',';
            const std::size_t k = i * grid.n2() + j;
            out += grid.observed(k) ? format_double(grid.values()[k]) : "NA";
        }
        out += '\n';
    }
    return out;
}

AggregationScheme parse_scheme_json(std::string_view text) {
    return json_guard("scheme JSON", [&] { return scheme_from_json(json::parse(text)); });
}

std::string scheme_json(const AggregationScheme& scheme) { return scheme_to_json(scheme).dump() + "\n"; }

AggregatedData parse_aggregated_json(std::string_view text) {
    return json_guard("aggregated JSON", [&] {
        const auto j = json::parse(text);
        return AggregatedData(scheme_from_json(j.at("scheme")), j.at("values").get<std::vector<double>>());
    });
}

std::string aggregated_json(const AggregatedData& data) {
    return json{{"scheme", scheme_to_json(data.scheme)}, {"values", data.values}}.dump() + "\n";
}

std::string covariance_json(const FittedCovariance& fit) {
    auto j = family_to_json(fit.family);
    j["J"] = fit.levels;
    j["filter"] = std::string(filter_name(fit.filter));
    j["theta"] = fit.theta;
    j["neg_log_profile"] = fit.neg_log_profile;
    j["evaluations"] = fit.evaluations;
    j["converged"] = fit.converged;
    return j.dump(2) + "\n";
}

FittedCovariance parse_covariance_json(std::string_view text) {
    return json_guard("covariance JSON", [&] {
        const auto j = json::parse(text);
        FittedCovariance fit;
        fit.family.kind = parse_covariance_kind(j.at("kind").get<std::string>());
        fit.family.tau2 = j.at("tau2").get<double>();
        const auto& g = j.at("gamma");
        fit.family.phi = g.at("phi").get<double>();
        fit.family.nu = g.at("nu").get<double>();
        fit.family.nugget = g.at("nugget").get<double>();
        fit.family.validate();
        fit.levels = j.at("J").get<int>();
        fit.filter = parse_filter(j.value("filter", std::string("la8")));
        fit.theta = j.at("theta").get<std::vector<double>>();
        fit.neg_log_profile = j.value("neg_log_profile", 0.0);
        fit.evaluations = j.value("evaluations", 0);
        fit.converged = j.value("converged", true);
        return fit;
    });
}

std::string report_json(const DetectionReport& report, bool with_times) {
    const auto& c = report.combined;
    json j{{"p_final", report.p_final},
           {"reject", report.reject},
           {"alpha", report.alpha},
           {"M", report.M},
           {"seed", report.seed},
           {"conditioning", std::string(conditioning_name(report.conditioning))},
           {"combine",
            {{"method", std::string(combine_method_name(c.method))},
             {"T", c.T},
             {"rho_hat", optional_json(c.rho_hat)},
             {"a", optional_json(c.a)},
             {"b", optional_json(c.b)},
             {"r_hat", optional_json(c.r_hat)}}},
           {"pvalues", report.pvalues},
           {"covariance", nullptr},
           {"mu_hat", {{"n1", report.mu_hat.n1()}, {"n2", report.mu_hat.n2()}, {"max_abs", 0.0}}}};
    double max_abs = 0.0;
    for (double v : report.mu_hat.values()) max_abs = std::max(max_abs, std::abs(v));
    j["mu_hat"]["max_abs"] = max_abs;
    if (report.covariance) j["covariance"] = json::parse(covariance_json(*report.covariance));
    if (with_times) {
        const auto& t = report.times;
        j["times"] = {{"fit", t.fit}, {"condition", t.condition}, {"test", t.test}, {"combine", t.combine},
                      {"total", t.total}};
    }
    return j.dump(2) + "\n";
}

std::string power_manifest_json(const std::vector<StudyCell>& cells, const StudyOptions& options,
                                std::string_view kind) {
    json list = json::array();
    for (const auto& c : cells)
        list.push_back({{"experiment", c.experiment},
                        {"r", c.r},
                        {"h", c.h},
                        {"phi", c.phi},
                        {"kappa", c.kappa},
                        {"agg", c.agg}});
    json methods = json::array();
    for (auto m : options.methods) methods.push_back(std::string(combine_method_name(m)));
    return json{{"study", kind},
                {"seed", options.seed},
                {"replicates", options.replicates},
                {"alpha", options.alpha},
                {"methods", methods},
                {"pipeline", pipeline_to_json(options.pipeline)},
                {"seed_derivation",
                 "field: stream_id(seed, field tag, phi bits, kappa bits, replicate); "
                 "pipeline: stream_id(seed, pipeline tag, replicate); copula map: seed"},
                {"cells", list}}
               .dump(2) +
           "\n";
}

std::string type1_manifest_json(const Type1Options& options) {
    json methods = json::array();
    for (auto m : options.methods) methods.push_back(std::string(combine_method_name(m)));
    return json{{"study", "type1"},
                {"seed", options.seed},
                {"replicates", options.replicates},
                {"sizes", options.sizes},
                {"alphas", options.alphas},
                {"population", options.population},
                {"M", options.M},
                {"mc_samples", options.mc_samples},
                {"methods", methods},
                {"seed_derivation", "replicate: stream_id(seed, type1 tag, N, replicate); copula map: seed"}}
               .dump(2) +
           "\n";
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + tmp.string() + "'");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) throw InputError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw InputError("cannot rename onto '" + path.string() + "'");
    }
}

}  // namespace efdrcs
