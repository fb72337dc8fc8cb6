#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "efdrcs/error.hpp"
#include "efdrcs/io.hpp"
#include "test_support.hpp"

using namespace efdrcs;

TEST_CASE("grid CSV round trip is exact") {
    const auto g = testsupport::gaussian_grid(5, 7, 3);
    const auto back = parse_grid_csv(grid_csv(g));
    CHECK(back.n1() == 5);
    CHECK(back.n2() == 7);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(back.values()[i] == g.values()[i]);
    CHECK(back.complete());
}

TEST_CASE("NA cells become a mask") {
    const auto g = parse_grid_csv("2,3\n1, NA ,3\n4,5,6.5\n");
    REQUIRE(g.mask().size() == 6);
    CHECK(!g.observed(1));
    CHECK(g.observed(0));
    CHECK(g.values()[1] == 0.0);
    CHECK(g(1, 2) == 6.5);
    const auto again = parse_grid_csv(grid_csv(g));
    CHECK(again.mask() == g.mask());
}

TEST_CASE("malformed grid CSV") {
    CHECK_THROWS_AS(parse_grid_csv(""), InputError);
    CHECK_THROWS_AS(parse_grid_csv("2,2\n1,2\n"), InputError);
    CHECK_THROWS_AS(parse_grid_csv("2,2\n1,2\n3\n"), InputError);
    CHECK_THROWS_AS(parse_grid_csv("2,2\n1,2\n3,x\n"), InputError);
    CHECK_THROWS_AS(parse_grid_csv("a,2\n1,2\n"), InputError);
}

TEST_CASE("scheme and aggregated JSON round trips") {
    const auto scheme = regular_blocks(8, 8, 2, 4);
    const auto back = parse_scheme_json(scheme_json(scheme));
    CHECK(back.n1() == 8);
    CHECK(back.blocks() == scheme.blocks());

    const auto data = aggregate(testsupport::gaussian_grid(8, 8, 5), scheme);
    const auto d2 = parse_aggregated_json(aggregated_json(data));
    CHECK(d2.values == data.values);
    CHECK(d2.scheme.blocks() == data.scheme.blocks());

    CHECK_THROWS_AS(parse_scheme_json("{\"n1\": 2}"), InputError);
    CHECK_THROWS_AS(parse_scheme_json("not json"), InputError);
    CHECK_THROWS_AS(parse_aggregated_json(R"({"scheme":{"n1":2,"n2":2,"blocks":[[0,1],[2,3]]},"values":[1]})"),
                    InputError);
}

TEST_CASE("covariance JSON round trip") {
    FittedCovariance fit;
    fit.family.kind = CovarianceKind::exponential_nugget;
    fit.family.tau2 = 1.7;
    fit.family.phi = 4.25;
    fit.family.nugget = 0.1;
    fit.theta = {0.3, 1.0 / 3.0, 2.5};
    fit.neg_log_profile = -12.5;
    fit.evaluations = 31;
    fit.converged = false;
    fit.filter = WaveletFilter::haar;
    fit.levels = 3;
    const auto back = parse_covariance_json(covariance_json(fit));
    CHECK(back.family.kind == fit.family.kind);
    CHECK(back.family.tau2 == fit.family.tau2);
    CHECK(back.family.phi == fit.family.phi);
    CHECK(back.family.nugget == fit.family.nugget);
    CHECK(back.theta == fit.theta);
    CHECK(back.levels == 3);
    CHECK(back.filter == WaveletFilter::haar);
    CHECK(back.evaluations == 31);
    CHECK(!back.converged);
}

TEST_CASE("report JSON fields") {
    const auto field = gen_field(SignalSpec{10, 3.0, 64}, NoiseSpec{5.0, 0.0, 1.0}, 1);
    PipelineConfig config;
    config.M = 8;
    config.mc_samples = 5000;
    const auto report = detect(aggregate(field, aggregation_scheme(16)), config);
    const auto j = nlohmann::json::parse(report_json(report));
    CHECK(j.at("p_final").get<double>() == report.p_final);
    CHECK(j.at("reject").get<bool>() == report.reject);
    CHECK(j.at("pvalues").size() == 8);
    CHECK(j.at("combine").at("T").get<double>() == report.combined.T);
    CHECK(!j.contains("times"));
    CHECK(nlohmann::json::parse(report_json(report, true)).contains("times"));
}

TEST_CASE("atomic write replaces the file") {
    const auto dir = std::filesystem::temp_directory_path() / "efdrcs_io_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "out.txt";
    write_text_atomic(path, "first");
    write_text_atomic(path, "second");
    CHECK(read_text(path) == "second");
    CHECK(!std::filesystem::exists(dir / "out.txt.tmp"));
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(read_text(dir / "missing.txt"), InputError);
}
