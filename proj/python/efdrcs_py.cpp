#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "efdrcs/combine.hpp"
#include "efdrcs/covariance.hpp"
#include "efdrcs/efdr.hpp"
#include "efdrcs/error.hpp"
#include "efdrcs/grid.hpp"
#include "efdrcs/harness.hpp"
#include "efdrcs/pipeline.hpp"
#include "efdrcs/wavelet.hpp"

namespace py = pybind11;
using namespace efdrcs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Blocks = std::vector<std::vector<std::size_t>>;

Grid2D to_grid(const Array& a) {
    if (a.ndim() != 2) throw InputError("expected a 2-D array");
    const auto n1 = static_cast<std::size_t>(a.shape(0)), n2 = static_cast<std::size_t>(a.shape(1));
    return Grid2D(n1, n2, std::vector<double>(a.data(), a.data() + n1 * n2));
}

Array to_array(const Grid2D& g) {
    Array out({g.n1(), g.n2()});
    std::copy(g.values().begin(), g.values().end(), out.mutable_data());
    return out;
}

Array to_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

py::object optional(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

py::dict combine_dict(const CombineResult& r) {
    py::dict d;
    d["method"] = std::string(combine_method_name(r.method));
    d["T"] = r.T;
    d["rho_hat"] = optional(r.rho_hat);
    d["a"] = optional(r.a);
    d["b"] = optional(r.b);
    d["r_hat"] = optional(r.r_hat);
    d["p_final"] = r.p_final;
    d["reject"] = r.reject;
    return d;
}

EfdrConfig efdr_config(int levels, const std::string& filter, std::size_t n_tests, double alpha) {
    EfdrConfig c;
    c.levels = levels;
    c.filter = parse_filter(filter);
    c.n_tests = n_tests;
    c.alpha = alpha;
    return c;
}

}  // namespace

PYBIND11_MODULE(_efdrcs, m) {
    m.doc() = "Signal detection on aggregated lattice data";

    m.def(
        "dwt2",
        [](const Array& x, int levels, const std::string& filter) {
            return to_array(dwt2(to_grid(x), levels, parse_filter(filter)).coefficients);
        },
        py::arg("x"), py::arg("levels") = 2, py::arg("filter") = "la8",
        "Orthonormal 2-D wavelet coefficients, flat and class by class.");
    m.def(
        "idwt2",
        [](const Array& coefficients, std::size_t n1, std::size_t n2, int levels, const std::string& filter) {
            if (static_cast<std::size_t>(coefficients.size()) != n1 * n2)
                throw InputError("coefficient count does not match n1 * n2");
            WaveletPyramid p{PyramidLayout(n1, n2, levels), parse_filter(filter), to_vector(coefficients)};
            return to_array(idwt2(p));
        },
        py::arg("coefficients"), py::arg("n1"), py::arg("n2"), py::arg("levels") = 2, py::arg("filter") = "la8");

    m.def(
        "efdr_test",
        [](const Array& x, int levels, const std::string& filter, std::size_t n_tests, double alpha) {
            const auto r = efdr_test(to_grid(x), efdr_config(levels, filter, n_tests, alpha));
            py::dict d;
            d["p_value"] = r.p_value;
            d["mu_hat"] = to_array(r.mu_hat);
            d["rejected"] = r.rejected;
            d["tested"] = r.tested;
            return d;
        },
        py::arg("x"), py::arg("levels") = 2, py::arg("filter") = "la8", py::arg("n_tests") = 100,
        py::arg("alpha") = 0.05);

    m.def("fisher_T", [](const Array& p) { return fisher_T(to_vector(p)); }, py::arg("pvalues"));
    m.def("mom_rho", [](const Array& t) { return mom_rho(to_vector(t)); }, py::arg("t"));
    m.def(
        "copula_rho",
        [](const Array& t, std::size_t mc_samples, std::uint64_t seed) { return copula_rho(to_vector(t), mc_samples, seed); },
        py::arg("t"), py::arg("mc_samples") = kDefaultCopulaSamples, py::arg("seed") = 0);
    m.def(
        "gamma_params",
        [](double rho, std::size_t M) {
            const auto g = gamma_params(rho, M);
            return py::make_tuple(g.a, g.b);
        },
        py::arg("rho"), py::arg("M"));
    m.def("gamma_sf", &gamma_sf, py::arg("T"), py::arg("a"), py::arg("b"));
    m.def(
        "combine",
        [](const Array& p, const std::string& method, double alpha, std::uint64_t seed, std::size_t mc_samples) {
            return combine_dict(combine(to_vector(p), parse_combine_method(method), alpha, seed, mc_samples));
        },
        py::arg("pvalues"), py::arg("method") = "cpl", py::arg("alpha") = 0.05, py::arg("seed") = 0,
        py::arg("mc_samples") = kDefaultCopulaSamples);

    m.def(
        "standard_blocks",
        [](int label, std::size_t n) { return aggregation_scheme(label, n).blocks(); }, py::arg("label"),
        py::arg("n") = 64, "Blocks of the 64, 16 or 8 aggregation of an n x n grid.");
    m.def(
        "aggregate",
        [](const Array& x, const Blocks& blocks) {
            const auto g = to_grid(x);
            return to_array(aggregate(g, AggregationScheme(g.n1(), g.n2(), blocks)).values);
        },
        py::arg("x"), py::arg("blocks"));
    m.def(
        "gen_field",
        [](std::size_t r, double h, double phi, double kappa, std::size_t n, std::uint64_t seed) {
            return to_array(gen_field(SignalSpec{r, h, n}, NoiseSpec{phi, kappa, 1.0}, seed));
        },
        py::arg("r") = 10, py::arg("h") = 0.0, py::arg("phi") = 5.0, py::arg("kappa") = 0.0, py::arg("n") = 64,
        py::arg("seed") = 0);

    m.def(
        "detect",
        [](const Array& values, const Blocks& blocks, std::size_t n1, std::size_t n2, std::size_t M,
           std::uint64_t seed, const std::string& method, const std::string& covariance,
           const std::string& conditioning, int levels, const std::string& filter, std::size_t n_tests,
           double alpha, std::size_t mc_samples, int jobs) {
            PipelineConfig c;
            c.M = M;
            c.seed = seed;
            c.method = parse_combine_method(method);
            c.covariance = parse_covariance_kind(covariance);
            c.conditioning = parse_conditioning(conditioning);
            c.levels = levels;
            c.filter = parse_filter(filter);
            c.efdr.n_tests = n_tests;
            c.alpha = alpha;
            c.mc_samples = mc_samples;
            c.jobs = jobs;
            const AggregatedData data(AggregationScheme(n1, n2, blocks), to_vector(values));
            DetectionReport r;
            {
                py::gil_scoped_release release;
                r = detect(data, c);
            }
            py::dict d;
            d["p_final"] = r.p_final;
            d["reject"] = r.reject;
            d["pvalues"] = to_array(r.pvalues);
            d["mu_hat"] = to_array(r.mu_hat);
            d["combine"] = combine_dict(r.combined);
            if (r.covariance) {
                py::dict cov;
                cov["kind"] = std::string(covariance_kind_name(r.covariance->family.kind));
                cov["tau2"] = r.covariance->family.tau2;
                cov["phi"] = r.covariance->family.phi;
                cov["nugget"] = r.covariance->family.nugget;
                cov["theta"] = r.covariance->theta;
                d["covariance"] = cov;
            } else {
                d["covariance"] = py::none();
            }
            return d;
        },
        py::arg("values"), py::arg("blocks"), py::arg("n1"), py::arg("n2"), py::arg("M") = 100, py::arg("seed") = 0,
        py::arg("method") = "cpl", py::arg("covariance") = "exp", py::arg("conditioning") = "wavelet",
        py::arg("levels") = 2, py::arg("filter") = "la8", py::arg("n_tests") = 100, py::arg("alpha") = 0.05,
        py::arg("mc_samples") = kDefaultCopulaSamples, py::arg("jobs") = 1);
}
