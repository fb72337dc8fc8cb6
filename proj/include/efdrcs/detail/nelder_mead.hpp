#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace efdrcs {

template <class F>
SimplexResult nelder_mead(F&& f, std::vector<double> start, const std::vector<double>& lower,
                          const std::vector<double>& upper, double step, double tolerance, int max_evaluations) {
    const std::size_t dim = start.size();
    auto clamp = [&](std::vector<double>& x) {
        for (std::size_t i = 0; i < dim; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    };
    int evals = 0;
    auto eval = [&](std::vector<double> x) {
        clamp(x);
        ++evals;
        double v = f(x);
        if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
        return std::pair{x, v};
    };

    std::vector<std::pair<std::vector<double>, double>> simplex;
    simplex.reserve(dim + 1);
    simplex.push_back(eval(start));
    for (std::size_t i = 0; i < dim; ++i) {
        auto x = start;
        x[i] += (x[i] + step <= upper[i]) ? step : -step;
        simplex.push_back(eval(x));
    }
    auto by_value = [](const auto& a, const auto& b) { return a.second < b.second; };
    bool converged = false;
    while (evals < max_evaluations) {
        std::sort(simplex.begin(), simplex.end(), by_value);
        if (std::fabs(simplex.back().second - simplex.front().second) <= tolerance) {
            converged = true;
            break;
        }
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t v = 0; v < dim; ++v)
            for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[v].first[i] / static_cast<double>(dim);
        auto along = [&](double t) {
            std::vector<double> x(dim);
            for (std::size_t i = 0; i < dim; ++i)
                x[i] = centroid[i] + t * (simplex.back().first[i] - centroid[i]);
            return x;
        };
        auto reflected = eval(along(-1.0));
        if (reflected.second < simplex.front().second) {
            auto expanded = eval(along(-2.0));
            simplex.back() = expanded.second < reflected.second ? expanded : reflected;
        } else if (reflected.second < simplex[dim - 1].second) {
            simplex.back() = reflected;
        } else {
            const bool outside = reflected.second < simplex.back().second;
            auto contracted = eval(along(outside ? -0.5 : 0.5));
            if (contracted.second < std::min(reflected.second, simplex.back().second)) {
                simplex.back() = contracted;
            } else {
                for (std::size_t v = 1; v <= dim; ++v) {
                    std::vector<double> x(dim);
                    for (std::size_t i = 0; i < dim; ++i)
                        x[i] = simplex.front().first[i] + 0.5 * (simplex[v].first[i] - simplex.front().first[i]);
                    simplex[v] = eval(x);
                }
            }
        }
    }
    std::sort(simplex.begin(), simplex.end(), by_value);
    return {simplex.front().first, simplex.front().second, evals, converged};
}

}  // namespace efdrcs
