#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "efdrcs/error.hpp"
#include "efdrcs/grid.hpp"
#include "test_support.hpp"

using namespace efdrcs;

TEST_CASE("aggregate small examples") {
    const Grid2D g(2, 2, {1, 2, 3, 4});
    CHECK(aggregate(g, identity_scheme(2, 2)).values == std::vector<double>{1, 2, 3, 4});
    CHECK(aggregate(g, AggregationScheme(2, 2, {{0, 1, 2, 3}})).values == std::vector<double>{2.5});
    CHECK(aggregate(g, AggregationScheme(2, 2, {{0, 1}, {2, 3}})).values == std::vector<double>{1.5, 3.5});
}

TEST_CASE("aggregate rejects bad input") {
    const Grid2D g(2, 2, {1, 2, 3, 4});
    CHECK_THROWS_AS(AggregationScheme(2, 2, {{}}), InputError);
    CHECK_THROWS_AS(AggregationScheme(2, 2, {{4}}), InputError);
    CHECK_THROWS_AS(aggregate(g, identity_scheme(4, 4)), InputError);
    CHECK_THROWS_AS(Grid2D(1, 4, std::vector<double>(4)), InputError);
    CHECK_THROWS_AS(Grid2D(2, 2, std::vector<double>(3)), InputError);
}

TEST_CASE("regular blocks") {
    CHECK(regular_blocks(64, 64, 4, 4).size() == 256);
    CHECK(regular_blocks(64, 64, 8, 8).size() == 64);
    const auto id = regular_blocks(64, 64, 1, 1);
    CHECK(id.size() == 4096);
    CHECK(id.is_complete_identity());
    CHECK_THROWS_AS(regular_blocks(64, 64, 5, 4), InputError);
    const auto s = regular_blocks(4, 6, 2, 3);
    CHECK(s.block(0) == std::vector<std::size_t>{0, 1, 2, 6, 7, 8});
    CHECK(s.block(1) == std::vector<std::size_t>{3, 4, 5, 9, 10, 11});
}

TEST_CASE("drop blocks") {
    const auto s = regular_blocks(64, 64, 8, 8);
    CHECK(drop_blocks(s, {}).blocks() == s.blocks());
    // upper-right 3x3 tiles of the 8x8 tiling = 24x24 pixels = 9/64
    std::vector<std::size_t> corner;
    for (std::size_t r = 5; r < 8; ++r)
        for (std::size_t c = 5; c < 8; ++c) corner.push_back(r * 8 + c);
    const auto kept = drop_blocks(s, corner);
    CHECK(kept.size() == 55);
    std::vector<std::size_t> all(64);
    for (std::size_t i = 0; i < 64; ++i) all[i] = i;
    CHECK_THROWS_AS(drop_blocks(s, all), InputError);
    CHECK_THROWS_AS(drop_blocks(s, std::vector<std::size_t>{64}), InputError);
}

TEST_CASE("aggregation properties") {
    std::mt19937_64 gen(11);
    // random overlapping blocks
    std::vector<std::vector<std::size_t>> blocks;
    for (int k = 0; k < 20; ++k) {
        std::set<std::size_t> b;
        const auto size = 1 + gen() % 10;
        while (b.size() < size) b.insert(gen() % 64);
        blocks.emplace_back(b.begin(), b.end());
    }
    const AggregationScheme scheme(8, 8, blocks);
    const auto x = testsupport::gaussian_grid(8, 8, 1);
    const auto y = testsupport::gaussian_grid(8, 8, 2);
    std::vector<double> combo(64);
    for (std::size_t i = 0; i < 64; ++i) combo[i] = 2.5 * x.values()[i] - 0.75 * y.values()[i];
    const auto ax = aggregate(x, scheme).values, ay = aggregate(y, scheme).values;
    const auto ac = aggregate(Grid2D(8, 8, combo), scheme).values;
    for (std::size_t k = 0; k < scheme.size(); ++k) CHECK(std::abs(ac[k] - (2.5 * ax[k] - 0.75 * ay[k])) < 1e-12);

    const auto c = aggregate(Grid2D(8, 8, 3.25), scheme).values;
    CHECK(std::all_of(c.begin(), c.end(), [](double v) { return v == 3.25; }));

    // apply_transpose is the adjoint of apply
    const auto z = testsupport::gaussian_vector(scheme.size(), 5);
    const auto hz = scheme.apply_transpose(z);
    double lhs = 0, rhs = 0;
    for (std::size_t k = 0; k < z.size(); ++k) lhs += z[k] * ax[k];
    for (std::size_t i = 0; i < 64; ++i) rhs += hz[i] * x.values()[i];
    CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("observed pixel scheme follows the mask") {
    Grid2D g(2, 3, {1, 2, 3, 4, 5, 6});
    g.set_mask({1, 0, 1, 1, 1, 0});
    const auto s = observed_pixel_scheme(g);
    CHECK(s.size() == 4);
    CHECK_FALSE(s.is_complete_identity());
    CHECK(aggregate(g, s).values == std::vector<double>{1, 3, 4, 5});
}

TEST_CASE("block shapes group translates") {
    const auto s = regular_blocks(8, 8, 2, 2);
    const auto shapes = index_block_shapes(s);
    CHECK(shapes.offsets.size() == 1);
    CHECK(shapes.anchors[5].row == 2);
    CHECK(shapes.anchors[5].col == 2);
}
