#include "efdrcs/grid.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "efdrcs/error.hpp"

namespace efdrcs {

Grid2D::Grid2D(std::size_t n1, std::size_t n2, std::vector<double> values, double spacing_x,
               double spacing_y)
    : n1_(n1), n2_(n2), values_(std::move(values)), hx_(spacing_x), hy_(spacing_y) {
    if (n1 < 2 || n2 < 2) throw InputError("grid dimensions must each be >= 2");
    if (values_.size() != n1 * n2)
        throw InputError("grid has " + std::to_string(values_.size()) + " values, expected " +
                         std::to_string(n1 * n2));
    if (!(hx_ > 0.0) || !(hy_ > 0.0)) throw InputError("grid spacing must be positive");
}

Grid2D::Grid2D(std::size_t n1, std::size_t n2, double fill)
    : Grid2D(n1, n2, std::vector<double>(n1 * n2, fill)) {}

void Grid2D::set_mask(std::vector<std::uint8_t> mask) {
    if (!mask.empty() && mask.size() != values_.size())
        throw InputError("mask length does not match grid");
    mask_ = std::move(mask);
}

bool Grid2D::complete() const noexcept {
    return std::all_of(mask_.begin(), mask_.end(), [](std::uint8_t m) { return m != 0; });
}

AggregationScheme::AggregationScheme(std::size_t n1, std::size_t n2,
                                     std::vector<std::vector<std::size_t>> blocks)
    : n1_(n1), n2_(n2), blocks_(std::move(blocks)) {
    if (n1 < 2 || n2 < 2) throw InputError("scheme grid dimensions must each be >= 2");
    if (blocks_.empty()) throw InputError("aggregation scheme has no blocks");
    const std::size_t n = n1 * n2;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        if (blocks_[k].empty()) throw InputError("block " + std::to_string(k) + " is empty");
        for (auto idx : blocks_[k])
            if (idx >= n)
                throw InputError("block " + std::to_string(k) + " has pixel index " +
                                 std::to_string(idx) + " outside the grid");
        std::vector<std::size_t> sorted = blocks_[k];
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InputError("block " + std::to_string(k) + " lists a pixel twice");
    }
}

bool AggregationScheme::is_complete_identity() const noexcept {
    if (blocks_.size() != pixels()) return false;
    std::vector<std::uint8_t> seen(pixels(), 0);
    for (const auto& b : blocks_) {
        if (b.size() != 1 || seen[b[0]]) return false;
        seen[b[0]] = 1;
    }
    return true;
}

std::vector<double> AggregationScheme::apply(std::span<const double> fine) const {
    if (fine.size() != pixels()) throw InputError("aggregation: vector length does not match scheme");
    std::vector<double> out(blocks_.size());
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        double sum = 0.0;
        for (auto idx : blocks_[k]) sum += fine[idx];
        out[k] = sum / static_cast<double>(blocks_[k].size());
    }
    return out;
}

std::vector<double> AggregationScheme::apply_transpose(std::span<const double> coarse) const {
    if (coarse.size() != blocks_.size()) throw InputError("aggregation: vector length does not match K");
    std::vector<double> out(pixels(), 0.0);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        const double w = coarse[k] / static_cast<double>(blocks_[k].size());
        for (auto idx : blocks_[k]) out[idx] += w;
    }
    return out;
}

AggregatedData::AggregatedData(AggregationScheme s, std::vector<double> v)
    : scheme(std::move(s)), values(std::move(v)) {
    if (values.size() != scheme.size())
        throw InputError("aggregated data has " + std::to_string(values.size()) +
                         " values but the scheme has " + std::to_string(scheme.size()) + " blocks");
}

AggregatedData aggregate(const Grid2D& grid, const AggregationScheme& scheme) {
    if (grid.n1() != scheme.n1() || grid.n2() != scheme.n2())
        throw InputError("aggregate: scheme shape does not match grid");
    return AggregatedData(scheme, scheme.apply(grid.values()));
}

AggregationScheme regular_blocks(std::size_t n1, std::size_t n2, std::size_t b1, std::size_t b2) {
    if (b1 == 0 || b2 == 0 || n1 % b1 != 0 || n2 % b2 != 0)
        throw InputError("regular_blocks: block size must divide the grid size");
    const std::size_t t1 = n1 / b1;
    const std::size_t t2 = n2 / b2;
    std::vector<std::vector<std::size_t>> blocks;
    blocks.reserve(t1 * t2);
    for (std::size_t r = 0; r < t1; ++r)
        for (std::size_t c = 0; c < t2; ++c) {
            std::vector<std::size_t> b;
            b.reserve(b1 * b2);
            for (std::size_t i = 0; i < b1; ++i)
                for (std::size_t j = 0; j < b2; ++j) b.push_back((r * b1 + i) * n2 + c * b2 + j);
            blocks.push_back(std::move(b));
        }
    return AggregationScheme(n1, n2, std::move(blocks));
}

AggregationScheme identity_scheme(std::size_t n1, std::size_t n2) { return regular_blocks(n1, n2, 1, 1); }

AggregationScheme observed_pixel_scheme(const Grid2D& grid) {
    std::vector<std::vector<std::size_t>> blocks;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid.observed(i)) blocks.push_back({i});
    if (blocks.empty()) throw InputError("grid has no observed pixels");
    return AggregationScheme(grid.n1(), grid.n2(), std::move(blocks));
}

AggregationScheme drop_blocks(const AggregationScheme& scheme, std::span<const std::size_t> removed) {
    std::vector<std::uint8_t> drop(scheme.size(), 0);
    for (auto k : removed) {
        if (k >= scheme.size()) throw InputError("drop_blocks: block index out of range");
        drop[k] = 1;
    }
    std::vector<std::vector<std::size_t>> kept;
    for (std::size_t k = 0; k < scheme.size(); ++k)
        if (!drop[k]) kept.push_back(scheme.block(k));
    if (kept.empty()) throw InputError("drop_blocks: cannot remove every block");
    return AggregationScheme(scheme.n1(), scheme.n2(), std::move(kept));
}

BlockShapes index_block_shapes(const AggregationScheme& scheme) {
    BlockShapes out;
    std::map<std::vector<std::pair<long, long>>, std::size_t> lookup;
    const auto n2 = static_cast<long>(scheme.n2());
    for (const auto& block : scheme.blocks()) {
        long r0 = std::numeric_limits<long>::max();
        long c0 = std::numeric_limits<long>::max();
        for (auto idx : block) {
            r0 = std::min(r0, static_cast<long>(idx) / n2);
            c0 = std::min(c0, static_cast<long>(idx) % n2);
        }
        std::vector<std::pair<long, long>> offs;
        offs.reserve(block.size());
        for (auto idx : block) offs.emplace_back(static_cast<long>(idx) / n2 - r0, static_cast<long>(idx) % n2 - c0);
        std::sort(offs.begin(), offs.end());
        auto [it, inserted] = lookup.try_emplace(offs, out.offsets.size());
        if (inserted) out.offsets.push_back(std::move(offs));
        out.anchors.push_back({it->second, r0, c0});
    }
    return out;
}

}  // namespace efdrcs
