#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace efdrcs {

/// Fine-resolution lattice image, row-major. Pixel (i1, i2) sits at
/// (i1 * spacing_x, i2 * spacing_y); index 0 is the lower-left corner when
/// rows are read as the x axis.
class Grid2D {
public:
    Grid2D(std::size_t n1, std::size_t n2, std::vector<double> values, double spacing_x = 1.0,
           double spacing_y = 1.0);
    Grid2D(std::size_t n1, std::size_t n2, double fill = 0.0);

    std::size_t n1() const noexcept { return n1_; }
    std::size_t n2() const noexcept { return n2_; }
    std::size_t size() const noexcept { return values_.size(); }
    double spacing_x() const noexcept { return hx_; }
    double spacing_y() const noexcept { return hy_; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double operator()(std::size_t i1, std::size_t i2) const { return values_[i1 * n2_ + i2]; }
    double& operator()(std::size_t i1, std::size_t i2) { return values_[i1 * n2_ + i2]; }

    /// Observation mask; empty means every pixel is observed.
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
    void set_mask(std::vector<std::uint8_t> mask);
    bool observed(std::size_t index) const noexcept { return mask_.empty() || mask_[index] != 0; }
    bool complete() const noexcept;

private:
    std::size_t n1_;
    std::size_t n2_;
    std::vector<double> values_;
    std::vector<std::uint8_t> mask_;
    double hx_ = 1.0;
    double hy_ = 1.0;
};

/// Blocks B_k as fine-pixel index sets. Row k of the implied averaging
/// operator H is the indicator of block k divided by its size.
class AggregationScheme {
public:
    AggregationScheme(std::size_t n1, std::size_t n2, std::vector<std::vector<std::size_t>> blocks);

    std::size_t n1() const noexcept { return n1_; }
    std::size_t n2() const noexcept { return n2_; }
    std::size_t pixels() const noexcept { return n1_ * n2_; }
    std::size_t size() const noexcept { return blocks_.size(); }
    const std::vector<std::size_t>& block(std::size_t k) const { return blocks_[k]; }
    const std::vector<std::vector<std::size_t>>& blocks() const noexcept { return blocks_; }

    /// True when every pixel is its own block and all pixels are present
    /// (H is a permutation of the identity).
    bool is_complete_identity() const noexcept;

    /// Applies H to a fine-resolution vector.
    std::vector<double> apply(std::span<const double> fine) const;
    /// Applies H' to a K-vector.
    std::vector<double> apply_transpose(std::span<const double> coarse) const;

private:
    std::size_t n1_;
    std::size_t n2_;
    std::vector<std::vector<std::size_t>> blocks_;
};

struct AggregatedData {
    AggregatedData(AggregationScheme scheme, std::vector<double> values);

    AggregationScheme scheme;
    std::vector<double> values;
};

AggregatedData aggregate(const Grid2D& grid, const AggregationScheme& scheme);

/// Non-overlapping b1 x b2 tiles in row-major tile order.
AggregationScheme regular_blocks(std::size_t n1, std::size_t n2, std::size_t b1, std::size_t b2);

AggregationScheme identity_scheme(std::size_t n1, std::size_t n2);

/// One singleton block per observed pixel of the grid, in index order.
AggregationScheme observed_pixel_scheme(const Grid2D& grid);

/// Removes the listed blocks; surviving blocks keep their relative order.
AggregationScheme drop_blocks(const AggregationScheme& scheme, std::span<const std::size_t> removed);

/// Groups blocks that are translates of one another. Blocks in the same
/// shape class share `offsets` relative to their anchor (min row, min col).
struct BlockShapes {
    struct Anchor {
        std::size_t shape;
        long row;
        long col;
    };
    std::vector<std::vector<std::pair<long, long>>> offsets;
    std::vector<Anchor> anchors;
};

BlockShapes index_block_shapes(const AggregationScheme& scheme);

}  // namespace efdrcs
