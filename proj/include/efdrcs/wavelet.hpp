#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "efdrcs/grid.hpp"

namespace efdrcs {

enum class WaveletFilter { la8, haar };

WaveletFilter parse_filter(std::string_view name);
std::string_view filter_name(WaveletFilter filter);

/// Orthonormal low-pass (scaling) taps; the high-pass is the quadrature mirror.
std::span<const double> scaling_filter(WaveletFilter filter);

/// Orientation of a detail class. Filtering runs along i2 first, then i1.
enum class Orientation { horizontal = 1, vertical = 2, diagonal = 3 };

/// Shape bookkeeping for a periodic 2D pyramid with J levels.
///
/// Coefficients are stored flat, class by class: (level 1; m = 1, 2, 3),
/// (level 2; m = 1, 2, 3), ..., (level J; m = 1, 2, 3), then the smooth
/// class. Each class is row-major on its own (n1 / 2^j) x (n2 / 2^j) grid.
class PyramidLayout {
public:
    PyramidLayout(std::size_t n1, std::size_t n2, int levels);

    std::size_t n1() const noexcept { return n1_; }
    std::size_t n2() const noexcept { return n2_; }
    int levels() const noexcept { return levels_; }
    std::size_t size() const noexcept { return n1_ * n2_; }
    std::size_t class_count() const noexcept { return 3 * static_cast<std::size_t>(levels_) + 1; }

    /// Zero-based class index; class_count() - 1 is the smooth class.
    std::size_t detail_class(int level, Orientation m) const;
    std::size_t smooth_class() const noexcept { return class_count() - 1; }
    bool is_smooth(std::size_t cls) const noexcept { return cls == smooth_class(); }
    int class_level(std::size_t cls) const noexcept;
    Orientation class_orientation(std::size_t cls) const noexcept;

    std::size_t class_offset(std::size_t cls) const noexcept { return offsets_[cls]; }
    std::size_t class_rows(std::size_t cls) const noexcept { return n1_ >> class_level(cls); }
    std::size_t class_cols(std::size_t cls) const noexcept { return n2_ >> class_level(cls); }
    std::size_t class_size(std::size_t cls) const noexcept { return class_rows(cls) * class_cols(cls); }

    /// Class of a flat coefficient index.
    std::size_t class_of_index(std::size_t index) const noexcept;

    bool operator==(const PyramidLayout&) const = default;

private:
    std::size_t n1_;
    std::size_t n2_;
    int levels_;
    std::vector<std::size_t> offsets_;
};

/// One-based class index k in 1..3J+1 for (scale j in {-1..-J}, orientation m).
std::size_t class_of(int scale, int orientation, int levels);
/// One-based index of the smooth class, 3J + 1.
std::size_t smooth_class_of(int levels);

struct WaveletPyramid {
    PyramidLayout layout;
    WaveletFilter filter;
    std::vector<double> coefficients;

    std::span<const double> class_view(std::size_t cls) const {
        return std::span<const double>(coefficients).subspan(layout.class_offset(cls), layout.class_size(cls));
    }
    std::span<double> class_view(std::size_t cls) {
        return std::span<double>(coefficients).subspan(layout.class_offset(cls), layout.class_size(cls));
    }
};

/// Reusable periodic separable 2D DWT for one shape and filter.
class WaveletTransform {
public:
    WaveletTransform(std::size_t n1, std::size_t n2, int levels, WaveletFilter filter);

    const PyramidLayout& layout() const noexcept { return layout_; }
    WaveletFilter filter() const noexcept { return filter_; }

    /// image (row-major, n values) -> flat coefficients in layout order.
    void forward(std::span<const double> image, std::span<double> coefficients) const;
    /// Flat coefficients -> image.
    void inverse(std::span<const double> coefficients, std::span<double> image) const;

    /// Applies forward() to each column of a column-major n x cols matrix.
    void forward_columns(std::span<const double> matrix, std::size_t cols, std::span<double> out) const;

private:
    PyramidLayout layout_;
    WaveletFilter filter_;
    std::vector<double> low_;
    std::vector<double> high_;
};

WaveletPyramid dwt2(const Grid2D& grid, int levels, WaveletFilter filter = WaveletFilter::la8);
Grid2D idwt2(const WaveletPyramid& pyramid);

/// Number of coefficients per dimension at level j whose filter support wraps
/// around the periodic boundary: ceil((L - 2)(1 - 2^-j)) for L taps.
std::size_t boundary_count(WaveletFilter filter, int level);

/// 1 for coefficients affected by the periodic wrap (last boundary_count
/// rows or columns of their class), 0 for interior ones.
std::vector<std::uint8_t> boundary_mask(const PyramidLayout& layout, WaveletFilter filter);

/// Periodically shifts a pyramid as dwt2 would see an image shifted by
/// (d1, d2) pixels. Both shifts must be multiples of 2^J.
void shift_coefficients(const PyramidLayout& layout, std::span<const double> in, long d1, long d2,
                        std::span<double> out);

}  // namespace efdrcs
