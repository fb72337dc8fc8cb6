#include "efdrcs/wavelet.hpp"

#include <array>
#include <cmath>

#include "efdrcs/error.hpp"

namespace efdrcs {

namespace {

// Daubechies least-asymmetric, 8 taps (the "la8" of Percival & Walden).
constexpr std::array<double, 8> kLa8 = {
    -0.0757657147893407, -0.0296355276459541, 0.4976186676324578, 0.8037387518052163,
    0.2978577956055422,  -0.0992195435769354, -0.0126039672622612, 0.0322231006040713};

constexpr std::array<double, 2> kHaar = {0.70710678118654752440, 0.70710678118654752440};

std::size_t positive_mod(long a, std::size_t m) {
    const long r = a % static_cast<long>(m);
    return static_cast<std::size_t>(r < 0 ? r + static_cast<long>(m) : r);
}

// One level of periodic analysis on a strided signal of even length len.
void analyze(const double* in, std::size_t stride, std::size_t len, const std::vector<double>& lo,
             const std::vector<double>& hi, double* out_lo, double* out_hi, std::size_t out_stride) {
    const std::size_t half = len / 2;
    const std::size_t taps = lo.size();
    for (std::size_t i = 0; i < half; ++i) {
        double a = 0.0;
        double d = 0.0;
        for (std::size_t t = 0; t < taps; ++t) {
            const double x = in[((2 * i + t) % len) * stride];
            a += lo[t] * x;
            d += hi[t] * x;
        }
        out_lo[i * out_stride] = a;
        out_hi[i * out_stride] = d;
    }
}

// Adjoint of analyze(): accumulates into out (which must be zeroed).
void synthesize(const double* in_lo, const double* in_hi, std::size_t in_stride, std::size_t len,
                const std::vector<double>& lo, const std::vector<double>& hi, double* out,
                std::size_t stride) {
    const std::size_t half = len / 2;
    const std::size_t taps = lo.size();
    for (std::size_t i = 0; i < half; ++i) {
        const double a = in_lo[i * in_stride];
        const double d = in_hi[i * in_stride];
        for (std::size_t t = 0; t < taps; ++t) out[((2 * i + t) % len) * stride] += lo[t] * a + hi[t] * d;
    }
}

}  // namespace

WaveletFilter parse_filter(std::string_view name) {
    if (name == "la8" || name == "LA8") return WaveletFilter::la8;
    if (name == "haar" || name == "HAAR") return WaveletFilter::haar;
    throw InputError("unknown wavelet filter '" + std::string(name) + "'");
}

std::string_view filter_name(WaveletFilter filter) {
    return filter == WaveletFilter::la8 ? "la8" : "haar";
}

std::span<const double> scaling_filter(WaveletFilter filter) {
    switch (filter) {
        case WaveletFilter::la8: return kLa8;
        case WaveletFilter::haar: return kHaar;
    }
    throw InputError("unknown wavelet filter");
}

PyramidLayout::PyramidLayout(std::size_t n1, std::size_t n2, int levels) : n1_(n1), n2_(n2), levels_(levels) {
    if (levels < 1) throw InputError("wavelet depth J must be >= 1");
    if (n1 < 2 || n2 < 2) throw InputError("wavelet grid dimensions must be >= 2");
    const std::size_t block = std::size_t{1} << levels;
    if ((std::size_t{1} << levels) > std::min(n1, n2))
        throw InputError("wavelet depth J exceeds log2(min(n1, n2))");
    if (n1 % block != 0 || n2 % block != 0)
        throw InputError("grid shape must be divisible by 2^J");
    offsets_.reserve(class_count() + 1);
    std::size_t off = 0;
    for (std::size_t c = 0; c < class_count(); ++c) {
        offsets_.push_back(off);
        const int lvl = class_level(c);
        off += (n1 >> lvl) * (n2 >> lvl);
    }
    offsets_.push_back(off);
}

std::size_t PyramidLayout::detail_class(int level, Orientation m) const {
    if (level < 1 || level > levels_) throw InputError("detail level out of range");
    const int mi = static_cast<int>(m);
    if (mi < 1 || mi > 3) throw InputError("orientation must be 1, 2 or 3");
    return static_cast<std::size_t>(3 * (level - 1) + (mi - 1));
}

int PyramidLayout::class_level(std::size_t cls) const noexcept {
    return is_smooth(cls) ? levels_ : static_cast<int>(cls / 3) + 1;
}

Orientation PyramidLayout::class_orientation(std::size_t cls) const noexcept {
    return static_cast<Orientation>(cls % 3 + 1);
}

std::size_t PyramidLayout::class_of_index(std::size_t index) const noexcept {
    std::size_t c = 0;
    while (index >= offsets_[c + 1]) ++c;
    return c;
}

std::size_t class_of(int scale, int orientation, int levels) {
    if (levels < 1) throw InputError("J must be >= 1");
    const int j = -scale;
    if (j < 1 || j > levels) throw InputError("scale must lie in {-1, ..., -J}");
    if (orientation < 1 || orientation > 3) throw InputError("orientation must be 1, 2 or 3");
    return static_cast<std::size_t>(3 * (j - 1) + orientation);
}

std::size_t smooth_class_of(int levels) {
    if (levels < 1) throw InputError("J must be >= 1");
    return static_cast<std::size_t>(3 * levels + 1);
}

WaveletTransform::WaveletTransform(std::size_t n1, std::size_t n2, int levels, WaveletFilter filter)
    : layout_(n1, n2, levels), filter_(filter) {
    const auto h = scaling_filter(filter);
    low_.assign(h.begin(), h.end());
    const std::size_t taps = low_.size();
    high_.resize(taps);
    for (std::size_t t = 0; t < taps; ++t)
        high_[t] = ((t % 2 == 0) ? 1.0 : -1.0) * low_[taps - 1 - t];
}

void WaveletTransform::forward(std::span<const double> image, std::span<double> coefficients) const {
    const std::size_t n1 = layout_.n1();
    const std::size_t n2 = layout_.n2();
    if (image.size() != n1 * n2 || coefficients.size() != n1 * n2)
        throw InputError("dwt2: buffer size does not match layout");
    std::vector<double> cur(image.begin(), image.end());
    std::vector<double> rows_pass(n1 * n2);
    std::size_t r = n1;
    std::size_t c = n2;
    for (int lvl = 1; lvl <= layout_.levels(); ++lvl) {
        const std::size_t hr = r / 2;
        const std::size_t hc = c / 2;
        // Along i2: left half low, right half high (row stride c).
        for (std::size_t i = 0; i < r; ++i)
            analyze(&cur[i * c], 1, c, low_, high_, &rows_pass[i * c], &rows_pass[i * c + hc], 1);
        // Along i1 on each half, scattering straight into the subbands.
        std::vector<double> ll(hr * hc);
        const auto h_cls = layout_.detail_class(lvl, Orientation::horizontal);
        const auto v_cls = layout_.detail_class(lvl, Orientation::vertical);
        const auto d_cls = layout_.detail_class(lvl, Orientation::diagonal);
        double* out_h = &coefficients[layout_.class_offset(h_cls)];
        double* out_v = &coefficients[layout_.class_offset(v_cls)];
        double* out_d = &coefficients[layout_.class_offset(d_cls)];
        for (std::size_t k = 0; k < hc; ++k) {
            // low along i2, column k: low along i1 -> LL, high along i1 -> vertical
            analyze(&rows_pass[k], c, r, low_, high_, &ll[k], out_v + k, hc);
            // high along i2: low along i1 -> horizontal, high along i1 -> diagonal
            analyze(&rows_pass[hc + k], c, r, low_, high_, out_h + k, out_d + k, hc);
        }
        cur = std::move(ll);
        r = hr;
        c = hc;
    }
    std::copy(cur.begin(), cur.end(), coefficients.begin() + layout_.class_offset(layout_.smooth_class()));
}

void WaveletTransform::inverse(std::span<const double> coefficients, std::span<double> image) const {
    const std::size_t n1 = layout_.n1();
    const std::size_t n2 = layout_.n2();
    if (image.size() != n1 * n2 || coefficients.size() != n1 * n2)
        throw InputError("idwt2: buffer size does not match layout");
    const int levels = layout_.levels();
    const auto smooth_off = layout_.class_offset(layout_.smooth_class());
    std::vector<double> cur(coefficients.begin() + smooth_off,
                            coefficients.begin() + smooth_off + layout_.class_size(layout_.smooth_class()));
    for (int lvl = levels; lvl >= 1; --lvl) {
        const std::size_t r = n1 >> (lvl - 1);
        const std::size_t c = n2 >> (lvl - 1);
        const std::size_t hc = c / 2;
        const double* in_h = &coefficients[layout_.class_offset(layout_.detail_class(lvl, Orientation::horizontal))];
        const double* in_v = &coefficients[layout_.class_offset(layout_.detail_class(lvl, Orientation::vertical))];
        const double* in_d = &coefficients[layout_.class_offset(layout_.detail_class(lvl, Orientation::diagonal))];
        std::vector<double> rows_pass(r * c, 0.0);
        for (std::size_t k = 0; k < hc; ++k) {
            synthesize(&cur[k], in_v + k, hc, r, low_, high_, &rows_pass[k], c);
            synthesize(in_h + k, in_d + k, hc, r, low_, high_, &rows_pass[hc + k], c);
        }
        std::vector<double> next(r * c, 0.0);
        for (std::size_t i = 0; i < r; ++i)
            synthesize(&rows_pass[i * c], &rows_pass[i * c + hc], 1, c, low_, high_, &next[i * c], 1);
        cur = std::move(next);
    }
    std::copy(cur.begin(), cur.end(), image.begin());
}

void WaveletTransform::forward_columns(std::span<const double> matrix, std::size_t cols,
                                       std::span<double> out) const {
    const std::size_t n = layout_.size();
    if (matrix.size() != n * cols || out.size() != n * cols)
        throw InputError("forward_columns: matrix size mismatch");
    for (std::size_t j = 0; j < cols; ++j) forward(matrix.subspan(j * n, n), out.subspan(j * n, n));
}

WaveletPyramid dwt2(const Grid2D& grid, int levels, WaveletFilter filter) {
    WaveletTransform t(grid.n1(), grid.n2(), levels, filter);
    WaveletPyramid p{t.layout(), filter, std::vector<double>(grid.size())};
    t.forward(grid.values(), p.coefficients);
    return p;
}

Grid2D idwt2(const WaveletPyramid& pyramid) {
    if (pyramid.coefficients.size() != pyramid.layout.size())
        throw InputError("idwt2: malformed pyramid (coefficient count mismatch)");
    WaveletTransform t(pyramid.layout.n1(), pyramid.layout.n2(), pyramid.layout.levels(), pyramid.filter);
    std::vector<double> image(pyramid.layout.size());
    t.inverse(pyramid.coefficients, image);
    return Grid2D(pyramid.layout.n1(), pyramid.layout.n2(), std::move(image));
}

std::size_t boundary_count(WaveletFilter filter, int level) {
    const double taps = static_cast<double>(scaling_filter(filter).size());
    return static_cast<std::size_t>(std::ceil((taps - 2.0) * (1.0 - std::ldexp(1.0, -level)) - 1e-12));
}

std::vector<std::uint8_t> boundary_mask(const PyramidLayout& layout, WaveletFilter filter) {
    std::vector<std::uint8_t> mask(layout.size(), 0);
    for (std::size_t k = 0; k < layout.class_count(); ++k) {
        const std::size_t nb = boundary_count(filter, layout.class_level(k));
        const std::size_t rows = layout.class_rows(k), cols = layout.class_cols(k);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                if (r + nb >= rows || c + nb >= cols) mask[layout.class_offset(k) + r * cols + c] = 1;
    }
    return mask;
}

void shift_coefficients(const PyramidLayout& layout, std::span<const double> in, long d1, long d2,
                        std::span<double> out) {
    const long block = 1L << layout.levels();
    if (d1 % block != 0 || d2 % block != 0)
        throw InputError("shift_coefficients: shift must be a multiple of 2^J");
    for (std::size_t cls = 0; cls < layout.class_count(); ++cls) {
        const int lvl = layout.class_level(cls);
        const std::size_t rows = layout.class_rows(cls);
        const std::size_t cols = layout.class_cols(cls);
        const long s1 = d1 >> lvl;
        const long s2 = d2 >> lvl;
        const std::size_t off = layout.class_offset(cls);
        for (std::size_t i = 0; i < rows; ++i) {
            const std::size_t ti = positive_mod(static_cast<long>(i) + s1, rows);
            for (std::size_t j = 0; j < cols; ++j) {
                const std::size_t tj = positive_mod(static_cast<long>(j) + s2, cols);
                out[off + ti * cols + tj] = in[off + i * cols + j];
            }
        }
    }
}

}  // namespace efdrcs
