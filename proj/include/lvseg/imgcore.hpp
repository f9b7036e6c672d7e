#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lvseg/error.hpp"

namespace lvseg {

/// Row-major 2-D raster. Used directly for probability and score maps; the
/// intensity image and binary mask types below add their own invariants.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {}
    Grid(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_) {
            throw Error("grid data length " + std::to_string(data_.size()) + " != " +
                        std::to_string(height_) + "x" + std::to_string(width_));
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& at(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
    const T& at(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }

    bool same_shape(const Grid& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }
    template <typename U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

/// Intensity image: finite, nonnegative, double precision regardless of the
/// bit depth it was read from.
class Image2D : public Grid<double> {
public:
    Image2D() = default;
    Image2D(std::size_t height, std::size_t width, double fill = 0.0);
    Image2D(std::size_t height, std::size_t width, std::vector<double> data);
};

/// Values are 0 or 1.
class BinaryMask : public Grid<std::uint8_t> {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> data);

    std::size_t count() const noexcept;
};

using ProbabilityMap = Grid<double>;

/// One cardiac cycle. `ground_truth` is either empty or has one (possibly
/// absent) mask per frame.
struct ImageSequence {
    std::string sequence_id;
    std::vector<Image2D> frames;
    std::vector<std::optional<BinaryMask>> ground_truth;

    std::size_t height() const { return frames.empty() ? 0 : frames.front().height(); }
    std::size_t width() const { return frames.empty() ? 0 : frames.front().width(); }
    bool has_ground_truth() const { return !ground_truth.empty(); }

    /// Throws when frames disagree in shape or masks do not line up.
    void validate() const;
};

/// Replaces the top `fraction` of pixels (by rank, ceil(fraction * N) of them)
/// with the largest intensity among the remaining pixels, i.e. out = min(v, r).
Image2D clip_outliers(const Image2D& img, double fraction = 0.01);

/// The value clip_outliers caps at: the largest intensity outside the top
/// ceil(fraction * N). The maximum (no clipping) when that leaves nothing.
double outlier_ceiling(std::span<const double> values, double fraction);

/// (v - min) / (max - min); all zeros for a constant image.
Image2D scale_unit(const Image2D& img);

/// Whether the clipping cutoff is ranked within each frame or over the pooled
/// pixels of the whole sequence.
enum class ClipScope { Frame, Sequence };

/// Outlier clipping followed by per-frame scale_unit; masks are untouched.
ImageSequence preprocess(const ImageSequence& seq, double fraction = 0.01, ClipScope scope = ClipScope::Frame);

/// Bin b covers [lo + b*(hi-lo)/bins, lo + (b+1)*(hi-lo)/bins); the last bin is
/// closed on the right. Values outside [lo, hi] are rejected.
std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins,
                                   double lo = 0.0, double hi = 1.0);
std::vector<std::size_t> histogram(const Image2D& img, std::size_t bins, double lo = 0.0,
                                   double hi = 1.0);

/// Bin index used by `histogram` for a single in-range value.
std::size_t histogram_bin(double value, std::size_t bins, double lo, double hi);

/// Sub-rectangle copy; the rectangle must lie inside the source.
template <typename G>
G crop(const G& src, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    if (top + height > src.height() || left + width > src.width()) {
        throw Error("crop rectangle exceeds source bounds");
    }
    G out(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) out.at(r, c) = src.at(top + r, left + c);
    }
    return out;
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
Grid<double> resize_bilinear(const Grid<double>& src, std::size_t height, std::size_t width);

/// Nearest-neighbour resampling with pixel-centre alignment.
template <typename G>
G resize_nearest(const G& src, std::size_t height, std::size_t width) {
    G out(height, width);
    const double sy = static_cast<double>(src.height()) / static_cast<double>(height);
    const double sx = static_cast<double>(src.width()) / static_cast<double>(width);
    for (std::size_t r = 0; r < height; ++r) {
        auto rr = static_cast<std::size_t>((static_cast<double>(r) + 0.5) * sy);
        if (rr >= src.height()) rr = src.height() - 1;
        for (std::size_t c = 0; c < width; ++c) {
            auto cc = static_cast<std::size_t>((static_cast<double>(c) + 0.5) * sx);
            if (cc >= src.width()) cc = src.width() - 1;
            out.at(r, c) = src.at(rr, cc);
        }
    }
    return out;
}

}  // namespace lvseg
