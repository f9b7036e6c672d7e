#include "lvseg/imgcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace lvseg {

namespace {

void check_intensities(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0) {
            throw Error("image intensities must be finite and nonnegative");
        }
    }
}

}  // namespace

Image2D::Image2D(std::size_t height, std::size_t width, double fill)
    : Grid<double>(height, width, fill) {
    check_intensities(pixels());
}

Image2D::Image2D(std::size_t height, std::size_t width, std::vector<double> data)
    : Grid<double>(height, width, std::move(data)) {
    check_intensities(pixels());
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : Grid<std::uint8_t>(height, width, fill) {
    if (fill > 1) throw Error("binary mask values must be 0 or 1");
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> data)
    : Grid<std::uint8_t>(height, width, std::move(data)) {
    for (auto v : pixels()) {
        if (v > 1) throw Error("binary mask values must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(pixels().begin(), pixels().end(), 1));
}

void ImageSequence::validate() const {
    if (frames.empty()) throw Error("sequence '" + sequence_id + "' has no frames");
    for (const auto& f : frames) {
        if (!f.same_shape(frames.front())) {
            throw Error("sequence '" + sequence_id + "' frames differ in size");
        }
    }
    if (!ground_truth.empty()) {
        if (ground_truth.size() != frames.size()) {
            throw Error("sequence '" + sequence_id + "' mask count != frame count");
        }
        for (const auto& m : ground_truth) {
            if (m && !m->same_shape(frames.front())) {
                throw Error("sequence '" + sequence_id + "' mask size != frame size");
            }
        }
    }
}

double outlier_ceiling(std::span<const double> values, double fraction) {
    if (values.empty()) throw Error("clip_outliers: empty image");
    if (!(fraction > 0.0 && fraction < 1.0)) throw Error("clip_outliers: fraction must be in (0,1)");
    const std::size_t n = values.size();
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (k >= n) return *std::max_element(values.begin(), values.end());

    // The (k+1)-th largest value is the maximum of the non-outlier pixels.
    std::vector<double> sorted(values.begin(), values.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                     std::greater<>());
    return sorted[k];
}

Image2D clip_outliers(const Image2D& img, double fraction) {
    const double ceiling = outlier_ceiling(img.pixels(), fraction);
    Image2D out = img;
    for (double& v : out.pixels()) v = std::min(v, ceiling);
    return out;
}

Image2D scale_unit(const Image2D& img) {
    if (img.empty()) throw Error("scale_unit: empty image");
    const auto [lo_it, hi_it] = std::minmax_element(img.pixels().begin(), img.pixels().end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    Image2D out(img.height(), img.width());
    if (hi > lo) {
        const double range = hi - lo;
        for (std::size_t i = 0; i < img.size(); ++i) out[i] = (img[i] - lo) / range;
    }
    return out;
}

ImageSequence preprocess(const ImageSequence& seq, double fraction, ClipScope scope) {
    seq.validate();
    ImageSequence out;
    out.sequence_id = seq.sequence_id;
    out.ground_truth = seq.ground_truth;
    out.frames.reserve(seq.frames.size());
    if (scope == ClipScope::Frame) {
        for (const auto& f : seq.frames) out.frames.push_back(scale_unit(clip_outliers(f, fraction)));
        return out;
    }
    std::vector<double> all;
    all.reserve(seq.frames.size() * seq.height() * seq.width());
    for (const auto& f : seq.frames) all.insert(all.end(), f.pixels().begin(), f.pixels().end());
    const double ceiling = outlier_ceiling(all, fraction);
    for (const auto& f : seq.frames) {
        Image2D clipped = f;
        for (double& v : clipped.pixels()) v = std::min(v, ceiling);
        out.frames.push_back(scale_unit(clipped));
    }
    return out;
}

std::size_t histogram_bin(double value, std::size_t bins, double lo, double hi) {
    const double t = (value - lo) / (hi - lo) * static_cast<double>(bins);
    auto b = static_cast<std::size_t>(t);
    return std::min(b, bins - 1);
}

std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins, double lo,
                                   double hi) {
    if (bins < 2) throw Error("histogram: need at least 2 bins");
    if (!(hi > lo)) throw Error("histogram: empty range");
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
        if (!(v >= lo && v <= hi)) throw Error("histogram: value outside declared range");
        ++counts[histogram_bin(v, bins, lo, hi)];
    }
    return counts;
}

std::vector<std::size_t> histogram(const Image2D& img, std::size_t bins, double lo, double hi) {
    return histogram(img.pixels(), bins, lo, hi);
}

Grid<double> resize_bilinear(const Grid<double>& src, std::size_t height, std::size_t width) {
    if (src.empty() || height == 0 || width == 0) throw Error("resize_bilinear: empty image");
    Grid<double> out(height, width);
    const double sy = static_cast<double>(src.height()) / static_cast<double>(height);
    const double sx = static_cast<double>(src.width()) / static_cast<double>(width);
    const auto maxr = static_cast<double>(src.height() - 1);
    const auto maxc = static_cast<double>(src.width() - 1);
    for (std::size_t r = 0; r < height; ++r) {
        const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, maxr);
        const auto y0 = static_cast<std::size_t>(y);
        const std::size_t y1 = std::min(y0 + 1, src.height() - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < width; ++c) {
            const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, maxc);
            const auto x0 = static_cast<std::size_t>(x);
            const std::size_t x1 = std::min(x0 + 1, src.width() - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
            const double bot = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
            out.at(r, c) = top * (1.0 - fy) + bot * fy;
        }
    }
    return out;
}

}  // namespace lvseg
