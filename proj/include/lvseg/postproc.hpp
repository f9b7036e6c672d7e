#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "lvseg/imgcore.hpp"
#include "lvseg/roi.hpp"

namespace lvseg::postproc {

struct OtsuResult {
    double threshold = 0.0;
    BinaryMask mask;
    bool degenerate = false;  // every value fell into one histogram bin
};

/// Candidate thresholds are the inner bin edges b / bins, b = 1 .. bins-1. The
/// edge maximising w0 w1 (mu0 - mu1)^2 over the histogram wins, lowest edge on
/// ties; mask = p >= threshold. When all values share one bin the threshold is
/// the map minimum and the mask is all ones.
OtsuResult otsu_threshold(const ProbabilityMap& p, std::size_t bins = 256);

struct Pixel {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct Component {
    std::size_t label = 0;       // 1-based, in order of first pixel in raster scan
    std::vector<Pixel> pixels;   // raster order
    std::pair<double, double> centroid{0.0, 0.0};
    std::vector<Pixel> boundary; // pixels with a background 4-neighbour or on the image border

    std::size_t area() const { return pixels.size(); }
};

/// 8-connected labelling (two-pass union-find).
std::vector<Component> connected_components(const BinaryMask& mask);

enum class DistanceSet { Boundary, AllPixels };

/// sigma(D) / mu(D) over distances D from the centroid (population sigma).
/// +inf when mu(D) is zero, which covers single-pixel components.
double roundness(const Component& c, DistanceSet set = DistanceSet::Boundary);

struct SelectParams {
    std::size_t min_area = 10;
    DistanceSet distance_set = DistanceSet::Boundary;
};

/// Index of the roundest component (lowest score); ties prefer more pixels,
/// then the lower label. Components smaller than min_area are ignored unless
/// every component is that small.
std::size_t select_region(const std::vector<Component>& components, const SelectParams& params = {});

/// Where a network-resolution map sits in the original frame.
struct Geometry {
    roi::RoiBox box;
    std::size_t frame_height = 0;
    std::size_t frame_width = 0;
};

/// Nearest-neighbour placement of a map-resolution mask into the frame: frame
/// pixel (r, c) inside the box reads mask pixel floor((r - top + 0.5) * h / side).
BinaryMask to_frame(const BinaryMask& mask, const Geometry& geometry);

struct PostprocessResult {
    BinaryMask mask;       // frame coordinates
    double threshold = 0.0;
    bool degenerate = false;
    bool empty = false;    // nothing survived
    std::size_t components = 0;
};

struct PostprocessParams {
    std::size_t bins = 256;
    SelectParams select;
};

/// Otsu, labelling, roundness selection, then placement in the frame. A flat
/// map (degenerate Otsu) is read at the 0.5 level instead.
PostprocessResult postprocess(const ProbabilityMap& p, const Geometry& geometry, const PostprocessParams& params = {});

/// Fixed 0.5 threshold with no region selection, placed in the frame.
BinaryMask raw_mask(const ProbabilityMap& p, const Geometry& geometry, double threshold = 0.5);

}  // namespace lvseg::postproc
