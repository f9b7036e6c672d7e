#pragma once

#include <filesystem>
#include <optional>

#include "lvseg/imgcore.hpp"
#include "lvseg/pgm.hpp"
#include "lvseg/roi.hpp"

namespace lvseg::cli {

struct Overlay {
    Grid<pgm::Rgb> original;       // frame in gray with the ROI box outlined in red
    Grid<double> probability;      // network-resolution LV probability
    BinaryMask mask;               // post-processed prediction, frame resolution
    std::optional<BinaryMask> error;  // pred XOR gt when ground truth exists
};

/// `frame` values in [0,1]. pred and gt must match the frame's shape.
Overlay render_overlays(const Image2D& frame, const roi::RoiBox& box, const ProbabilityMap& probability,
                        const BinaryMask& pred, const std::optional<BinaryMask>& gt);

/// Writes <stem>_original.ppm, <stem>_prob.pgm, <stem>_mask.pgm and, with ground
/// truth, <stem>_error.pgm.
void write_overlays(const std::filesystem::path& dir, const std::string& stem, const Overlay& overlay);

}  // namespace lvseg::cli
