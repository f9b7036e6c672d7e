#include "lvseg/cli/overlay.hpp"

#include <algorithm>
#include <cmath>

namespace lvseg::cli {

Overlay render_overlays(const Image2D& frame, const roi::RoiBox& box, const ProbabilityMap& probability,
                        const BinaryMask& pred, const std::optional<BinaryMask>& gt) {
    if (!frame.same_shape(pred)) throw Error("overlay: prediction does not match the frame");
    if (gt && !frame.same_shape(*gt)) throw Error("overlay: ground truth does not match the frame");
    if (box.top + box.side > frame.height() || box.left + box.side > frame.width()) {
        throw Error("overlay: ROI box exceeds the frame");
    }
    Overlay o;
    o.original = Grid<pgm::Rgb>(frame.height(), frame.width());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(frame[i], 0.0, 1.0) * 255.0));
        o.original[i] = {v, v, v};
    }
    if (box.side > 0) {
        const std::size_t bottom = box.top + box.side - 1, right = box.left + box.side - 1;
        for (std::size_t k = 0; k < box.side; ++k) {
            o.original.at(box.top, box.left + k) = {255, 0, 0};
            o.original.at(bottom, box.left + k) = {255, 0, 0};
            o.original.at(box.top + k, box.left) = {255, 0, 0};
            o.original.at(box.top + k, right) = {255, 0, 0};
        }
    }
    o.probability = probability;
    o.mask = pred;
    if (gt) {
        BinaryMask err(pred.height(), pred.width());
        for (std::size_t i = 0; i < err.size(); ++i) err[i] = pred[i] != (*gt)[i] ? 1 : 0;
        o.error = std::move(err);
    }
    return o;
}

void write_overlays(const std::filesystem::path& dir, const std::string& stem, const Overlay& overlay) {
    std::filesystem::create_directories(dir);
    pgm::write_ppm(dir / (stem + "_original.ppm"), overlay.original);
    pgm::write_gray8(dir / (stem + "_prob.pgm"), overlay.probability);
    pgm::write_mask(dir / (stem + "_mask.pgm"), overlay.mask);
    if (overlay.error) pgm::write_mask(dir / (stem + "_error.pgm"), *overlay.error);
}

}  // namespace lvseg::cli
