#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lvseg/imgcore.hpp"

namespace lvseg::roi {

/// Aggregated absolute inter-frame differences; nonnegative, frame-sized.
using MotionMap = Image2D;

/// Per-location probability on the saliency grid; nonnegative, sums to 1.
using SaliencyMap = Grid<double>;

/// Square crop region in frame coordinates.
struct RoiBox {
    std::size_t top = 0;
    std::size_t left = 0;
    std::size_t side = 0;

    bool contains(std::size_t row, std::size_t col) const {
        return row >= top && row < top + side && col >= left && col < left + side;
    }
    friend bool operator==(const RoiBox&, const RoiBox&) = default;
};

/// Dense row-stochastic matrix over the nodes of a grid_rows x grid_cols lattice,
/// node index = row * grid_cols + col.
struct TransitionMatrix {
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::vector<double> p;  // row-major, n x n

    std::size_t nodes() const { return grid_rows * grid_cols; }
    double at(std::size_t from, std::size_t to) const { return p[from * nodes() + to]; }
};

struct EquilibriumResult {
    SaliencyMap map;
    std::size_t iterations = 0;
    bool converged = false;
    double last_change = 0.0;  // L1 norm of the final update
};

/// How `threshold_saliency` interprets its level.
enum class LevelMode {
    FractionOfMax,  // keep s >= level * max(s)
    Percentile,     // keep s >= the level-quantile of s
    Mass,           // keep the most salient cells that together hold >= level of the mass
};

struct RoiParams {
    std::size_t grid_size = 32;
    double sigma_frac = 0.15;
    double level = 0.9;
    LevelMode level_mode = LevelMode::FractionOfMax;
    double margin_frac = 0.15;
    std::size_t min_side = 32;
    double tol = 1e-9;
    std::size_t max_iter = 10000;
};

inline constexpr double kLogRatioFloor = 1e-6;

Image2D abs_diff(const Image2D& a, const Image2D& b);

/// Sum of abs_diff over consecutive frame pairs.
MotionMap aggregate_motion(const ImageSequence& seq);

/// Area-weighted average of `img` onto a rows x cols grid. Handles sizes that
/// are not multiples of the grid.
Grid<double> downsample_area(const Grid<double>& img, std::size_t rows, std::size_t cols);

/// Fully connected activation chain on the downsampled motion map. Edge weight
/// from node a to node b is |log((M(a)+eps)/(M(b)+eps))| * exp(-|a-b|^2 / (2 sigma^2)),
/// sigma = sigma_frac * grid_size, rows normalised; all-zero rows become uniform.
TransitionMatrix build_saliency_graph(const MotionMap& motion, std::size_t grid_size = 32,
                                      double sigma_frac = 0.15);

/// Power iteration from the uniform distribution until the L1 change drops
/// below `tol` or `max_iter` steps have run.
EquilibriumResult equilibrium(const TransitionMatrix& transition, double tol = 1e-9,
                              std::size_t max_iter = 10000);

/// Gaussian distance falloff exp(-|a-b|^2 / (2 sigma^2)) over a rows x cols grid,
/// rescaled as D F D to be symmetric and doubly stochastic. Returns n x n row-major.
std::vector<double> balanced_falloff(std::size_t rows, std::size_t cols, double sigma);

/// Concentration pass: chain with weight s(b) * K(a, b) on the same grid, with K
/// the balanced falloff, returned at equilibrium. Its stationary distribution is
/// proportional to s(a) * sum_b s(b) K(a, b), so uniform input stays uniform.
EquilibriumResult saliency_refine(const SaliencyMap& saliency, double sigma_frac = 0.15,
                                  double tol = 1e-9, std::size_t max_iter = 10000);

BinaryMask threshold_saliency(const SaliencyMap& saliency, double level = 0.9,
                              LevelMode mode = LevelMode::FractionOfMax);

/// Bounding square of the set cells in frame coordinates. The tight rectangle
/// of the cells' pixel footprints is padded by margin_frac * max(frame height,
/// frame width) on every side, squared symmetrically, raised to `min_side`, then shifted (and
/// only if unavoidable shrunk) to lie inside the frame.
RoiBox fit_roi(const BinaryMask& grid_mask, std::size_t frame_height, std::size_t frame_width,
               double margin_frac = 0.15, std::size_t min_side = 32);

/// Largest centred square inside the frame; what callers use when ROI
/// extraction fails.
RoiBox full_frame_box(std::size_t frame_height, std::size_t frame_width);

struct RoiResult {
    RoiBox box;
    bool fallback = false;
    std::string warning;
    ImageSequence cropped;
    MotionMap motion;
    SaliencyMap saliency;
    std::size_t iterations = 0;
};

/// Crops every frame (and mask) of `seq` with `box`.
ImageSequence crop_sequence(const ImageSequence& seq, const RoiBox& box);

/// The five ROI steps for one preprocessed sequence. A motionless sequence, a
/// flat saliency map or a fit failure yields the full-frame box with
/// `fallback` set.
RoiResult extract_roi(const ImageSequence& seq, const RoiParams& params = {});

}  // namespace lvseg::roi
