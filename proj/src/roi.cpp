#include "lvseg/roi.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Core>

namespace lvseg::roi {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// exp(-(dr^2 + dc^2) / (2 sigma^2)) indexed by |dr| * cols + |dc|.
std::vector<double> gaussian_falloff(std::size_t rows, std::size_t cols, double sigma) {
    std::vector<double> f(rows * cols);
    const double denom = 2.0 * sigma * sigma;
    for (std::size_t dr = 0; dr < rows; ++dr) {
        for (std::size_t dc = 0; dc < cols; ++dc) {
            const auto d2 = static_cast<double>(dr * dr + dc * dc);
            f[dr * cols + dc] = std::exp(-d2 / denom);
        }
    }
    return f;
}

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

/// Builds a row-normalised chain from raw weights w(a, b).
template <typename Weight>
TransitionMatrix build_chain(std::size_t rows, std::size_t cols, Weight weight) {
    TransitionMatrix t;
    t.grid_rows = rows;
    t.grid_cols = cols;
    const std::size_t n = rows * cols;
    t.p.assign(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        double* row = t.p.data() + a * n;
        double total = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            row[b] = weight(a, b);
            total += row[b];
        }
        if (total > 0.0) {
            for (std::size_t b = 0; b < n; ++b) row[b] /= total;
        } else {
            std::fill(row, row + n, 1.0 / static_cast<double>(n));
        }
    }
    return t;
}

}  // namespace

Image2D abs_diff(const Image2D& a, const Image2D& b) {
    if (!a.same_shape(b)) throw Error("abs_diff: image sizes differ");
    Image2D out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i] - b[i]);
    return out;
}

MotionMap aggregate_motion(const ImageSequence& seq) {
    if (seq.frames.size() < 2) throw Error("aggregate_motion: need at least 2 frames");
    seq.validate();
    MotionMap sum(seq.height(), seq.width());
    for (std::size_t k = 0; k + 1 < seq.frames.size(); ++k) {
        const auto& a = seq.frames[k];
        const auto& b = seq.frames[k + 1];
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += std::abs(a[i] - b[i]);
    }
    return sum;
}

Grid<double> downsample_area(const Grid<double>& img, std::size_t rows, std::size_t cols) {
    if (img.empty() || rows == 0 || cols == 0) throw Error("downsample_area: empty input");
    const double sy = static_cast<double>(img.height()) / static_cast<double>(rows);
    const double sx = static_cast<double>(img.width()) / static_cast<double>(cols);
    // Fractional overlap of source index s with target cell t along one axis.
    auto overlap = [](std::size_t s, std::size_t t, double scale) {
        const double lo = std::max(static_cast<double>(s), static_cast<double>(t) * scale);
        const double hi = std::min(static_cast<double>(s + 1), static_cast<double>(t + 1) * scale);
        return std::max(0.0, hi - lo);
    };
    Grid<double> out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto r0 = static_cast<std::size_t>(std::floor(static_cast<double>(r) * sy));
        const auto r1 = std::min(img.height(), static_cast<std::size_t>(std::ceil(static_cast<double>(r + 1) * sy)));
        for (std::size_t c = 0; c < cols; ++c) {
            const auto c0 = static_cast<std::size_t>(std::floor(static_cast<double>(c) * sx));
            const auto c1 = std::min(img.width(), static_cast<std::size_t>(std::ceil(static_cast<double>(c + 1) * sx)));
            double acc = 0.0;
            double area = 0.0;
            for (std::size_t y = r0; y < r1; ++y) {
                const double wy = overlap(y, r, sy);
                for (std::size_t x = c0; x < c1; ++x) {
                    const double w = wy * overlap(x, c, sx);
                    acc += w * img.at(y, x);
                    area += w;
                }
            }
            out.at(r, c) = area > 0.0 ? acc / area : 0.0;
        }
    }
    return out;
}

TransitionMatrix build_saliency_graph(const MotionMap& motion, std::size_t grid_size, double sigma_frac) {
    if (motion.empty()) throw Error("build_saliency_graph: empty motion map");
    if (grid_size < 2) throw Error("build_saliency_graph: gridSize must be >= 2");
    if (!(sigma_frac > 0.0)) throw Error("build_saliency_graph: sigmaFrac must be positive");
    const Grid<double> m = downsample_area(motion, grid_size, grid_size);
    std::vector<double> log_m(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) log_m[i] = std::log(m[i] + kLogRatioFloor);
    const double sigma = sigma_frac * static_cast<double>(grid_size);
    const auto falloff = gaussian_falloff(grid_size, grid_size, sigma);
    return build_chain(grid_size, grid_size, [&](std::size_t a, std::size_t b) {
        const std::size_t dr = absdiff(a / grid_size, b / grid_size), dc = absdiff(a % grid_size, b % grid_size);
        return std::abs(log_m[a] - log_m[b]) * falloff[dr * grid_size + dc];
    });
}

EquilibriumResult equilibrium(const TransitionMatrix& transition, double tol, std::size_t max_iter) {
    const std::size_t n = transition.nodes();
    if (n == 0 || transition.p.size() != n * n) throw Error("equilibrium: malformed transition matrix");
    for (std::size_t a = 0; a < n; ++a) {
        double total = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            const double v = transition.at(a, b);
            if (!(v >= 0.0) || !std::isfinite(v)) throw Error("equilibrium: negative or non-finite transition weight");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) throw Error("equilibrium: transition matrix is not row-stochastic");
    }

    const auto dim = static_cast<Eigen::Index>(n);
    const RowMajorMatrix p = Eigen::Map<const RowMajorMatrix>(transition.p.data(), dim, dim);
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
    Eigen::VectorXd next(pi.size());

    EquilibriumResult res;
    while (res.iterations < max_iter) {
        next.noalias() = p.transpose() * pi;
        next /= next.sum();
        res.last_change = (next - pi).lpNorm<1>();
        pi.swap(next);
        ++res.iterations;
        if (res.last_change < tol) {
            res.converged = true;
            break;
        }
    }
    res.map = SaliencyMap(transition.grid_rows, transition.grid_cols, std::vector<double>(pi.data(), pi.data() + n));
    return res;
}

EquilibriumResult saliency_refine(const SaliencyMap& saliency, double sigma_frac, double tol, std::size_t max_iter) {
    if (saliency.empty()) throw Error("saliency_refine: empty saliency map");
    for (double v : saliency.pixels()) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error("saliency_refine: saliency must be nonnegative");
    }
    const double sigma = sigma_frac * static_cast<double>(std::max(saliency.height(), saliency.width()));
    const std::size_t n = saliency.size();
    const auto k = balanced_falloff(saliency.height(), saliency.width(), sigma);
    const auto t = build_chain(saliency.height(), saliency.width(),
                               [&](std::size_t a, std::size_t b) { return saliency[b] * k[a * n + b]; });
    return equilibrium(t, tol, max_iter);
}

std::vector<double> balanced_falloff(std::size_t rows, std::size_t cols, double sigma) {
    if (rows == 0 || cols == 0) throw Error("balanced_falloff: empty grid");
    if (!(sigma > 0.0)) throw Error("balanced_falloff: sigma must be positive");
    const std::size_t n = rows * cols;
    const auto table = gaussian_falloff(rows, cols, sigma);
    std::vector<double> f(n * n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            f[a * n + b] = table[absdiff(a / cols, b / cols) * cols + absdiff(a % cols, b % cols)];
        }
    }
    // Symmetric Sinkhorn scaling: find x with x_a * sum_b F(a, b) x_b = 1.
    std::vector<double> x(n, 1.0), fx(n);
    auto apply = [&] {
        for (std::size_t a = 0; a < n; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < n; ++b) acc += f[a * n + b] * x[b];
            fx[a] = acc;
        }
    };
    bool balanced = false;
    for (int iter = 0; iter < 100000 && !balanced; ++iter) {
        apply();
        double worst = 0.0;
        for (std::size_t a = 0; a < n; ++a) worst = std::max(worst, std::abs(x[a] * fx[a] - 1.0));
        balanced = worst < 1e-13;
        if (!balanced) {
            for (std::size_t a = 0; a < n; ++a) x[a] = std::sqrt(x[a] / fx[a]);
        }
    }
    if (!balanced) throw Error("balanced_falloff: scaling did not converge");
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) f[a * n + b] *= x[a] * x[b];
    }
    return f;
}

BinaryMask threshold_saliency(const SaliencyMap& saliency, double level, LevelMode mode) {
    if (!(level > 0.0 && level <= 1.0)) throw Error("threshold_saliency: level must be in (0,1]");
    if (saliency.empty()) throw Error("threshold_saliency: empty saliency map");
    const auto values = saliency.pixels();
    double cut = 0.0;
    switch (mode) {
        case LevelMode::FractionOfMax:
            cut = level * *std::max_element(values.begin(), values.end());
            break;
        case LevelMode::Percentile: {
            std::vector<double> sorted(values.begin(), values.end());
            std::sort(sorted.begin(), sorted.end());
            const auto idx = static_cast<std::size_t>(std::floor(level * static_cast<double>(sorted.size() - 1)));
            cut = sorted[idx];
            break;
        }
        case LevelMode::Mass: {
            std::vector<double> sorted(values.begin(), values.end());
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
            double acc = 0.0;
            cut = sorted.back();
            for (double v : sorted) {
                acc += v;
                if (acc >= level * total * (1.0 - 1e-12)) {
                    cut = v;
                    break;
                }
            }
            break;
        }
    }
    BinaryMask mask(saliency.height(), saliency.width());
    for (std::size_t i = 0; i < values.size(); ++i) mask[i] = values[i] >= cut ? 1 : 0;
    return mask;
}

RoiBox full_frame_box(std::size_t frame_height, std::size_t frame_width) {
    const std::size_t side = std::min(frame_height, frame_width);
    return {(frame_height - side) / 2, (frame_width - side) / 2, side};
}

RoiBox fit_roi(const BinaryMask& grid_mask, std::size_t frame_height, std::size_t frame_width, double margin_frac,
               std::size_t min_side) {
    if (frame_height == 0 || frame_width == 0) throw Error("fit_roi: empty frame");
    if (margin_frac < 0.0) throw Error("fit_roi: negative margin");
    const std::size_t gr = grid_mask.height(), gc = grid_mask.width();
    std::size_t rmin = gr, rmax = 0, cmin = gc, cmax = 0;
    for (std::size_t r = 0; r < gr; ++r) {
        for (std::size_t c = 0; c < gc; ++c) {
            if (!grid_mask.at(r, c)) continue;
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
    }
    if (rmin == gr) throw Error("fit_roi: empty saliency mask");

    // Full pixel footprint of the grid cells, [top, bottom) x [left, right).
    const double sy = static_cast<double>(frame_height) / static_cast<double>(gr);
    const double sx = static_cast<double>(frame_width) / static_cast<double>(gc);
    auto top = static_cast<long long>(std::floor(static_cast<double>(rmin) * sy));
    auto bottom = static_cast<long long>(std::ceil(static_cast<double>(rmax + 1) * sy));
    auto left = static_cast<long long>(std::floor(static_cast<double>(cmin) * sx));
    auto right = static_cast<long long>(std::ceil(static_cast<double>(cmax + 1) * sx));

    const auto margin = static_cast<long long>(
        std::llround(margin_frac * static_cast<double>(std::max(frame_height, frame_width))));
    top -= margin;
    left -= margin;
    bottom += margin;
    right += margin;

    auto grow = [](long long& lo, long long& hi, long long target) {
        const long long extra = target - (hi - lo);
        if (extra <= 0) return;
        lo -= extra / 2;
        hi += extra - extra / 2;
    };
    long long side = std::max(bottom - top, right - left);
    side = std::max<long long>(side, static_cast<long long>(min_side));
    grow(top, bottom, side);
    grow(left, right, side);

    const auto fh = static_cast<long long>(frame_height);
    const auto fw = static_cast<long long>(frame_width);
    const long long limit = std::min(fh, fw);
    if (side > limit) {
        // Shrink about the centre.
        top += (side - limit) / 2;
        left += (side - limit) / 2;
        side = limit;
    }
    top = std::clamp(top, 0LL, fh - side);
    left = std::clamp(left, 0LL, fw - side);
    return {static_cast<std::size_t>(top), static_cast<std::size_t>(left), static_cast<std::size_t>(side)};
}

ImageSequence crop_sequence(const ImageSequence& seq, const RoiBox& box) {
    ImageSequence out;
    out.sequence_id = seq.sequence_id;
    for (const auto& f : seq.frames) out.frames.push_back(crop(f, box.top, box.left, box.side, box.side));
    for (const auto& m : seq.ground_truth) {
        out.ground_truth.push_back(m ? std::optional<BinaryMask>(crop(*m, box.top, box.left, box.side, box.side))
                                     : std::nullopt);
    }
    return out;
}

RoiResult extract_roi(const ImageSequence& seq, const RoiParams& params) {
    seq.validate();
    RoiResult res;
    const std::size_t h = seq.height(), w = seq.width();
    auto fail = [&](std::string why) {
        res.box = full_frame_box(h, w);
        res.fallback = true;
        res.warning = std::move(why);
        res.cropped = crop_sequence(seq, res.box);
        return res;
    };

    res.motion = aggregate_motion(seq);
    if (*std::max_element(res.motion.pixels().begin(), res.motion.pixels().end()) <= 0.0) {
        return fail("no inter-frame motion");
    }
    const auto graph = build_saliency_graph(res.motion, params.grid_size, params.sigma_frac);
    const auto first = equilibrium(graph, params.tol, params.max_iter);
    const auto refined = saliency_refine(first.map, params.sigma_frac, params.tol, params.max_iter);
    res.saliency = refined.map;
    res.iterations = first.iterations + refined.iterations;

    const auto [lo, hi] = std::minmax_element(res.saliency.pixels().begin(), res.saliency.pixels().end());
    if (*hi - *lo <= 1e-12 * *hi) return fail("flat saliency map");

    try {
        const auto mask = threshold_saliency(res.saliency, params.level, params.level_mode);
        res.box = fit_roi(mask, h, w, params.margin_frac, params.min_side);
    } catch (const Error& e) {
        return fail(e.what());
    }
    res.cropped = crop_sequence(seq, res.box);
    return res;
}

}  // namespace lvseg::roi
