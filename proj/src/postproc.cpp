#include "lvseg/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lvseg::postproc {

namespace {

// Exact comparison of a^2 / d between candidates while the products fit in
// 128 bits (maps up to 2^18 pixels); long double beyond that.
struct Score {
    __int128 a2 = 0;
    __int128 d = 1;
    long double approx = 0.0L;
};

bool greater(const Score& x, const Score& y, bool exact) {
    if (exact) return x.a2 * y.d > y.a2 * x.d;
    return x.approx > y.approx;
}

}  // namespace

OtsuResult otsu_threshold(const ProbabilityMap& p, std::size_t bins) {
    if (p.empty()) throw Error("otsu_threshold: empty map");
    const auto counts = histogram(p.pixels(), bins, 0.0, 1.0);
    const bool exact = p.size() <= (std::size_t{1} << 18);

    std::int64_t total_n = 0, total_s = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        total_n += static_cast<std::int64_t>(counts[b]);
        total_s += static_cast<std::int64_t>(counts[b]) * static_cast<std::int64_t>(b);
    }

    std::int64_t n0 = 0, s0 = 0;
    std::size_t best_edge = 0;
    Score best;
    for (std::size_t b = 1; b < bins; ++b) {
        n0 += static_cast<std::int64_t>(counts[b - 1]);
        s0 += static_cast<std::int64_t>(counts[b - 1]) * static_cast<std::int64_t>(b - 1);
        const std::int64_t n1 = total_n - n0;
        const std::int64_t s1 = total_s - s0;
        if (n0 == 0 || n1 == 0) continue;
        Score sc;
        const __int128 a = static_cast<__int128>(n1) * s0 - static_cast<__int128>(n0) * s1;
        sc.a2 = a * a;
        sc.d = static_cast<__int128>(n0) * n1;
        const long double la = static_cast<long double>(a);
        sc.approx = la * la / (static_cast<long double>(n0) * static_cast<long double>(n1));
        if (best_edge == 0 || greater(sc, best, exact)) {
            best = sc;
            best_edge = b;
        }
    }

    OtsuResult r;
    if (best_edge == 0) {
        r.degenerate = true;
        r.threshold = *std::min_element(p.pixels().begin(), p.pixels().end());
        r.mask = BinaryMask(p.height(), p.width(), 1);
        return r;
    }
    r.threshold = static_cast<double>(best_edge) / static_cast<double>(bins);
    r.mask = BinaryMask(p.height(), p.width());
    for (std::size_t i = 0; i < p.size(); ++i) r.mask[i] = p[i] >= r.threshold ? 1 : 0;
    return r;
}

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

void unite(std::vector<std::size_t>& parent, std::size_t a, std::size_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
}

}  // namespace

std::vector<Component> connected_components(const BinaryMask& mask) {
    const std::size_t h = mask.height(), w = mask.width();
    constexpr std::size_t kNone = 0;
    std::vector<std::size_t> label(mask.size(), kNone);
    std::vector<std::size_t> parent{0};

    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (!mask.at(r, c)) continue;
            std::size_t found = kNone;
            auto visit = [&](std::size_t rr, std::size_t cc) {
                const std::size_t l = label[rr * w + cc];
                if (l == kNone) return;
                if (found == kNone) found = l;
                else unite(parent, found, l);
            };
            if (c > 0) visit(r, c - 1);
            if (r > 0) {
                if (c > 0) visit(r - 1, c - 1);
                visit(r - 1, c);
                if (c + 1 < w) visit(r - 1, c + 1);
            }
            if (found == kNone) {
                found = parent.size();
                parent.push_back(found);
            }
            label[r * w + c] = found;
        }
    }

    std::vector<std::size_t> final_label(parent.size(), kNone);
    std::vector<Component> out;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t l = label[r * w + c];
            if (l == kNone) continue;
            const std::size_t root = find_root(parent, l);
            if (final_label[root] == kNone) {
                out.emplace_back();
                out.back().label = out.size();
                final_label[root] = out.size();
            }
            Component& comp = out[final_label[root] - 1];
            const Pixel px{static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)};
            comp.pixels.push_back(px);
            const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w || !mask.at(r - 1, c) ||
                              !mask.at(r + 1, c) || !mask.at(r, c - 1) || !mask.at(r, c + 1);
            if (edge) comp.boundary.push_back(px);
        }
    }
    for (auto& comp : out) {
        double sr = 0.0, sc = 0.0;
        for (const auto& px : comp.pixels) {
            sr += px.row;
            sc += px.col;
        }
        const double n = static_cast<double>(comp.pixels.size());
        comp.centroid = {sr / n, sc / n};
    }
    return out;
}

double roundness(const Component& c, DistanceSet set) {
    const auto& pts = set == DistanceSet::Boundary ? c.boundary : c.pixels;
    if (pts.empty()) throw Error("roundness: component has no pixels");
    std::vector<double> d;
    d.reserve(pts.size());
    for (const auto& px : pts) d.push_back(std::hypot(px.row - c.centroid.first, px.col - c.centroid.second));
    const double n = static_cast<double>(d.size());
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    if (!(mean > 0.0)) return std::numeric_limits<double>::infinity();
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    return std::sqrt(var / n) / mean;
}

std::size_t select_region(const std::vector<Component>& components, const SelectParams& params) {
    if (components.empty()) throw Error("select_region: no components (empty segmentation)");
    const bool any_large = std::any_of(components.begin(), components.end(),
                                       [&](const Component& c) { return c.area() >= params.min_area; });
    std::size_t best = components.size();
    double best_score = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        const auto& c = components[i];
        if (any_large && c.area() < params.min_area) continue;
        const double s = roundness(c, params.distance_set);
        bool take = best == components.size();
        if (!take) {
            const auto& b = components[best];
            if (s != best_score) take = s < best_score;
            else if (c.area() != b.area()) take = c.area() > b.area();
            else take = c.label < b.label;
        }
        if (take) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

BinaryMask to_frame(const BinaryMask& mask, const Geometry& g) {
    const auto& box = g.box;
    if (box.side == 0 || box.top + box.side > g.frame_height || box.left + box.side > g.frame_width) {
        throw Error("to_frame: box does not fit the frame");
    }
    if (mask.empty()) throw Error("to_frame: empty mask");
    BinaryMask out(g.frame_height, g.frame_width);
    const double sy = static_cast<double>(mask.height()) / static_cast<double>(box.side);
    const double sx = static_cast<double>(mask.width()) / static_cast<double>(box.side);
    for (std::size_t r = 0; r < box.side; ++r) {
        const auto mr = std::min(mask.height() - 1, static_cast<std::size_t>((static_cast<double>(r) + 0.5) * sy));
        for (std::size_t c = 0; c < box.side; ++c) {
            const auto mc = std::min(mask.width() - 1, static_cast<std::size_t>((static_cast<double>(c) + 0.5) * sx));
            out.at(box.top + r, box.left + c) = mask.at(mr, mc);
        }
    }
    return out;
}

BinaryMask raw_mask(const ProbabilityMap& p, const Geometry& geometry, double threshold) {
    BinaryMask m(p.height(), p.width());
    for (std::size_t i = 0; i < p.size(); ++i) m[i] = p[i] >= threshold ? 1 : 0;
    return to_frame(m, geometry);
}

PostprocessResult postprocess(const ProbabilityMap& p, const Geometry& geometry, const PostprocessParams& params) {
    PostprocessResult r;
    auto otsu = otsu_threshold(p, params.bins);
    r.threshold = otsu.threshold;
    r.degenerate = otsu.degenerate;
    if (otsu.degenerate) {
        for (std::size_t i = 0; i < p.size(); ++i) otsu.mask[i] = p[i] >= 0.5 ? 1 : 0;
    }
    const auto comps = connected_components(otsu.mask);
    r.components = comps.size();
    BinaryMask selected(p.height(), p.width());
    if (comps.empty()) {
        r.empty = true;
    } else {
        for (const auto& px : comps[select_region(comps, params.select)].pixels) selected.at(px.row, px.col) = 1;
    }
    r.mask = to_frame(selected, geometry);
    return r;
}

}  // namespace lvseg::postproc
