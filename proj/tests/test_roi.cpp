#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>
#include <random>

#include "lvseg/dataset.hpp"
#include "lvseg/roi.hpp"
#include "support.hpp"

using namespace lvseg;
using namespace lvseg::roi;

namespace {

double sum(const Grid<double>& g) { return std::accumulate(g.pixels().begin(), g.pixels().end(), 0.0); }

// Stationary distribution from the eigenvector of P^T for the eigenvalue
// closest to 1.
std::vector<double> eigen_stationary(const TransitionMatrix& t) {
    const auto n = static_cast<Eigen::Index>(t.nodes());
    Eigen::MatrixXd pt(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) pt(b, a) = t.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(pt);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
        if (std::abs(es.eigenvalues()[i] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = i;
    }
    Eigen::VectorXd v = es.eigenvectors().col(best).real();
    v /= v.sum();
    return {v.data(), v.data() + n};
}

TransitionMatrix random_chain(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    TransitionMatrix t;
    t.grid_rows = rows;
    t.grid_cols = cols;
    const std::size_t n = rows * cols;
    t.p.resize(n * n);
    for (std::size_t a = 0; a < n; ++a) {
        double total = 0;
        for (std::size_t b = 0; b < n; ++b) total += t.p[a * n + b] = u(rng);
        for (std::size_t b = 0; b < n; ++b) t.p[a * n + b] /= total;
    }
    return t;
}

dataset::PhantomSpec phantom_spec(std::uint64_t seed) {
    dataset::PhantomSpec spec;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("abs_diff and aggregate_motion") {
    Image2D a(2, 2, 1.0), b(2, 2, 3.0);
    CHECK(abs_diff(a, b) == Image2D(2, 2, 2.0));
    CHECK(abs_diff(a, a) == Image2D(2, 2, 0.0));
    CHECK_THROWS_AS(abs_diff(a, Image2D(2, 3)), Error);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 100);
    Image2D x(5, 4), y(5, 4);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng), y[i] = u(rng);
    const auto d = abs_diff(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(d[i] == std::fabs(x[i] - y[i]));
    CHECK(abs_diff(y, x) == d);

    ImageSequence s;
    s.sequence_id = "s";
    s.frames = {Image2D(3, 3, 1.0), Image2D(3, 3, 1.0), Image2D(3, 3, 1.0)};
    CHECK(aggregate_motion(s) == Image2D(3, 3, 0.0));
    s.frames[1].at(1, 2) = 2.0;
    s.frames[2].at(1, 2) = 3.0;
    Image2D expect(3, 3, 0.0);
    expect.at(1, 2) = 2.0;
    CHECK(aggregate_motion(s) == expect);

    ImageSequence one;
    one.sequence_id = "one";
    one.frames = {Image2D(2, 2)};
    CHECK_THROWS_AS(aggregate_motion(one), Error);
}

TEST_CASE("aggregate_motion is invariant to frame reversal") {
    const auto seq = dataset::generate_phantom(phantom_spec(4));
    auto rev = seq;
    std::reverse(rev.frames.begin(), rev.frames.end());
    CHECK(aggregate_motion(seq) == aggregate_motion(rev));
}

TEST_CASE("phantom motion concentrates on the disk's annular band") {
    const auto spec = phantom_spec(9);
    const auto seq = dataset::generate_phantom(spec);
    dataset::PhantomSpec clean = spec;
    clean.noise_sigma = 0;
    clean.outlier_count = 0;
    const auto m = aggregate_motion(dataset::generate_phantom(clean));
    const auto [cy, cx] = dataset::phantom_center(spec);
    double band = 0, outside = 0;
    for (std::size_t r = 0; r < m.height(); ++r) {
        for (std::size_t c = 0; c < m.width(); ++c) {
            const double d = std::hypot(r - cy, c - cx);
            (d >= spec.lv_radius_min - 1 && d <= spec.lv_radius_max + 1 ? band : outside) += m.at(r, c);
        }
    }
    CHECK(band > 0);
    CHECK(outside == 0);
    (void)seq;
}

TEST_CASE("downsample_area") {
    Grid<double> g(4, 4);
    for (std::size_t i = 0; i < 16; ++i) g[i] = static_cast<double>(i);
    CHECK(downsample_area(g, 2, 2) == Grid<double>(2, 2, {2.5, 4.5, 10.5, 12.5}));
    CHECK(downsample_area(g, 4, 4) == g);
    // Non-integral ratio preserves the mean.
    const auto d = downsample_area(g, 3, 3);
    CHECK(sum(d) / 9.0 == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("saliency graph examples") {
    SUBCASE("constant motion gives uniform rows") {
        const auto t = build_saliency_graph(Image2D(8, 8, 3.0), 4, 0.15);
        for (double v : t.p) CHECK(v == doctest::Approx(1.0 / 16));
    }
    SUBCASE("2x2 hand-computed matrix") {
        const double e = std::exp(1.0);
        const auto t = build_saliency_graph(Image2D(2, 2, {1, 1, 1, e}), 2, 0.15);
        const double sigma = 0.3;
        auto f = [&](double d2) { return std::exp(-d2 / (2 * sigma * sigma)); };
        const double d = std::fabs(std::log((e + 1e-6) / (1 + 1e-6)));
        // Nodes 0..2 only differ from node 3.
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) CHECK(t.at(a, b) == 0.0);
            CHECK(t.at(a, 3) == doctest::Approx(1.0).epsilon(1e-15));
        }
        const double w0 = d * f(2), w1 = d * f(1), w2 = d * f(1);
        const double tot = w0 + w1 + w2;
        CHECK(t.at(3, 0) == doctest::Approx(w0 / tot).epsilon(1e-12));
        CHECK(t.at(3, 1) == doctest::Approx(w1 / tot).epsilon(1e-12));
        CHECK(t.at(3, 2) == doctest::Approx(w2 / tot).epsilon(1e-12));
        CHECK(t.at(3, 3) == 0.0);
    }
    SUBCASE("rows sum to one") {
        std::mt19937_64 rng(5);
        const auto m = lvtest::random_map(rng, 40, 40);
        const auto t = build_saliency_graph(Image2D(40, 40, {m.pixels().begin(), m.pixels().end()}), 8, 0.15);
        for (std::size_t a = 0; a < t.nodes(); ++a) {
            double s = 0;
            for (std::size_t b = 0; b < t.nodes(); ++b) s += t.at(a, b);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(build_saliency_graph(Image2D(4, 4), 1), Error);
}

TEST_CASE("equilibrium examples") {
    TransitionMatrix two{2, 1, {0.5, 0.5, 0.5, 0.5}};
    const auto r = equilibrium(two);
    CHECK(r.converged);
    CHECK(r.map[0] == doctest::Approx(0.5));
    CHECK(r.map[1] == doctest::Approx(0.5));

    TransitionMatrix bad{2, 1, {0.5, 0.6, 0.5, 0.5}};
    CHECK_THROWS_AS(equilibrium(bad), Error);
    TransitionMatrix neg{2, 1, {1.5, -0.5, 0.5, 0.5}};
    CHECK_THROWS_AS(equilibrium(neg), Error);
}

TEST_CASE("equilibrium matches a dense eigensolver on random 16-state chains") {
    std::mt19937_64 rng(16);
    for (int t = 0; t < 50; ++t) {
        const auto chain = random_chain(rng, 4, 4);
        const auto res = equilibrium(chain, 1e-13, 100000);
        const auto oracle = eigen_stationary(chain);
        CHECK(res.converged);
        CHECK(sum(res.map) == doctest::Approx(1.0).epsilon(1e-9));
        double linf = 0;
        for (std::size_t i = 0; i < 16; ++i) linf = std::max(linf, std::fabs(res.map[i] - oracle[i]));
        CHECK(linf < 1e-7);
    }
}

TEST_CASE("equilibrium is a fixed point at termination") {
    std::mt19937_64 rng(8);
    const auto chain = random_chain(rng, 5, 5);
    const double tol = 1e-10;
    const auto res = equilibrium(chain, tol);
    double change = 0;
    for (std::size_t b = 0; b < 25; ++b) {
        double next = 0;
        for (std::size_t a = 0; a < 25; ++a) next += res.map[a] * chain.at(a, b);
        change += std::fabs(next - res.map[b]);
    }
    CHECK(change < 10 * tol);
}

TEST_CASE("saliency_refine") {
    SUBCASE("uniform stays uniform") {
        const auto r = saliency_refine(SaliencyMap(4, 4, 1.0 / 16));
        for (double v : r.map.pixels()) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-9));
    }
    SUBCASE("single spike concentrates mass") {
        SaliencyMap s(4, 4, 0.0);
        s.at(1, 2) = 1.0;
        const auto r = saliency_refine(s);
        CHECK(r.map.at(1, 2) > 1.0 / 16);
        CHECK(sum(r.map) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("matches the closed-form stationary distribution") {
        // The chain is reversible: pi_a is proportional to s_a * sum_b s_b K(a, b).
        std::mt19937_64 rng(12);
        const auto s = lvtest::random_map(rng, 5, 5);
        const auto k = balanced_falloff(5, 5, 0.15 * 5);
        const auto r = saliency_refine(s, 0.15, 1e-14, 100000);
        std::vector<double> pi(25);
        for (std::size_t a = 0; a < 25; ++a) {
            double acc = 0;
            for (std::size_t b = 0; b < 25; ++b) acc += s[b] * k[a * 25 + b];
            pi[a] = s[a] * acc;
        }
        const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
        for (std::size_t a = 0; a < 25; ++a) CHECK(r.map[a] == doctest::Approx(pi[a] / total).epsilon(1e-8));
    }
}

TEST_CASE("balanced_falloff is a symmetric doubly stochastic rescaling of the Gaussian") {
    const std::size_t rows = 4, cols = 6, n = rows * cols;
    const double sigma = 1.7;
    const auto k = balanced_falloff(rows, cols, sigma);
    REQUIRE(k.size() == n * n);
    auto gauss = [&](std::size_t a, std::size_t b) {
        const double dr = double(a / cols) - double(b / cols), dc = double(a % cols) - double(b % cols);
        return std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
    };
    std::vector<double> d(n);
    for (std::size_t a = 0; a < n; ++a) d[a] = std::sqrt(k[a * n + a] / gauss(a, a));
    for (std::size_t a = 0; a < n; ++a) {
        double row = 0;
        for (std::size_t b = 0; b < n; ++b) {
            row += k[a * n + b];
            CHECK(k[a * n + b] == doctest::Approx(k[b * n + a]).epsilon(1e-12));
            CHECK(k[a * n + b] == doctest::Approx(d[a] * gauss(a, b) * d[b]).epsilon(1e-12));
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Corners have fewer neighbours, so they are scaled up the most.
    CHECK(d[0] > d[1 * cols + 2]);
    CHECK_THROWS_AS(balanced_falloff(0, 3, 1.0), Error);
    CHECK_THROWS_AS(balanced_falloff(3, 3, 0.0), Error);
}

TEST_CASE("first-stage equilibrium matches the symmetric-weight closed form") {
    // Log-ratio weights are symmetric, so pi_a is proportional to the row sum.
    std::mt19937_64 rng(21);
    const auto m = lvtest::random_map(rng, 6, 6);
    const Image2D motion(6, 6, {m.pixels().begin(), m.pixels().end()});
    const auto t = build_saliency_graph(motion, 6, 0.15);
    const auto r = equilibrium(t, 1e-14, 100000);
    const double sigma = 0.9;
    std::vector<double> row(36);
    for (std::size_t a = 0; a < 36; ++a) {
        for (std::size_t b = 0; b < 36; ++b) {
            const double dr = double(a / 6) - double(b / 6), dc = double(a % 6) - double(b % 6);
            row[a] += std::fabs(std::log((m[a] + 1e-6) / (m[b] + 1e-6))) *
                      std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
        }
    }
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t a = 0; a < 36; ++a) CHECK(r.map[a] == doctest::Approx(row[a] / total).epsilon(1e-8));
}

TEST_CASE("threshold_saliency") {
    CHECK(threshold_saliency(SaliencyMap(3, 3, 1.0 / 9), 0.9) == BinaryMask(3, 3, 1));
    SaliencyMap spike(3, 3, 0.01);
    spike.at(2, 0) = 0.92;
    BinaryMask only(3, 3);
    only.at(2, 0) = 1;
    CHECK(threshold_saliency(spike, 0.9) == only);
    CHECK_THROWS_AS(threshold_saliency(spike, 0.0), Error);
    CHECK_THROWS_AS(threshold_saliency(spike, 1.5), Error);

    std::mt19937_64 rng(2);
    for (auto mode : {LevelMode::FractionOfMax, LevelMode::Percentile, LevelMode::Mass}) {
        const auto s = lvtest::random_map(rng, 8, 8);
        // Mass keeps the smallest top set covering `level` of the total, so it grows with level.
        const bool grows = mode == LevelMode::Mass;
        std::size_t prev = grows ? 0 : 65;
        for (double level = 0.05; level <= 1.0; level += 0.05) {
            const auto n = threshold_saliency(s, level, mode).count();
            CHECK((grows ? n >= prev : n <= prev));
            CHECK(n >= 1);
            prev = n;
        }
    }
}

TEST_CASE("fit_roi geometry") {
    SUBCASE("single centre cell with no margin") {
        BinaryMask m(32, 32);
        m.at(16, 16) = 1;
        CHECK(fit_roi(m, 256, 256, 0.0, 1) == RoiBox{128, 128, 8});
    }
    SUBCASE("rows 2..5, cols 3..4 on a 32 grid over 256x256") {
        BinaryMask m(32, 32);
        for (std::size_t r = 2; r <= 5; ++r) {
            for (std::size_t c = 3; c <= 4; ++c) m.at(r, c) = 1;
        }
        // Footprint rows [16,48), cols [24,40); widened to 32 about col centre 32.
        CHECK(fit_roi(m, 256, 256, 0.0, 1) == RoiBox{16, 16, 32});
    }
    SUBCASE("corner mask is clamped inside and stays square") {
        BinaryMask m(32, 32);
        m.at(0, 31) = 1;
        const auto b = fit_roi(m, 256, 256, 0.15, 32);
        CHECK(b.top == 0);
        CHECK(b.left + b.side == 256);
        CHECK(b.side >= 32);
    }
    SUBCASE("minimum side and oversize shrink") {
        BinaryMask m(32, 32);
        m.at(10, 10) = 1;
        CHECK(fit_roi(m, 256, 256, 0.0, 32).side == 32);
        CHECK(fit_roi(BinaryMask(32, 32, 1), 100, 80, 0.2, 32) == RoiBox{10, 0, 80});
    }
    CHECK_THROWS_AS(fit_roi(BinaryMask(32, 32), 256, 256), Error);

    std::mt19937_64 rng(7);
    for (int t = 0; t < 200; ++t) {
        const auto m = lvtest::random_mask(rng, 32, 32, 0.02);
        if (m.count() == 0) continue;
        const std::size_t h = 64 + rng() % 200, w = 64 + rng() % 200;
        const auto b = fit_roi(m, h, w, 0.1, 32);
        CHECK(b.top + b.side <= h);
        CHECK(b.left + b.side <= w);
        CHECK(b.side >= 32);
    }
    CHECK(full_frame_box(100, 80) == RoiBox{10, 0, 80});
}

TEST_CASE("scaling the motion map leaves the box unchanged") {
    const auto seq = preprocess(dataset::generate_phantom(phantom_spec(31)));
    auto scaled = seq;
    for (auto& f : scaled.frames) {
        for (double& v : f.pixels()) v *= 1000.0;
    }
    const auto a = extract_roi(seq), b = extract_roi(scaled);
    CHECK(a.box == b.box);
}

TEST_CASE("extract_roi on phantoms and static input") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto spec = phantom_spec(seed);
        const auto seq = preprocess(dataset::generate_phantom(spec));
        const auto res = extract_roi(seq);
        CHECK_FALSE(res.fallback);
        CHECK(sum(res.saliency) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(res.cropped.frames.size() == seq.frames.size());
        CHECK(res.cropped.ground_truth.size() == seq.ground_truth.size());
        for (std::size_t k = 0; k < seq.frames.size(); ++k) {
            const auto& gt = *seq.ground_truth[k];
            CHECK(res.cropped.ground_truth[k]->count() == gt.count());
        }
        // Threshold mask covers the disk's centre cell.
        const auto [cy, cx] = dataset::phantom_center(spec);
        const auto mask = threshold_saliency(res.saliency, 0.9);
        bool near = false;
        for (std::size_t r = 0; r < 32; ++r) {
            for (std::size_t c = 0; c < 32; ++c) {
                if (mask.at(r, c) && std::hypot(r * 8 + 4 - cy, c * 8 + 4 - cx) <= spec.lv_radius_max + 8) near = true;
            }
        }
        CHECK(near);
    }

    ImageSequence still;
    still.sequence_id = "still";
    still.frames = std::vector<Image2D>(5, Image2D(60, 40, 0.5));
    const auto res = extract_roi(still);
    CHECK(res.fallback);
    CHECK_FALSE(res.warning.empty());
    CHECK(res.box == RoiBox{10, 0, 40});
}
