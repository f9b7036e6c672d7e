#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lvseg/fcn/network.hpp"
#include "support.hpp"

using namespace lvseg;
using namespace lvseg::fcn;

namespace {

double logits_loss(const NetworkParams& p, const Tensor& x, const BinaryMask& t) {
    ForwardCache cache;
    return weighted_cross_entropy(forward_logits(p, x, cache), t, {1.0, 2.0}).loss;
}

}  // namespace

TEST_CASE("mini FCN-8s layer table") {
    const auto a = mini_fcn8s(64);
    CHECK(a.layers.size() == 26);
    CHECK(a.layers.back().kind == LayerKind::Softmax);
    const auto shapes = a.shapes();
    CHECK(shapes.back() == std::array<std::size_t, 3>{64, 64, 2});
    CHECK(shapes[4] == std::array<std::size_t, 3>{32, 32, 16});
    CHECK(shapes[9] == std::array<std::size_t, 3>{16, 16, 32});
    CHECK(shapes[14] == std::array<std::size_t, 3>{8, 8, 64});
    std::size_t upconvs = 0, adds = 0;
    for (const auto& l : a.layers) {
        upconvs += l.kind == LayerKind::UpConv;
        adds += l.kind == LayerKind::Add;
    }
    CHECK(upconvs == 3);
    CHECK(adds == 2);
    CHECK_THROWS_AS(mini_fcn8s(60), Error);
    CHECK(mini_fcn8s(32).shapes().back() == std::array<std::size_t, 3>{32, 32, 2});
}

TEST_CASE("architecture validation rejects broken tables") {
    auto a = mini_fcn8s(32);
    a.layers[2].channels_in = 8;
    CHECK_THROWS_AS(a.validate(), Error);
    a = mini_fcn8s(32);
    a.layers.pop_back();
    CHECK_THROWS_AS(a.validate(), Error);
    a = mini_fcn8s(32);
    a.layers[3].input = 10;  // refers forward
    CHECK_THROWS_AS(a.validate(), Error);
}

TEST_CASE("fingerprints distinguish architectures") {
    CHECK(mini_fcn8s(64).fingerprint() == mini_fcn8s(64).fingerprint());
    CHECK(mini_fcn8s(64).fingerprint() != mini_fcn8s(32).fingerprint());
    CHECK(to_hex(mini_fcn8s(64).fingerprint()).size() == 64);
}

TEST_CASE("forward contracts") {
    const auto arch = mini_fcn8s(32);
    std::mt19937_64 rng(4);
    const Tensor x = lvtest::random_tensor(rng, 32, 32, 1, 0.0, 1.0);

    const auto zero = forward(zero_params(arch), x);
    for (double v : zero.pixels()) CHECK(v == 0.5);

    const auto p = init_params(arch, 7);
    const auto a = forward(p, x), b = forward(p, x);
    CHECK(a == b);
    CHECK(a.height() == 32);
    CHECK(a.width() == 32);
    for (double v : a.pixels()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(init_params(arch, 7) == p);
    CHECK_FALSE(init_params(arch, 8) == p);
    CHECK_THROWS_AS(forward(p, Tensor(16, 16, 1)), Error);
    CHECK_THROWS_AS(forward(p, Tensor(32, 32, 2)), Error);
}

TEST_CASE("early layers are translation covariant in the interior") {
    const auto arch = mini_fcn8s(32);
    const auto p = init_params(arch, 3);
    std::mt19937_64 rng(5);
    Tensor x(32, 32, 1), shifted(32, 32, 1);
    for (std::size_t r = 8; r < 20; ++r) {
        for (std::size_t c = 8; c < 20; ++c) {
            x.at(r, c, 0) = std::uniform_real_distribution<double>(0, 1)(rng);
            shifted.at(r + 2, c + 4, 0) = x.at(r, c, 0);
        }
    }
    ForwardCache ca, cb;
    forward_logits(p, x, ca);
    forward_logits(p, shifted, cb);
    const Tensor& pa = ca.outputs[4];
    const Tensor& pb = cb.outputs[4];
    // Pool output shifts by (1, 2); compare away from padding effects.
    for (std::size_t r = 2; r < 13; ++r) {
        for (std::size_t c = 2; c < 12; ++c) {
            for (std::size_t d = 0; d < pa.d; ++d) CHECK(pb.at(r + 1, c + 2, d) == doctest::Approx(pa.at(r, c, d)));
        }
    }
}

TEST_CASE("whole-network gradients match central differences") {
    auto p = init_params(mini_fcn8s(8), 11);
    // Small nonzero biases so every path is exercised.
    std::mt19937_64 rng(6);
    for (auto& k : p.kernels) {
        for (double& b : k.bias) b = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    }
    Tensor x = lvtest::random_tensor(rng, 8, 8, 1, 0.0, 1.0);
    const auto target = lvtest::random_mask(rng, 8, 8);

    ForwardCache cache;
    const auto& logits = forward_logits(p, x, cache);
    const auto lr = weighted_cross_entropy(logits, target, {1.0, 2.0});
    const auto grads = backward(p, x, cache, lr.grad);
    REQUIRE(grads.size() == p.kernels.size());

    lvtest::GradStats stats;
    auto loss = [&] { return logits_loss(p, x, target); };
    for (std::size_t i = 0; i < p.kernels.size(); ++i) {
        if (p.kernels[i].empty()) continue;
        // Probe a strided subset of each layer's weights plus all biases.
        auto& w = p.kernels[i].weights;
        const std::size_t step = std::max<std::size_t>(1, w.size() / 25);
        std::vector<double> probe, probe_grad;
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < w.size(); j += step) idx.push_back(j);
        for (std::size_t j : idx) {
            const double saved = w[j];
            const double analytic = grads[i].weights[j];
            std::vector<double> one{saved};
            auto l1 = [&] {
                w[j] = one[0];
                return loss();
            };
            lvtest::compare_fd(one, {analytic}, l1, stats);
            w[j] = saved;
        }
        lvtest::compare_fd(p.kernels[i].bias, grads[i].bias, loss, stats);
    }
    CHECK(stats.checked > 200);
    CHECK(stats.failures == 0);
}

TEST_CASE("weight files round-trip bit-exactly and are verified on load") {
    lvtest::TempDir dir("fcnw");
    const auto arch = mini_fcn8s(32);
    const auto p = init_params(arch, 9);
    save_params(dir / "m.fcnw", p);
    const auto q = load_params(dir / "m.fcnw", arch);
    CHECK(q == p);
    CHECK(serialize_params(q) == serialize_params(p));

    CHECK_THROWS_AS(load_params(dir / "m.fcnw", mini_fcn8s(64)), Error);
    auto bytes = serialize_params(p);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_params(bad, arch), Error);
    bad = bytes;
    bad.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_params(bad, arch), Error);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(deserialize_params(bad, arch), Error);
    CHECK_THROWS_AS(load_params(dir / "absent.fcnw", arch), Error);

    auto other = init_params(mini_fcn8s(64), 1);
    CHECK_THROWS_AS(check_fingerprint(other, arch), Error);
}
