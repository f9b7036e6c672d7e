#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "lvseg/fcn/layers.hpp"
#include "support.hpp"

using namespace lvseg;
using namespace lvseg::fcn;

namespace {

// Direct six-loop cross-correlation with explicit zero padding.
Tensor conv_oracle(const Tensor& x, const Kernel& k, std::size_t stride, std::size_t pad) {
    const std::size_t oh = (x.h + 2 * pad - k.size) / stride + 1, ow = (x.w + 2 * pad - k.size) / stride + 1;
    Tensor y(oh, ow, k.out);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t co = 0; co < k.out; ++co) {
                double acc = k.bias[co];
                for (std::size_t ky = 0; ky < k.size; ++ky) {
                    for (std::size_t kx = 0; kx < k.size; ++kx) {
                        const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                        const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                        if (iy < 0 || ix < 0 || iy >= static_cast<long long>(x.h) || ix >= static_cast<long long>(x.w)) {
                            continue;
                        }
                        for (std::size_t ci = 0; ci < k.in; ++ci) {
                            acc += x.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) * k.w(ky, kx, ci, co);
                        }
                    }
                }
                y.at(oy, ox, co) = acc;
            }
        }
    }
    return y;
}

Tensor single_channel(std::size_t h, std::size_t w, std::vector<double> v) {
    Tensor t(h, w, 1);
    t.data = std::move(v);
    return t;
}

}  // namespace

TEST_CASE("conv2d examples") {
    SUBCASE("1x1 identity kernel") {
        std::mt19937_64 rng(1);
        const Tensor x = lvtest::random_tensor(rng, 4, 5, 1);
        Kernel k(1, 1, 1);
        k.w(0, 0, 0, 0) = 1.0;
        CHECK(conv2d_forward(x, k) == x);
    }
    SUBCASE("all-ones 3x3 over all-ones 4x4 with same padding") {
        Kernel k(3, 1, 1);
        std::fill(k.weights.begin(), k.weights.end(), 1.0);
        const auto y = conv2d_forward(Tensor(4, 4, 1, 1.0), k, 1, 1);
        CHECK(y.h == 4);
        CHECK(y.at(1, 1, 0) == 9.0);
        CHECK(y.at(0, 0, 0) == 4.0);
        CHECK(y.at(0, 1, 0) == 6.0);
        CHECK(y.at(3, 2, 0) == 6.0);
    }
    SUBCASE("output size formula") {
        Kernel k(3, 2, 4);
        const auto y = conv2d_forward(Tensor(9, 7, 2), k, 2, 1);
        CHECK(y.h == 5);
        CHECK(y.w == 4);
        CHECK(y.d == 4);
    }
    CHECK_THROWS_AS(conv2d_forward(Tensor(4, 4, 2), Kernel(3, 1, 1)), Error);
    CHECK_THROWS_AS(conv2d_forward(Tensor(2, 2, 1), Kernel(3, 1, 1)), Error);
}

TEST_CASE("conv2d matches the direct-loop oracle") {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 60; ++t) {
        const std::size_t ks = 1 + rng() % 4, stride = 1 + rng() % 2, pad = rng() % (ks / 2 + 1);
        const std::size_t in = 1 + rng() % 4, out = 1 + rng() % 4;
        const Tensor x = lvtest::random_tensor(rng, ks + rng() % 8, ks + rng() % 8, in);
        const Kernel k = lvtest::random_kernel(rng, ks, in, out);
        const auto got = conv2d_forward(x, k, stride, pad);
        const auto want = conv_oracle(x, k, stride, pad);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::fabs(got.data[i] - want.data[i]) <= 1e-12);
    }
}

TEST_CASE("conv2d backward examples") {
    std::mt19937_64 rng(3);
    const Tensor x = lvtest::random_tensor(rng, 5, 5, 2);
    const Kernel k = lvtest::random_kernel(rng, 3, 2, 3);
    const auto zero = conv2d_backward(x, k, Tensor(5, 5, 3), 1, 1);
    for (double v : zero.input.data) CHECK(v == 0.0);
    for (double v : zero.weights) CHECK(v == 0.0);
    for (double v : zero.bias) CHECK(v == 0.0);

    // A unit gradient at one interior output pixel makes dW the input patch.
    Tensor g(5, 5, 3);
    g.at(2, 3, 1) = 1.0;
    const auto one = conv2d_backward(x, k, g, 1, 1);
    for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
            for (std::size_t ci = 0; ci < 2; ++ci) {
                const std::size_t wi = ((ky * 3 + kx) * 2 + ci) * 3 + 1;
                CHECK(one.weights[wi] == x.at(1 + ky, 2 + kx, ci));
            }
        }
    }
    CHECK(one.bias == std::vector<double>{0, 1, 0});
    CHECK_THROWS_AS(conv2d_backward(x, k, Tensor(4, 4, 3), 1, 1), Error);
}

TEST_CASE("relu") {
    const Tensor x = single_channel(1, 4, {-1, 0, 2, -3});
    CHECK(relu_forward(x).data == std::vector<double>{0, 0, 2, 0});
    CHECK(relu_backward(x, Tensor(1, 4, 1, 5.0)).data == std::vector<double>{0, 0, 5, 0});
}

TEST_CASE("maxpool examples") {
    SUBCASE("ramp") {
        Tensor x(4, 4, 1);
        for (std::size_t i = 0; i < 16; ++i) x.data[i] = static_cast<double>(i + 1);
        const auto p = maxpool_forward(x);
        CHECK(p.out.data == std::vector<double>{6, 8, 14, 16});
        const auto g = maxpool_backward(x, p.argmax, Tensor(2, 2, 1, 1.0));
        std::vector<double> expect(16, 0.0);
        expect[5] = expect[7] = expect[13] = expect[15] = 1.0;
        CHECK(g.data == expect);
    }
    SUBCASE("constant input routes to the first cell") {
        const auto p = maxpool_forward(Tensor(2, 2, 1, 3.0));
        CHECK(p.out.data == std::vector<double>{3.0});
        CHECK(p.argmax == std::vector<std::size_t>{0});
    }
    CHECK_THROWS_AS(maxpool_forward(Tensor(3, 4, 1)), Error);
}

TEST_CASE("upconv examples") {
    CHECK(upconv_kernel_size(2) == 4);
    CHECK(upconv_kernel_size(4) == 8);
    CHECK(upconv_kernel_size(3) == 5);
    CHECK_THROWS_AS(upconv_forward(Tensor(2, 2, 1), Kernel(5, 1, 1), 3), Error);

    SUBCASE("spike gives the bilinear stamp") {
        Tensor x(4, 4, 1);
        x.at(1, 2, 0) = 1.0;
        const auto k = bilinear_kernel(2, 1);
        const auto y = upconv_forward(x, k, 2);
        REQUIRE(y.h == 8);
        const double w1d[4] = {0.25, 0.75, 0.75, 0.25};
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                // Stamp origin: input (1,2) * 2 - (K - f) / 2 = (1, 3).
                const long long dr = static_cast<long long>(r) - 1, dc = static_cast<long long>(c) - 3;
                const double want = (dr >= 0 && dr < 4 && dc >= 0 && dc < 4) ? w1d[dr] * w1d[dc] : 0.0;
                CHECK(y.at(r, c, 0) == doctest::Approx(want).epsilon(1e-15));
            }
        }
    }
    SUBCASE("constant input stays constant away from the border") {
        for (std::size_t f : {2u, 4u}) {
            const auto y = upconv_forward(Tensor(6, 6, 2, 0.7), bilinear_kernel(f, 2), f);
            CHECK(y.h == 6 * f);
            for (std::size_t r = f; r < 5 * f; ++r) {
                for (std::size_t c = f; c < 5 * f; ++c) {
                    CHECK(y.at(r, c, 0) == doctest::Approx(0.7).epsilon(1e-12));
                    CHECK(y.at(r, c, 1) == doctest::Approx(0.7).epsilon(1e-12));
                }
            }
        }
    }
    SUBCASE("linear ramp is reproduced at the 2x midpoints") {
        Tensor x(1, 6, 1);
        for (std::size_t c = 0; c < 6; ++c) x.at(0, c, 0) = static_cast<double>(c);
        Tensor tall(3, 6, 1);
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 6; ++c) tall.at(r, c, 0) = static_cast<double>(c);
        }
        const auto y = upconv_forward(tall, bilinear_kernel(2, 1), 2);
        // Output column c samples input position (c - 0.5) / 2.
        for (std::size_t c = 1; c < 11; ++c) {
            CHECK(y.at(2, c, 0) == doctest::Approx((static_cast<double>(c) - 0.5) / 2.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax and loss") {
    std::mt19937_64 rng(9);
    const Tensor logits = lvtest::random_tensor(rng, 3, 3, 2, -50, 50);
    const auto p = softmax_forward(logits);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(p.data[2 * i] + p.data[2 * i + 1] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(p.data[2 * i] >= 0.0);
    }
    const auto t = lvtest::random_mask(rng, 3, 3);
    CHECK(weighted_cross_entropy(Tensor(3, 3, 2), t, {1, 1}).loss == doctest::Approx(std::numbers::ln2));

    Tensor perfect(2, 2, 2);
    BinaryMask target(2, 2, {1, 0, 0, 1});
    for (std::size_t i = 0; i < 4; ++i) perfect.data[2 * i + target[i]] = 800.0;
    CHECK(weighted_cross_entropy(perfect, target, {1, 1}).loss == doctest::Approx(0.0));

    // Weight scaling multiplies the loss of that class's pixels.
    const BinaryMask ones(3, 3, 1);
    CHECK(weighted_cross_entropy(logits, ones, {1, 3}).loss ==
          doctest::Approx(3 * weighted_cross_entropy(logits, ones, {1, 1}).loss));
    CHECK_THROWS_AS(weighted_cross_entropy(Tensor(3, 3, 3), t, {1, 1}), Error);
    CHECK_THROWS_AS(weighted_cross_entropy(logits, t, {0, 1}), Error);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(77);
    lvtest::GradStats conv, pool, up, loss;
    for (int t = 0; t < 20; ++t) {
        lvtest::check_conv_case(rng, conv);
        lvtest::check_maxpool_case(rng, pool);
        lvtest::check_upconv_case(rng, up);
        lvtest::check_loss_case(rng, loss);
    }
    CHECK(conv.ok());
    CHECK(pool.ok());
    CHECK(up.ok());
    CHECK(loss.ok());
}
