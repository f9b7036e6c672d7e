#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lvseg/error.hpp"

namespace lvseg::fcn {

/// h x w x d feature map, row-major with channels innermost.
struct Tensor {
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t d = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t h_, std::size_t w_, std::size_t d_, double fill = 0.0)
        : h(h_), w(w_), d(d_), data(h_ * w_ * d_, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * w + x) * d + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * w + x) * d + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && d == o.d; }
    std::string shape_string() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(d);
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace lvseg::fcn
