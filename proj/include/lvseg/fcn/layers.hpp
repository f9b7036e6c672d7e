#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "lvseg/fcn/tensor.hpp"
#include "lvseg/imgcore.hpp"

namespace lvseg::fcn {

/// Square convolution (or transposed-convolution) kernel. Weights are indexed
/// [ky][kx][in][out]; one bias per output channel.
struct Kernel {
    std::size_t size = 0;
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    Kernel() = default;
    Kernel(std::size_t size_, std::size_t in_, std::size_t out_)
        : size(size_), in(in_), out(out_), weights(size_ * size_ * in_ * out_, 0.0), bias(out_, 0.0) {}

    double& w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
        return weights[((ky * size + kx) * in + ci) * out + co];
    }
    double w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) const {
        return weights[((ky * size + kx) * in + ci) * out + co];
    }
    bool empty() const { return weights.empty(); }
    friend bool operator==(const Kernel&, const Kernel&) = default;
};

struct KernelGrad {
    Tensor input;                // dL/dx
    std::vector<double> weights; // dL/dW, same layout as Kernel::weights
    std::vector<double> bias;    // dL/db
};

/// Cross-correlation with symmetric zero padding `pad`; output size is
/// floor((h + 2 pad - k) / stride) + 1. pad = k / 2 with stride 1 keeps the size.
Tensor conv2d_forward(const Tensor& x, const Kernel& k, std::size_t stride = 1, std::size_t pad = 0);
KernelGrad conv2d_backward(const Tensor& x, const Kernel& k, const Tensor& grad_out, std::size_t stride = 1,
                           std::size_t pad = 0);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

struct PoolResult {
    Tensor out;
    std::vector<std::size_t> argmax;  // flat input index feeding each output element
};

/// Non-overlapping max pooling; ties go to the first cell in raster order.
PoolResult maxpool_forward(const Tensor& x, std::size_t size = 2, std::size_t stride = 2);
Tensor maxpool_backward(const Tensor& x, const std::vector<std::size_t>& argmax, const Tensor& grad_out);

/// Kernel size used for a transposed convolution upsampling by `factor`.
std::size_t upconv_kernel_size(std::size_t factor);

/// Transposed convolution with stride `factor`, cropped so the output is
/// exactly (h * factor) x (w * factor).
Tensor upconv_forward(const Tensor& x, const Kernel& k, std::size_t factor);
KernelGrad upconv_backward(const Tensor& x, const Kernel& k, const Tensor& grad_out, std::size_t factor);

/// Channel-diagonal kernel holding bilinear interpolation coefficients.
Kernel bilinear_kernel(std::size_t factor, std::size_t channels);

Tensor add_forward(const Tensor& a, const Tensor& b);

/// Per-pixel softmax over channels.
Tensor softmax_forward(const Tensor& logits);

struct LossResult {
    double loss = 0.0;
    Tensor grad;  // dL/dlogits
};

/// Mean over pixels of w_t * -log softmax(logits)_t for the 2-channel logits and
/// binary target t.
LossResult weighted_cross_entropy(const Tensor& logits, const BinaryMask& target,
                                  const std::array<double, 2>& class_weights);

}  // namespace lvseg::fcn
