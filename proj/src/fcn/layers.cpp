#include "lvseg/fcn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace lvseg::fcn {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajorMatrix>;

struct ConvGeometry {
    std::size_t oh = 0, ow = 0;
};

ConvGeometry conv_geometry(const Tensor& x, const Kernel& k, std::size_t stride, std::size_t pad) {
    if (k.size == 0 || stride == 0) throw Error("conv2d: kernel size and stride must be positive");
    if (x.d != k.in) {
        throw Error("conv2d: input has " + std::to_string(x.d) + " channels, kernel expects " + std::to_string(k.in));
    }
    if (k.weights.size() != k.size * k.size * k.in * k.out || k.bias.size() != k.out) {
        throw Error("conv2d: kernel storage does not match its shape");
    }
    if (x.h + 2 * pad < k.size || x.w + 2 * pad < k.size) throw Error("conv2d: input smaller than kernel");
    return {(x.h + 2 * pad - k.size) / stride + 1, (x.w + 2 * pad - k.size) / stride + 1};
}

/// Patch matrix: one row per output pixel, (ky, kx, ci) along the columns.
RowMajorMatrix im2col(const Tensor& x, std::size_t ksize, std::size_t stride, std::size_t pad, const ConvGeometry& g) {
    const std::size_t row_len = ksize * ksize * x.d;
    RowMajorMatrix cols = RowMajorMatrix::Zero(static_cast<Eigen::Index>(g.oh * g.ow), static_cast<Eigen::Index>(row_len));
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            double* row = cols.data() + (oy * g.ow + ox) * row_len;
            for (std::size_t ky = 0; ky < ksize; ++ky) {
                const auto iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                if (iy < 0 || iy >= static_cast<long long>(x.h)) continue;
                for (std::size_t kx = 0; kx < ksize; ++kx) {
                    const auto ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                    if (ix < 0 || ix >= static_cast<long long>(x.w)) continue;
                    std::memcpy(row + (ky * ksize + kx) * x.d,
                                x.data.data() + (static_cast<std::size_t>(iy) * x.w + static_cast<std::size_t>(ix)) * x.d,
                                x.d * sizeof(double));
                }
            }
        }
    }
    return cols;
}

void col2im(const RowMajorMatrix& cols, Tensor& gx, std::size_t ksize, std::size_t stride, std::size_t pad,
            const ConvGeometry& g) {
    const std::size_t row_len = ksize * ksize * gx.d;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const double* row = cols.data() + (oy * g.ow + ox) * row_len;
            for (std::size_t ky = 0; ky < ksize; ++ky) {
                const auto iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                if (iy < 0 || iy >= static_cast<long long>(gx.h)) continue;
                for (std::size_t kx = 0; kx < ksize; ++kx) {
                    const auto ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                    if (ix < 0 || ix >= static_cast<long long>(gx.w)) continue;
                    double* dst = gx.data.data() + (static_cast<std::size_t>(iy) * gx.w + static_cast<std::size_t>(ix)) * gx.d;
                    const double* src = row + (ky * ksize + kx) * gx.d;
                    for (std::size_t c = 0; c < gx.d; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

bool is_pointwise(const Kernel& k, std::size_t stride, std::size_t pad) {
    return k.size == 1 && stride == 1 && pad == 0;
}

// Eigen peels vector loops according to the data address, which changes the
// summation order. Copying into Eigen-owned (maximally aligned) storage makes
// every product depend on shapes only, so training is bit-reproducible.
RowMajorMatrix owned(const std::vector<double>& data, std::size_t rows, std::size_t cols) {
    return ConstMatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void store(const RowMajorMatrix& m, std::vector<double>& out) {
    out.assign(m.data(), m.data() + m.size());
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Kernel& k, std::size_t stride, std::size_t pad) {
    const auto g = conv_geometry(x, k, stride, pad);
    Tensor y(g.oh, g.ow, k.out);
    const RowMajorMatrix wmat = owned(k.weights, k.size * k.size * k.in, k.out);
    const RowMajorMatrix cols =
        is_pointwise(k, stride, pad) ? owned(x.data, g.oh * g.ow, x.d) : im2col(x, k.size, stride, pad, g);
    RowMajorMatrix ymat = cols * wmat;
    for (Eigen::Index r = 0; r < ymat.rows(); ++r) {
        for (Eigen::Index c = 0; c < ymat.cols(); ++c) ymat(r, c) += k.bias[static_cast<std::size_t>(c)];
    }
    store(ymat, y.data);
    return y;
}

KernelGrad conv2d_backward(const Tensor& x, const Kernel& k, const Tensor& grad_out, std::size_t stride,
                           std::size_t pad) {
    const auto g = conv_geometry(x, k, stride, pad);
    if (grad_out.h != g.oh || grad_out.w != g.ow || grad_out.d != k.out) {
        throw Error("conv2d_backward: gradient shape " + grad_out.shape_string() + " does not match output");
    }
    const std::size_t rows = g.oh * g.ow;
    const RowMajorMatrix wmat = owned(k.weights, k.size * k.size * k.in, k.out);
    const RowMajorMatrix gy = owned(grad_out.data, rows, k.out);

    KernelGrad grad;
    grad.bias.assign(k.out, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < k.out; ++c) grad.bias[c] += grad_out.data[r * k.out + c];
    }
    grad.input = Tensor(x.h, x.w, x.d);

    const bool pointwise = is_pointwise(k, stride, pad);
    const RowMajorMatrix cols = pointwise ? owned(x.data, rows, x.d) : im2col(x, k.size, stride, pad, g);
    const RowMajorMatrix gw = cols.transpose() * gy;
    store(gw, grad.weights);
    const RowMajorMatrix gcols = gy * wmat.transpose();
    if (pointwise) {
        store(gcols, grad.input.data);
    } else {
        col2im(gcols, grad.input, k.size, stride, pad, g);
    }
    return grad;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (!x.same_shape(grad_out)) throw Error("relu_backward: shape mismatch");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x.data[i] > 0.0)) g.data[i] = 0.0;
    }
    return g;
}

PoolResult maxpool_forward(const Tensor& x, std::size_t size, std::size_t stride) {
    if (size == 0 || stride == 0) throw Error("maxpool: size and stride must be positive");
    if (x.h % stride != 0 || x.w % stride != 0) {
        throw Error("maxpool: input " + x.shape_string() + " is not divisible by stride " + std::to_string(stride));
    }
    PoolResult r;
    r.out = Tensor(x.h / stride, x.w / stride, x.d);
    r.argmax.resize(r.out.size());
    for (std::size_t oy = 0; oy < r.out.h; ++oy) {
        for (std::size_t ox = 0; ox < r.out.w; ++ox) {
            for (std::size_t c = 0; c < x.d; ++c) {
                std::size_t best = (oy * stride * x.w + ox * stride) * x.d + c;
                double best_v = x.data[best];
                for (std::size_t ky = 0; ky < size && oy * stride + ky < x.h; ++ky) {
                    for (std::size_t kx = 0; kx < size && ox * stride + kx < x.w; ++kx) {
                        const std::size_t idx = ((oy * stride + ky) * x.w + ox * stride + kx) * x.d + c;
                        if (x.data[idx] > best_v) {
                            best_v = x.data[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (oy * r.out.w + ox) * x.d + c;
                r.out.data[o] = best_v;
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const Tensor& x, const std::vector<std::size_t>& argmax, const Tensor& grad_out) {
    if (argmax.size() != grad_out.size()) throw Error("maxpool_backward: routing table does not match gradient");
    Tensor g(x.h, x.w, x.d);
    for (std::size_t i = 0; i < grad_out.size(); ++i) g.data[argmax[i]] += grad_out.data[i];
    return g;
}

std::size_t upconv_kernel_size(std::size_t factor) { return 2 * factor - factor % 2; }

namespace {

void check_upconv(const Tensor& x, const Kernel& k, std::size_t factor) {
    if (factor < 2 || factor % 2 != 0) throw Error("upconv: factor must be an even integer >= 2");
    if (k.size != upconv_kernel_size(factor)) throw Error("upconv: kernel size does not match factor");
    if (x.d != k.in) throw Error("upconv: input channels do not match kernel");
    if (k.weights.size() != k.size * k.size * k.in * k.out || k.bias.size() != k.out) {
        throw Error("upconv: kernel storage does not match its shape");
    }
}

}  // namespace

Tensor upconv_forward(const Tensor& x, const Kernel& k, std::size_t factor) {
    check_upconv(x, k, factor);
    const auto crop = static_cast<long long>((k.size - factor) / 2);
    Tensor y(x.h * factor, x.w * factor, k.out);
    for (std::size_t oy = 0; oy < y.h; ++oy) {
        for (std::size_t ox = 0; ox < y.w; ++ox) {
            for (std::size_t co = 0; co < k.out; ++co) y.at(oy, ox, co) = k.bias[co];
        }
    }
    for (std::size_t iy = 0; iy < x.h; ++iy) {
        for (std::size_t ix = 0; ix < x.w; ++ix) {
            for (std::size_t ky = 0; ky < k.size; ++ky) {
                const long long oy = static_cast<long long>(iy * factor + ky) - crop;
                if (oy < 0 || oy >= static_cast<long long>(y.h)) continue;
                for (std::size_t kx = 0; kx < k.size; ++kx) {
                    const long long ox = static_cast<long long>(ix * factor + kx) - crop;
                    if (ox < 0 || ox >= static_cast<long long>(y.w)) continue;
                    for (std::size_t ci = 0; ci < k.in; ++ci) {
                        const double v = x.at(iy, ix, ci);
                        for (std::size_t co = 0; co < k.out; ++co) {
                            y.at(static_cast<std::size_t>(oy), static_cast<std::size_t>(ox), co) += v * k.w(ky, kx, ci, co);
                        }
                    }
                }
            }
        }
    }
    return y;
}

KernelGrad upconv_backward(const Tensor& x, const Kernel& k, const Tensor& grad_out, std::size_t factor) {
    check_upconv(x, k, factor);
    if (grad_out.h != x.h * factor || grad_out.w != x.w * factor || grad_out.d != k.out) {
        throw Error("upconv_backward: gradient shape " + grad_out.shape_string() + " does not match output");
    }
    const auto crop = static_cast<long long>((k.size - factor) / 2);
    KernelGrad g;
    g.input = Tensor(x.h, x.w, x.d);
    g.weights.assign(k.weights.size(), 0.0);
    g.bias.assign(k.out, 0.0);
    for (std::size_t i = 0; i < grad_out.size(); ++i) g.bias[i % k.out] += grad_out.data[i];
    for (std::size_t iy = 0; iy < x.h; ++iy) {
        for (std::size_t ix = 0; ix < x.w; ++ix) {
            for (std::size_t ky = 0; ky < k.size; ++ky) {
                const long long oy = static_cast<long long>(iy * factor + ky) - crop;
                if (oy < 0 || oy >= static_cast<long long>(grad_out.h)) continue;
                for (std::size_t kx = 0; kx < k.size; ++kx) {
                    const long long ox = static_cast<long long>(ix * factor + kx) - crop;
                    if (ox < 0 || ox >= static_cast<long long>(grad_out.w)) continue;
                    const double* go = &grad_out.data[(static_cast<std::size_t>(oy) * grad_out.w + static_cast<std::size_t>(ox)) * k.out];
                    for (std::size_t ci = 0; ci < k.in; ++ci) {
                        const double v = x.at(iy, ix, ci);
                        double acc = 0.0;
                        double* gw = &g.weights[((ky * k.size + kx) * k.in + ci) * k.out];
                        for (std::size_t co = 0; co < k.out; ++co) {
                            acc += go[co] * k.w(ky, kx, ci, co);
                            gw[co] += v * go[co];
                        }
                        g.input.at(iy, ix, ci) += acc;
                    }
                }
            }
        }
    }
    return g;
}

Kernel bilinear_kernel(std::size_t factor, std::size_t channels) {
    const std::size_t size = upconv_kernel_size(factor);
    Kernel k(size, channels, channels);
    const auto f = static_cast<double>((size + 1) / 2);
    const double center = (size % 2 == 1) ? f - 1.0 : f - 0.5;
    for (std::size_t ky = 0; ky < size; ++ky) {
        for (std::size_t kx = 0; kx < size; ++kx) {
            const double v = (1.0 - std::abs(static_cast<double>(ky) - center) / f) *
                             (1.0 - std::abs(static_cast<double>(kx) - center) / f);
            for (std::size_t c = 0; c < channels; ++c) k.w(ky, kx, c, c) = v;
        }
    }
    return k;
}

Tensor add_forward(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw Error("add: shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
    Tensor y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
    return y;
}

Tensor softmax_forward(const Tensor& logits) {
    Tensor p(logits.h, logits.w, logits.d);
    const std::size_t pixels = logits.h * logits.w;
    for (std::size_t i = 0; i < pixels; ++i) {
        const double* l = &logits.data[i * logits.d];
        double* o = &p.data[i * logits.d];
        const double m = *std::max_element(l, l + logits.d);
        double total = 0.0;
        for (std::size_t c = 0; c < logits.d; ++c) total += (o[c] = std::exp(l[c] - m));
        for (std::size_t c = 0; c < logits.d; ++c) o[c] /= total;
    }
    return p;
}

LossResult weighted_cross_entropy(const Tensor& logits, const BinaryMask& target,
                                  const std::array<double, 2>& class_weights) {
    if (logits.d != 2) throw Error("loss: logits must have 2 channels");
    if (logits.h != target.height() || logits.w != target.width()) throw Error("loss: target shape mismatch");
    if (!(class_weights[0] > 0.0) || !(class_weights[1] > 0.0)) throw Error("loss: class weights must be positive");
    const std::size_t pixels = logits.h * logits.w;
    const double inv_n = 1.0 / static_cast<double>(pixels);
    LossResult r;
    r.grad = Tensor(logits.h, logits.w, 2);
    double total = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) {
        const double l0 = logits.data[2 * i];
        const double l1 = logits.data[2 * i + 1];
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m);
        const double e1 = std::exp(l1 - m);
        const double lse = m + std::log(e0 + e1);
        const std::size_t t = target[i];
        const double wt = class_weights[t];
        total += wt * (lse - (t ? l1 : l0));
        const double p0 = e0 / (e0 + e1);
        const double p1 = e1 / (e0 + e1);
        r.grad.data[2 * i] = wt * (p0 - (t == 0 ? 1.0 : 0.0)) * inv_n;
        r.grad.data[2 * i + 1] = wt * (p1 - (t == 1 ? 1.0 : 0.0)) * inv_n;
    }
    r.loss = total * inv_n;
    return r;
}

}  // namespace lvseg::fcn
