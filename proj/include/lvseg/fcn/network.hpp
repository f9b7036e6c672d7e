#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvseg/fcn/layers.hpp"
#include "lvseg/fcn/tensor.hpp"
#include "lvseg/imgcore.hpp"

namespace lvseg::fcn {

enum class LayerKind : std::uint8_t { Conv = 0, Relu = 1, MaxPool = 2, UpConv = 3, Add = 4, Softmax = 5 };

const char* to_string(LayerKind kind);

inline constexpr int kNetworkInput = -1;

/// One node of the network graph. `input` names the producing layer (or
/// kNetworkInput); `skip` is the second operand of an Add.
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::size_t kernel = 0;    // conv/upconv kernel size, pool window
    std::size_t stride = 1;    // conv/pool stride, upconv factor
    std::size_t channels_in = 0;
    std::size_t channels_out = 0;
    int input = kNetworkInput;
    int skip = kNetworkInput;

    bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::UpConv; }
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using Fingerprint = std::array<std::uint8_t, 32>;

struct Architecture {
    std::size_t input_size = 64;
    std::vector<LayerSpec> layers;

    /// SHA-256 of a canonical text rendering of the layer table.
    Fingerprint fingerprint() const;
    /// Throws unless every layer's shape composes with its producers.
    void validate() const;
    /// Output shape (h, w, d) of every layer for the configured input.
    std::vector<std::array<std::size_t, 3>> shapes() const;
};

/// Mini FCN-8s: three conv-conv-pool stages (/2, /4, /8), a conv head at /8,
/// 1x1 score layers at every stage, and two 2x upsample-and-add fusions before
/// the final 2x upsample and softmax.
Architecture mini_fcn8s(std::size_t input_size = 64);

struct NetworkParams {
    Architecture architecture;
    Fingerprint fingerprint{};
    std::vector<Kernel> kernels;  // one per layer, empty for parameter-free layers

    friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
        return a.fingerprint == b.fingerprint && a.kernels == b.kernels;
    }
};

/// He-normal conv weights, bilinear upconv weights, zero biases.
NetworkParams init_params(const Architecture& arch, std::uint64_t seed);

/// All-zero weights and biases.
NetworkParams zero_params(const Architecture& arch);

struct ForwardCache {
    std::vector<Tensor> outputs;
    std::vector<std::vector<std::size_t>> argmax;
};

/// Runs every layer; cache.outputs[i] holds layer i's output. Returns the
/// output of the last layer before the softmax (the logits).
const Tensor& forward_logits(const NetworkParams& params, const Tensor& input, ForwardCache& cache);

/// Softmax probability of the LV channel for a single-channel input of the
/// configured size.
ProbabilityMap forward(const NetworkParams& params, const Tensor& input);

/// Gradient of the loss w.r.t. every kernel, given dL/dlogits.
std::vector<KernelGrad> backward(const NetworkParams& params, const Tensor& input, const ForwardCache& cache,
                                 const Tensor& grad_logits);

/// Throws when params were produced for a different architecture.
void check_fingerprint(const NetworkParams& params, const Architecture& arch);

/// Weight file: "FCNW", u16 version, 32-byte fingerprint, u32 layer count, then
/// per layer {u8 kind, u32 kernel, u32 in, u32 out, u64 nweights, u64 nbias}
/// followed by little-endian f64 weights and biases.
inline constexpr std::uint16_t kWeightFormatVersion = 1;
void save_params(const std::filesystem::path& path, const NetworkParams& params);
std::vector<std::uint8_t> serialize_params(const NetworkParams& params);
/// Loads a weight file and verifies it matches `arch`.
NetworkParams load_params(const std::filesystem::path& path, const Architecture& arch);
NetworkParams deserialize_params(const std::vector<std::uint8_t>& bytes, const Architecture& arch);

std::string to_hex(const Fingerprint& fp);

/// Single-channel tensor from an image.
Tensor to_tensor(const Grid<double>& img);

}  // namespace lvseg::fcn
