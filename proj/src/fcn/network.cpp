#include "lvseg/fcn/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <openssl/evp.h>

namespace lvseg::fcn {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::UpConv: return "upconv";
        case LayerKind::Add: return "add";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

Fingerprint Architecture::fingerprint() const {
    std::ostringstream text;
    text << "input=" << input_size << ";";
    for (const auto& l : layers) {
        text << to_string(l.kind) << ',' << l.kernel << ',' << l.stride << ',' << l.channels_in << ','
             << l.channels_out << ',' << l.input << ',' << l.skip << ';';
    }
    const std::string s = text.str();
    Fingerprint fp{};
    unsigned int len = 0;
    if (EVP_Digest(s.data(), s.size(), fp.data(), &len, EVP_sha256(), nullptr) != 1 || len != fp.size()) {
        throw Error("fingerprint: SHA-256 failed");
    }
    return fp;
}

std::vector<std::array<std::size_t, 3>> Architecture::shapes() const {
    std::vector<std::array<std::size_t, 3>> out;
    out.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.input >= static_cast<int>(i) || l.input < kNetworkInput) {
            throw Error("layer " + std::to_string(i) + " reads from a later layer");
        }
        const std::array<std::size_t, 3> in =
            l.input == kNetworkInput ? std::array<std::size_t, 3>{input_size, input_size, 1} : out[static_cast<std::size_t>(l.input)];
        auto fail = [&](const std::string& why) { return Error("layer " + std::to_string(i) + " (" + to_string(l.kind) + "): " + why); };
        switch (l.kind) {
            case LayerKind::Conv:
                if (in[2] != l.channels_in) throw fail("channel mismatch");
                if (l.kernel % 2 == 0 || l.stride == 0) throw fail("needs an odd kernel and positive stride");
                out.push_back({(in[0] - 1) / l.stride + 1, (in[1] - 1) / l.stride + 1, l.channels_out});
                break;
            case LayerKind::Relu:
            case LayerKind::Softmax:
                out.push_back(in);
                break;
            case LayerKind::MaxPool:
                if (l.stride == 0 || in[0] % l.stride != 0 || in[1] % l.stride != 0) throw fail("input not divisible by stride");
                out.push_back({in[0] / l.stride, in[1] / l.stride, in[2]});
                break;
            case LayerKind::UpConv:
                if (in[2] != l.channels_in) throw fail("channel mismatch");
                if (l.kernel != upconv_kernel_size(l.stride)) throw fail("kernel does not match factor");
                out.push_back({in[0] * l.stride, in[1] * l.stride, l.channels_out});
                break;
            case LayerKind::Add: {
                if (l.skip < 0 || l.skip >= static_cast<int>(i)) throw fail("skip source must be an earlier layer");
                if (out[static_cast<std::size_t>(l.skip)] != in) throw fail("skip source shape differs");
                out.push_back(in);
                break;
            }
        }
    }
    return out;
}

void Architecture::validate() const {
    if (layers.empty()) throw Error("architecture has no layers");
    (void)shapes();
    if (layers.back().kind != LayerKind::Softmax) throw Error("architecture must end in softmax");
    if (shapes().back() != std::array<std::size_t, 3>{input_size, input_size, 2}) {
        throw Error("architecture output must be input-sized with 2 channels");
    }
}

Architecture mini_fcn8s(std::size_t input_size) {
    if (input_size == 0 || input_size % 8 != 0) throw Error("mini FCN-8s input size must be a positive multiple of 8");
    Architecture a;
    a.input_size = input_size;
    auto& L = a.layers;
    auto prev = [&] { return static_cast<int>(L.size()) - 1; };
    auto conv = [&](std::size_t k, std::size_t in, std::size_t out, int from) {
        L.push_back({LayerKind::Conv, k, 1, in, out, from, kNetworkInput});
    };
    auto relu = [&] { L.push_back({LayerKind::Relu, 0, 1, 0, 0, prev(), kNetworkInput}); };
    auto pool = [&] { L.push_back({LayerKind::MaxPool, 2, 2, 0, 0, prev(), kNetworkInput}); };

    conv(3, 1, 16, kNetworkInput); relu(); conv(3, 16, 16, prev()); relu(); pool();
    const int stage1 = prev();
    conv(3, 16, 32, prev()); relu(); conv(3, 32, 32, prev()); relu(); pool();
    const int stage2 = prev();
    conv(3, 32, 64, prev()); relu(); conv(3, 64, 64, prev()); relu(); pool();
    conv(3, 64, 64, prev()); relu();
    const int head = prev();

    conv(1, 64, 2, head);
    L.push_back({LayerKind::UpConv, upconv_kernel_size(2), 2, 2, 2, prev(), kNetworkInput});
    const int up3 = prev();
    conv(1, 32, 2, stage2);
    L.push_back({LayerKind::Add, 0, 1, 0, 0, up3, prev()});
    L.push_back({LayerKind::UpConv, upconv_kernel_size(2), 2, 2, 2, prev(), kNetworkInput});
    const int up2 = prev();
    conv(1, 16, 2, stage1);
    L.push_back({LayerKind::Add, 0, 1, 0, 0, up2, prev()});
    L.push_back({LayerKind::UpConv, upconv_kernel_size(2), 2, 2, 2, prev(), kNetworkInput});
    L.push_back({LayerKind::Softmax, 0, 1, 0, 0, prev(), kNetworkInput});
    a.validate();
    return a;
}

NetworkParams zero_params(const Architecture& arch) {
    arch.validate();
    NetworkParams p;
    p.architecture = arch;
    p.fingerprint = arch.fingerprint();
    for (const auto& l : arch.layers) {
        p.kernels.push_back(l.has_params() ? Kernel(l.kernel, l.channels_in, l.channels_out) : Kernel{});
    }
    return p;
}

NetworkParams init_params(const Architecture& arch, std::uint64_t seed) {
    NetworkParams p = zero_params(arch);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& l = arch.layers[i];
        if (l.kind == LayerKind::Conv) {
            const double fan_in = static_cast<double>(l.kernel * l.kernel * l.channels_in);
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (double& w : p.kernels[i].weights) w = dist(rng);
        } else if (l.kind == LayerKind::UpConv) {
            if (l.channels_in != l.channels_out) throw Error("bilinear init needs equal channel counts");
            p.kernels[i] = bilinear_kernel(l.stride, l.channels_in);
        }
    }
    return p;
}

void check_fingerprint(const NetworkParams& params, const Architecture& arch) {
    if (params.fingerprint != arch.fingerprint()) {
        throw Error("network parameters fingerprint " + to_hex(params.fingerprint) +
                    " does not match architecture " + to_hex(arch.fingerprint()));
    }
}

namespace {

int logits_layer(const Architecture& arch) {
    return arch.layers.back().kind == LayerKind::Softmax ? arch.layers.back().input
                                                        : static_cast<int>(arch.layers.size()) - 1;
}

void accumulate(Tensor& into, Tensor&& g) {
    if (into.data.empty()) {
        into = std::move(g);
        return;
    }
    for (std::size_t i = 0; i < into.size(); ++i) into.data[i] += g.data[i];
}

}  // namespace

const Tensor& forward_logits(const NetworkParams& params, const Tensor& input, ForwardCache& cache) {
    const auto& arch = params.architecture;
    if (input.h != arch.input_size || input.w != arch.input_size || input.d != 1) {
        throw Error("network input must be " + std::to_string(arch.input_size) + "x" + std::to_string(arch.input_size) +
                    "x1, got " + input.shape_string());
    }
    const int last = logits_layer(arch);
    cache.outputs.assign(static_cast<std::size_t>(last) + 1, Tensor{});
    cache.argmax.assign(static_cast<std::size_t>(last) + 1, {});
    for (int i = 0; i <= last; ++i) {
        const auto& l = arch.layers[static_cast<std::size_t>(i)];
        const auto& k = params.kernels[static_cast<std::size_t>(i)];
        const Tensor& in = l.input == kNetworkInput ? input : cache.outputs[static_cast<std::size_t>(l.input)];
        Tensor& out = cache.outputs[static_cast<std::size_t>(i)];
        switch (l.kind) {
            case LayerKind::Conv: out = conv2d_forward(in, k, l.stride, l.kernel / 2); break;
            case LayerKind::Relu: out = relu_forward(in); break;
            case LayerKind::MaxPool: {
                auto r = maxpool_forward(in, l.kernel, l.stride);
                out = std::move(r.out);
                cache.argmax[static_cast<std::size_t>(i)] = std::move(r.argmax);
                break;
            }
            case LayerKind::UpConv: out = upconv_forward(in, k, l.stride); break;
            case LayerKind::Add: out = add_forward(in, cache.outputs[static_cast<std::size_t>(l.skip)]); break;
            case LayerKind::Softmax: out = softmax_forward(in); break;
        }
    }
    return cache.outputs.back();
}

ProbabilityMap forward(const NetworkParams& params, const Tensor& input) {
    ForwardCache cache;
    const Tensor probs = softmax_forward(forward_logits(params, input, cache));
    ProbabilityMap map(probs.h, probs.w);
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = probs.data[2 * i + 1];
    return map;
}

std::vector<KernelGrad> backward(const NetworkParams& params, const Tensor& input, const ForwardCache& cache,
                                 const Tensor& grad_logits) {
    const auto& arch = params.architecture;
    const int last = logits_layer(arch);
    if (cache.outputs.size() != static_cast<std::size_t>(last) + 1) throw Error("backward: cache does not match network");
    if (!grad_logits.same_shape(cache.outputs.back())) throw Error("backward: gradient shape mismatch");

    std::vector<Tensor> grad_out(cache.outputs.size());
    grad_out.back() = grad_logits;
    std::vector<KernelGrad> grads(arch.layers.size());

    auto send = [&](int to, Tensor&& g) {
        if (to != kNetworkInput) accumulate(grad_out[static_cast<std::size_t>(to)], std::move(g));
    };
    for (int i = last; i >= 0; --i) {
        const auto idx = static_cast<std::size_t>(i);
        if (grad_out[idx].data.empty()) continue;
        const auto& l = arch.layers[idx];
        const Tensor& in = l.input == kNetworkInput ? input : cache.outputs[static_cast<std::size_t>(l.input)];
        switch (l.kind) {
            case LayerKind::Conv: {
                grads[idx] = conv2d_backward(in, params.kernels[idx], grad_out[idx], l.stride, l.kernel / 2);
                send(l.input, std::move(grads[idx].input));
                break;
            }
            case LayerKind::UpConv: {
                grads[idx] = upconv_backward(in, params.kernels[idx], grad_out[idx], l.stride);
                send(l.input, std::move(grads[idx].input));
                break;
            }
            case LayerKind::Relu: send(l.input, relu_backward(in, grad_out[idx])); break;
            case LayerKind::MaxPool: send(l.input, maxpool_backward(in, cache.argmax[idx], grad_out[idx])); break;
            case LayerKind::Add: {
                Tensor copy = grad_out[idx];
                send(l.skip, std::move(copy));
                send(l.input, std::move(grad_out[idx]));
                break;
            }
            case LayerKind::Softmax: throw Error("backward: softmax inside the network is not differentiated");
        }
        grad_out[idx] = Tensor{};
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    std::vector<std::uint8_t> bytes;

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error("weight file truncated");
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'F', 'C', 'N', 'W'};

}  // namespace

std::vector<std::uint8_t> serialize_params(const NetworkParams& params) {
    ByteWriter w;
    w.raw(kMagic, 4);
    w.u16(kWeightFormatVersion);
    w.raw(params.fingerprint.data(), params.fingerprint.size());
    w.u32(static_cast<std::uint32_t>(params.kernels.size()));
    for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        const auto& k = params.kernels[i];
        w.u8(static_cast<std::uint8_t>(params.architecture.layers.at(i).kind));
        w.u32(static_cast<std::uint32_t>(k.size));
        w.u32(static_cast<std::uint32_t>(k.in));
        w.u32(static_cast<std::uint32_t>(k.out));
        w.u64(k.weights.size());
        w.u64(k.bias.size());
        for (double v : k.weights) w.f64(v);
        for (double v : k.bias) w.f64(v);
    }
    return w.bytes;
}

void save_params(const std::filesystem::path& path, const NetworkParams& params) {
    const auto bytes = serialize_params(params);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write weight file '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NetworkParams deserialize_params(const std::vector<std::uint8_t>& bytes, const Architecture& arch) {
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw Error("not a weight file (bad magic)");
    const auto version = r.u16();
    if (version != kWeightFormatVersion) throw Error("unsupported weight file version " + std::to_string(version));
    NetworkParams p = zero_params(arch);
    Fingerprint fp{};
    r.raw(fp.data(), fp.size());
    if (fp != p.fingerprint) {
        throw Error("weight file fingerprint " + to_hex(fp) + " does not match architecture " + to_hex(p.fingerprint));
    }
    const auto count = r.u32();
    if (count != p.kernels.size()) throw Error("weight file layer count mismatch");
    for (std::size_t i = 0; i < count; ++i) {
        auto& k = p.kernels[i];
        const auto kind = r.u8();
        const auto size = r.u32(), in = r.u32(), out = r.u32();
        const auto nw = r.u64(), nb = r.u64();
        if (kind != static_cast<std::uint8_t>(arch.layers[i].kind) || size != k.size || in != k.in || out != k.out ||
            nw != k.weights.size() || nb != k.bias.size()) {
            throw Error("weight file layer " + std::to_string(i) + " shape mismatch");
        }
        for (double& v : k.weights) v = r.f64();
        for (double& v : k.bias) v = r.f64();
    }
    if (!r.at_end()) throw Error("weight file has trailing bytes");
    return p;
}

NetworkParams load_params(const std::filesystem::path& path, const Architecture& arch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open weight file '" + path.string() + "'");
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return deserialize_params(bytes, arch);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string to_hex(const Fingerprint& fp) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : fp) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

Tensor to_tensor(const Grid<double>& img) {
    Tensor t(img.height(), img.width(), 1);
    std::copy(img.pixels().begin(), img.pixels().end(), t.data.begin());
    return t;
}

}  // namespace lvseg::fcn
