#include "lvseg/fcn/train.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace lvseg::fcn {

ClassWeightMode parse_class_weight_mode(const std::string& text) {
    if (text == "off") return ClassWeightMode::Off;
    if (text == "inverse-frequency") return ClassWeightMode::InverseFrequency;
    if (text == "fixed") return ClassWeightMode::Fixed;
    throw Error("unknown class weight mode '" + text + "' (expected off, inverse-frequency or fixed)");
}

const char* to_string(ClassWeightMode mode) {
    switch (mode) {
        case ClassWeightMode::Off: return "off";
        case ClassWeightMode::InverseFrequency: return "inverse-frequency";
        case ClassWeightMode::Fixed: return "fixed";
    }
    return "?";
}

Sample make_sample(const Image2D& crop, const BinaryMask& mask, std::size_t input_size) {
    if (!crop.same_shape(mask)) throw Error("sample image and mask differ in shape");
    return {to_tensor(resize_bilinear(crop, input_size, input_size)), resize_nearest(mask, input_size, input_size)};
}

std::vector<Sample> build_samples(const std::vector<ImageSequence>& sequences, std::size_t input_size,
                                  std::size_t frames_per_sequence) {
    std::vector<Sample> out;
    for (const auto& seq : sequences) {
        if (!seq.has_ground_truth()) continue;
        const std::size_t n = seq.frames.size();
        const std::size_t k = frames_per_sequence == 0 ? n : std::min(frames_per_sequence, n);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t f = i * n / k;
            if (seq.ground_truth[f]) out.push_back(make_sample(seq.frames[f], *seq.ground_truth[f], input_size));
        }
    }
    return out;
}

std::array<double, 2> class_weights(const std::vector<Sample>& samples, ClassWeightMode mode,
                                    const std::array<double, 2>& fixed) {
    switch (mode) {
        case ClassWeightMode::Off: return {1.0, 1.0};
        case ClassWeightMode::Fixed:
            if (!(fixed[0] > 0.0) || !(fixed[1] > 0.0)) throw Error("fixed class weights must be positive");
            return fixed;
        case ClassWeightMode::InverseFrequency: {
            std::size_t total = 0, lv = 0;
            for (const auto& s : samples) {
                total += s.target.size();
                lv += s.target.count();
            }
            if (lv == 0 || lv == total) throw Error("inverse-frequency weights need both classes in the training set");
            const double n = static_cast<double>(total);
            return {n / (2.0 * static_cast<double>(total - lv)), n / (2.0 * static_cast<double>(lv))};
        }
    }
    return {1.0, 1.0};
}

namespace {

Sample flipped(const Sample& s) {
    Sample f{Tensor(s.input.h, s.input.w, 1), BinaryMask(s.target.height(), s.target.width())};
    const std::size_t w = s.input.w;
    for (std::size_t y = 0; y < s.input.h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            f.input.at(y, x, 0) = s.input.at(y, w - 1 - x, 0);
            f.target.at(y, x) = s.target.at(y, w - 1 - x);
        }
    }
    return f;
}

}  // namespace

TrainResult train(const std::vector<Sample>& samples, const TrainConfig& config, const Architecture& arch,
                  const EpochCallback& on_epoch) {
    if (samples.empty()) throw Error("train: empty dataset");
    if (config.batch == 0) throw Error("train: batch size must be positive");
    if (!(config.lr > 0.0)) throw Error("train: learning rate must be positive");
    if (config.momentum < 0.0 || config.momentum >= 1.0) throw Error("train: momentum must be in [0, 1)");
    for (const auto& s : samples) {
        if (s.input.h != arch.input_size || s.input.w != arch.input_size || s.input.d != 1 ||
            s.target.height() != arch.input_size || s.target.width() != arch.input_size) {
            throw Error("train: sample does not match the network input size");
        }
    }

    TrainResult result;
    result.params = init_params(arch, config.seed);
    result.class_weights = class_weights(samples, config.class_weight_mode, config.fixed_weights);
    auto& params = result.params;

    std::vector<Kernel> velocity;
    for (const auto& k : params.kernels) {
        Kernel v = k;
        std::fill(v.weights.begin(), v.weights.end(), 0.0);
        std::fill(v.bias.begin(), v.bias.end(), 0.0);
        velocity.push_back(std::move(v));
    }

    std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
    std::vector<std::size_t> order(samples.size());
    ForwardCache cache;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            const std::size_t end = std::min(order.size(), start + config.batch);
            std::vector<KernelGrad> sum;
            for (std::size_t b = start; b < end; ++b) {
                const Sample* s = &samples[order[b]];
                Sample flip;
                if (config.hflip && (rng() & 1U)) {
                    flip = flipped(*s);
                    s = &flip;
                }
                const Tensor& logits = forward_logits(params, s->input, cache);
                auto loss = weighted_cross_entropy(logits, s->target, result.class_weights);
                epoch_loss += loss.loss;
                auto grads = backward(params, s->input, cache, loss.grad);
                if (sum.empty()) {
                    sum = std::move(grads);
                    continue;
                }
                for (std::size_t l = 0; l < sum.size(); ++l) {
                    for (std::size_t i = 0; i < sum[l].weights.size(); ++i) sum[l].weights[i] += grads[l].weights[i];
                    for (std::size_t i = 0; i < sum[l].bias.size(); ++i) sum[l].bias[i] += grads[l].bias[i];
                }
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t l = 0; l < params.kernels.size(); ++l) {
                auto& k = params.kernels[l];
                auto& v = velocity[l];
                for (std::size_t i = 0; i < k.weights.size(); ++i) {
                    v.weights[i] = config.momentum * v.weights[i] - config.lr * scale * sum[l].weights[i];
                    k.weights[i] += v.weights[i];
                }
                for (std::size_t i = 0; i < k.bias.size(); ++i) {
                    v.bias[i] = config.momentum * v.bias[i] - config.lr * scale * sum[l].bias[i];
                    k.bias[i] += v.bias[i];
                }
            }
            ++result.iterations;
        }
        const double mean = epoch_loss / static_cast<double>(samples.size());
        result.loss_curve.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    return result;
}

ProbabilityMap infer_frame(const NetworkParams& params, const Image2D& crop) {
    check_fingerprint(params, params.architecture);
    const std::size_t n = params.architecture.input_size;
    return forward(params, to_tensor(resize_bilinear(crop, n, n)));
}

std::vector<ProbabilityMap> infer(const NetworkParams& params, const ImageSequence& roi_sequence) {
    std::vector<ProbabilityMap> out;
    out.reserve(roi_sequence.frames.size());
    for (const auto& f : roi_sequence.frames) out.push_back(infer_frame(params, f));
    return out;
}

}  // namespace lvseg::fcn
