#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "lvseg/fcn/network.hpp"
#include "lvseg/imgcore.hpp"

namespace lvseg::fcn {

enum class ClassWeightMode { Off, InverseFrequency, Fixed };

ClassWeightMode parse_class_weight_mode(const std::string& text);
const char* to_string(ClassWeightMode mode);

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t epochs = 30;
    std::size_t batch = 8;
    std::uint64_t seed = 1;
    ClassWeightMode class_weight_mode = ClassWeightMode::InverseFrequency;
    std::array<double, 2> fixed_weights{1.0, 1.0};  // background, LV
    bool hflip = false;
};

/// One network-sized training pair.
struct Sample {
    Tensor input;
    BinaryMask target;
};

/// Bilinear resize of the crop, nearest-neighbour resize of the mask.
Sample make_sample(const Image2D& crop, const BinaryMask& mask, std::size_t input_size);

/// Samples from every sequence that has ground truth. With frames_per_sequence
/// = k > 0, frames floor(i * n / k) for i < k are used; 0 takes all frames.
std::vector<Sample> build_samples(const std::vector<ImageSequence>& sequences, std::size_t input_size,
                                  std::size_t frames_per_sequence = 0);

/// (w_background, w_lv). Inverse frequency uses the pooled pixel counts:
/// w_c = N / (2 N_c).
std::array<double, 2> class_weights(const std::vector<Sample>& samples, ClassWeightMode mode,
                                    const std::array<double, 2>& fixed = {1.0, 1.0});

struct TrainResult {
    NetworkParams params;
    std::vector<double> loss_curve;  // mean sample loss per epoch
    std::array<double, 2> class_weights{1.0, 1.0};
    std::size_t iterations = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Minibatch SGD with momentum (v <- mu v - lr g; w <- w + v) from He/bilinear
/// initialisation. The sample order of every epoch comes from a generator
/// seeded with `seed`, so results are bit-reproducible.
TrainResult train(const std::vector<Sample>& samples, const TrainConfig& config,
                  const Architecture& arch = mini_fcn8s(), const EpochCallback& on_epoch = {});

/// Resizes one cropped frame to the network input and returns the LV
/// probability at network resolution.
ProbabilityMap infer_frame(const NetworkParams& params, const Image2D& crop);

/// One probability map per frame of an (already cropped) sequence.
std::vector<ProbabilityMap> infer(const NetworkParams& params, const ImageSequence& roi_sequence);

}  // namespace lvseg::fcn
