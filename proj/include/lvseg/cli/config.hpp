#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lvseg/dataset.hpp"
#include "lvseg/fcn/train.hpp"
#include "lvseg/metrics.hpp"
#include "lvseg/postproc.hpp"
#include "lvseg/roi.hpp"

namespace lvseg::cli {

struct SynthConfig {
    std::size_t sequences = 200;
    dataset::PhantomSpec phantom;  // seed is taken from PipelineConfig::seed
};

struct OverlayConfig {
    bool enabled = true;
    std::size_t sequences = 3;  // first N evaluated sequences, every frame
};

struct Paths {
    std::string dataset;
    std::string out;
    std::string model;
};

/// Every stage knob. JSON sections: seed, paths, synth, preprocess, split, roi,
/// fcn, postproc, metrics, overlays. Missing keys keep these defaults.
struct PipelineConfig {
    std::uint64_t seed = 1;
    Paths paths;
    SynthConfig synth;
    double clip_fraction = 0.01;
    ClipScope clip_scope = ClipScope::Frame;
    double train_fraction = 0.8;
    bool roi_enabled = true;
    roi::RoiParams roi;
    std::size_t input_size = 64;
    fcn::TrainConfig train;              // train.seed is overwritten by `seed`
    std::size_t frames_per_sequence = 0; // 0 = every frame
    postproc::PostprocessParams post;
    double raw_threshold = 0.5;
    metrics::Averaging averaging = metrics::Averaging::Micro;
    bool metrics_in_roi = false;  // count pixels inside each run's box only
    OverlayConfig overlays;

    /// Throws on out-of-range values.
    void validate() const;
    fcn::TrainConfig train_config() const;
};

/// Parses a JSON config. Unknown keys anywhere are rejected.
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every field spelled out.
std::string config_to_json(const PipelineConfig& config);

}  // namespace lvseg::cli
