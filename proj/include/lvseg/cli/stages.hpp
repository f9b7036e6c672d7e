#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvseg/cli/config.hpp"
#include "lvseg/dataset.hpp"
#include "lvseg/fcn/train.hpp"
#include "lvseg/metrics.hpp"
#include "lvseg/roi.hpp"

namespace lvseg::cli {

namespace fs = std::filesystem;

/// A dataset argument may name a directory (its manifest.json is used) or a
/// manifest file such as train.json.
fs::path manifest_path(const fs::path& dataset);

/// Phantom corpus: `sequences` members of the configured phantom, seeded by
/// config.seed, written as raw 16-bit frames.
dataset::Dataset run_synth(const PipelineConfig& config, const fs::path& out_dir);

/// Per-frame outlier clipping and [0,1] scaling. Writes manifest.json (frames
/// stored x65535) and, for two or more sequences, train.json / test.json from
/// a seeded sequence-level split.
dataset::Dataset run_preprocess(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir);

/// One box per sequence. Writes the cropped dataset (manifest.json plus any
/// train.json / test.json subsets found beside the input) and rois.json. With
/// roi.enabled = false every box is the largest centred square.
dataset::Dataset run_roi(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir);

/// Trains on every annotated sequence of a cropped dataset. Writes model.fcnw
/// and train.json (loss curve, class weights).
fcn::TrainResult run_train(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir);
fcn::TrainResult run_train(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir,
                           const fcn::EpochCallback& on_epoch);

/// Probability maps for a cropped dataset whose directory holds rois.json.
/// Writes <seq>/prob_###.pgm (16-bit, x65535) and probs.json.
void run_infer(const PipelineConfig& config, const fs::path& model, const fs::path& dataset, const fs::path& out_dir);

/// Frame-resolution masks from an infer directory: out_dir/post (Otsu and
/// roundness selection) and out_dir/raw (fixed threshold), each with run.json.
void run_postprocess(const PipelineConfig& config, const fs::path& infer_dir, const fs::path& out_dir);

/// Ablation report of the given run directories against the ground truth of
/// `dataset`. Writes report.csv and report.json.
std::vector<metrics::MetricReport> run_eval(const PipelineConfig& config, const fs::path& dataset,
                                            const std::vector<fs::path>& runs, const fs::path& out_dir);

/// Overlay images for the first config.overlays.sequences sequences of a run.
/// `frames` is the preprocessed full-frame dataset, `ground_truth` the dataset
/// holding masks.
void run_overlays(const PipelineConfig& config, const fs::path& frames, const fs::path& infer_dir,
                  const fs::path& run_dir, const fs::path& ground_truth, const fs::path& out_dir);

/// preprocess -> roi -> [train on the train split] -> infer -> postprocess ->
/// eval -> overlays under out_dir. Without a model the network is trained and
/// evaluation uses the test split; with one, every sequence is evaluated.
std::vector<metrics::MetricReport> run_pipeline(const PipelineConfig& config, const fs::path& dataset,
                                                const fs::path& out_dir, const std::optional<fs::path>& model);

/// Run-directory record written by postprocess.
struct RunSequence {
    std::string sequence_id;
    roi::RoiBox box;
    std::size_t frame_height = 0;
    std::size_t frame_width = 0;
    std::vector<std::string> mask_paths;  // relative to the run directory
};

struct RunRecord {
    std::string label;
    std::vector<RunSequence> sequences;
};

RunRecord read_run(const fs::path& run_dir);

}  // namespace lvseg::cli
