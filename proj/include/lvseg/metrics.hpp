#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvseg/imgcore.hpp"

namespace lvseg::metrics {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

double accuracy(const ConfusionCounts& c);
/// 2TP / (2TP + FP + FN); 1 when both masks are empty.
double dice(const ConfusionCounts& c);
/// TP / (TP + FN); empty when the ground truth has no foreground.
std::optional<double> tpr(const ConfusionCounts& c);

/// "98.39" style: value * 100 with two decimals.
std::string percent(double fraction);

struct FrameRow {
    std::string sequence_id;
    std::size_t frame = 0;
    ConfusionCounts counts;
    double accuracy = 0.0;
    double dice = 0.0;
    std::optional<double> sensitivity;
    bool empty_empty = false;
};

struct Scores {
    double accuracy = 0.0;
    double dice = 0.0;
    std::optional<double> sensitivity;
};

struct MetricReport {
    std::string label;
    std::vector<FrameRow> frames;
    ConfusionCounts total;
    Scores micro;                 // formulas on summed counts
    Scores macro;                 // mean of per-frame values; undefined TPR skipped
    std::size_t empty_empty_frames = 0;
};

/// One evaluated frame: prediction and ground truth at the same resolution.
struct FramePair {
    std::string sequence_id;
    std::size_t frame = 0;
    BinaryMask pred;
    BinaryMask gt;
};

/// Counts of one evaluated frame.
struct FrameCounts {
    std::string sequence_id;
    std::size_t frame = 0;
    ConfusionCounts counts;
};

MetricReport summarize(const std::string& label, const std::vector<FrameCounts>& frames);
MetricReport evaluate(const std::string& label, const std::vector<FramePair>& frames);

struct Run {
    std::string label;
    std::vector<FrameCounts> frames;
};

/// One report per run, in the given order. Every run must cover the same
/// (sequence, frame) keys in the same order.
std::vector<MetricReport> ablation_report(const std::vector<Run>& runs);

/// Row labels of the four-configuration ablation table, in display order.
const std::vector<std::string>& ablation_labels();

enum class Averaging { Micro, Macro };

Averaging parse_averaging(const std::string& text);
const char* to_string(Averaging mode);

/// config,frames,accuracy,dice,sensitivity in percent.
std::string report_csv(const std::vector<MetricReport>& reports, Averaging mode = Averaging::Micro);
/// The same rows plus both averages, summed counts and per-frame arrays.
std::string report_json(const std::vector<MetricReport>& reports, Averaging mode = Averaging::Micro);
/// Aligned plain-text table for terminals.
std::string report_table(const std::vector<MetricReport>& reports, Averaging mode = Averaging::Micro);

/// report.csv and report.json in `dir`.
void write_report(const std::filesystem::path& dir, const std::vector<MetricReport>& reports,
                  Averaging mode = Averaging::Micro);

}  // namespace lvseg::metrics
