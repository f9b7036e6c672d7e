#include "lvseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace lvseg::metrics {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.same_shape(gt)) throw Error("confusion: prediction and ground truth differ in shape");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw Error("accuracy: no pixels");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double dice(const ConfusionCounts& c) {
    const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
    if (den == 0) return 1.0;
    return static_cast<double>(2 * c.tp) / static_cast<double>(den);
}

std::optional<double> tpr(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

MetricReport summarize(const std::string& label, const std::vector<FrameCounts>& frames) {
    MetricReport r;
    r.label = label;
    double sum_acc = 0.0, sum_dice = 0.0, sum_tpr = 0.0;
    std::size_t n_tpr = 0;
    for (const auto& f : frames) {
        FrameRow row;
        row.sequence_id = f.sequence_id;
        row.frame = f.frame;
        row.counts = f.counts;
        row.accuracy = accuracy(row.counts);
        row.dice = dice(row.counts);
        row.sensitivity = tpr(row.counts);
        row.empty_empty = row.counts.tp + row.counts.fp + row.counts.fn == 0;
        r.total += row.counts;
        r.empty_empty_frames += row.empty_empty ? 1 : 0;
        sum_acc += row.accuracy;
        sum_dice += row.dice;
        if (row.sensitivity) {
            sum_tpr += *row.sensitivity;
            ++n_tpr;
        }
        r.frames.push_back(std::move(row));
    }
    if (!frames.empty()) {
        r.micro = {accuracy(r.total), dice(r.total), tpr(r.total)};
        const double n = static_cast<double>(frames.size());
        r.macro.accuracy = sum_acc / n;
        r.macro.dice = sum_dice / n;
        if (n_tpr > 0) r.macro.sensitivity = sum_tpr / static_cast<double>(n_tpr);
    }
    return r;
}

MetricReport evaluate(const std::string& label, const std::vector<FramePair>& frames) {
    std::vector<FrameCounts> counts;
    counts.reserve(frames.size());
    for (const auto& f : frames) counts.push_back({f.sequence_id, f.frame, confusion(f.pred, f.gt)});
    return summarize(label, counts);
}

std::vector<MetricReport> ablation_report(const std::vector<Run>& runs) {
    std::vector<MetricReport> out;
    for (const auto& run : runs) {
        const auto& ref = runs.front().frames;
        if (run.frames.size() != ref.size()) {
            throw Error("ablation_report: run '" + run.label + "' covers a different frame set");
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (run.frames[i].sequence_id != ref[i].sequence_id || run.frames[i].frame != ref[i].frame) {
                throw Error("ablation_report: run '" + run.label + "' covers a different frame set");
            }
        }
        out.push_back(summarize(run.label, run.frames));
    }
    return out;
}

const std::vector<std::string>& ablation_labels() {
    static const std::vector<std::string> labels{"FCN on images", "FCN on ROI", "FCN on images + post-process",
                                                 "FCN on ROI + post-process"};
    return labels;
}

Averaging parse_averaging(const std::string& text) {
    if (text == "micro") return Averaging::Micro;
    if (text == "macro") return Averaging::Macro;
    throw Error("unknown averaging mode '" + text + "' (expected micro or macro)");
}

const char* to_string(Averaging mode) { return mode == Averaging::Micro ? "micro" : "macro"; }

namespace {

const Scores& headline(const MetricReport& r, Averaging mode) { return mode == Averaging::Micro ? r.micro : r.macro; }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::string percent_or_na(const std::optional<double>& v) { return v ? percent(*v) : "nan"; }

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json scores_json(const Scores& s) {
    nlohmann::ordered_json j;
    j["accuracy"] = s.accuracy;
    j["dice"] = s.dice;
    j["sensitivity"] = optional_number(s.sensitivity);
    return j;
}

}  // namespace

std::string report_csv(const std::vector<MetricReport>& reports, Averaging mode) {
    std::ostringstream out;
    out << "config,frames,accuracy,dice,sensitivity\n";
    for (const auto& r : reports) {
        const auto& s = headline(r, mode);
        out << csv_field(r.label) << ',' << r.frames.size() << ',' << percent(s.accuracy) << ',' << percent(s.dice)
            << ',' << percent_or_na(s.sensitivity) << '\n';
    }
    return out.str();
}

std::string report_json(const std::vector<MetricReport>& reports, Averaging mode) {
    nlohmann::ordered_json doc;
    doc["averaging"] = to_string(mode);
    doc["emptyEmptyDice"] = 1.0;
    auto& rows = doc["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json row;
        row["config"] = r.label;
        row["frames"] = r.frames.size();
        const auto& s = headline(r, mode);
        row["accuracy"] = s.accuracy;
        row["dice"] = s.dice;
        row["sensitivity"] = optional_number(s.sensitivity);
        row["counts"] = {{"tp", r.total.tp}, {"fp", r.total.fp}, {"fn", r.total.fn}, {"tn", r.total.tn}};
        row["micro"] = scores_json(r.micro);
        row["macro"] = scores_json(r.macro);
        row["emptyEmptyFrames"] = r.empty_empty_frames;
        auto& pf = row["perFrame"];
        pf["sequenceId"] = nlohmann::ordered_json::array();
        pf["frame"] = nlohmann::ordered_json::array();
        pf["accuracy"] = nlohmann::ordered_json::array();
        pf["dice"] = nlohmann::ordered_json::array();
        pf["sensitivity"] = nlohmann::ordered_json::array();
        pf["emptyEmpty"] = nlohmann::ordered_json::array();
        for (const auto& f : r.frames) {
            pf["sequenceId"].push_back(f.sequence_id);
            pf["frame"].push_back(f.frame);
            pf["accuracy"].push_back(f.accuracy);
            pf["dice"].push_back(f.dice);
            pf["sensitivity"].push_back(optional_number(f.sensitivity));
            pf["emptyEmpty"].push_back(f.empty_empty);
        }
        rows.push_back(std::move(row));
    }
    return doc.dump(2) + "\n";
}

std::string report_table(const std::vector<MetricReport>& reports, Averaging mode) {
    std::size_t width = 6;
    for (const auto& r : reports) width = std::max(width, r.label.size());
    std::ostringstream out;
    auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
    out << pad("Method") << "  Accuracy  Dice    Sensitivity\n";
    for (const auto& r : reports) {
        const auto& s = headline(r, mode);
        char line[64];
        std::snprintf(line, sizeof line, "  %-8s  %-6s  %s\n", percent(s.accuracy).c_str(), percent(s.dice).c_str(),
                      percent_or_na(s.sensitivity).c_str());
        out << pad(r.label) << line;
    }
    return out.str();
}

void write_report(const std::filesystem::path& dir, const std::vector<MetricReport>& reports, Averaging mode) {
    std::filesystem::create_directories(dir);
    auto write = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write '" + p.string() + "'");
        out << text;
    };
    write(dir / "report.csv", report_csv(reports, mode));
    write(dir / "report.json", report_json(reports, mode));
}

}  // namespace lvseg::metrics
