#include "lvseg/cli/stages.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lvseg/cli/overlay.hpp"
#include "lvseg/cli/parallel.hpp"
#include "lvseg/pgm.hpp"
#include "lvseg/postproc.hpp"

namespace lvseg::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kUnitScale = 1.0 / 65535.0;

template <typename F>
auto staged(const char* stage, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw Error(std::string(stage) + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

void write_json(const fs::path& path, const ordered_json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

template <typename T>
T field(const json& obj, const char* key, const fs::path& file) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(file.string() + ": missing or malformed '" + key + "'");
    }
}

ordered_json box_json(const roi::RoiBox& b) { return {{"top", b.top}, {"left", b.left}, {"side", b.side}}; }

roi::RoiBox box_from(const json& j, const fs::path& file) {
    const json& b = j.at("box");
    return {field<std::size_t>(b, "top", file), field<std::size_t>(b, "left", file), field<std::size_t>(b, "side", file)};
}

std::string numbered(const char* prefix, std::size_t k) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s_%03zu.pgm", prefix, k);
    return buf;
}

dataset::Manifest subset(const dataset::Manifest& m, const std::set<std::string>& ids) {
    dataset::Manifest out = m;
    out.sequences.clear();
    for (const auto& e : m.sequences) {
        if (ids.count(e.sequence_id)) out.sequences.push_back(e);
    }
    return out;
}

// Per-sequence geometry shared by rois.json and probs.json.
struct Placement {
    std::string sequence_id;
    std::size_t frame_height = 0;
    std::size_t frame_width = 0;
    roi::RoiBox box;
    std::vector<std::string> paths;
};

struct ProbIndex {
    double scale = kUnitScale;
    std::size_t input_size = 0;
    std::string mode;
    std::vector<Placement> sequences;
};

ProbIndex read_probs(const fs::path& infer_dir) {
    const fs::path file = infer_dir / "probs.json";
    const json doc = read_json(file);
    ProbIndex idx;
    idx.scale = field<double>(doc, "scale", file);
    idx.input_size = field<std::size_t>(doc, "inputSize", file);
    idx.mode = field<std::string>(doc, "mode", file);
    for (const auto& s : doc.at("sequences")) {
        idx.sequences.push_back({field<std::string>(s, "sequenceId", file), field<std::size_t>(s, "frameHeight", file),
                                 field<std::size_t>(s, "frameWidth", file), box_from(s, file),
                                 field<std::vector<std::string>>(s, "probPaths", file)});
    }
    return idx;
}

std::string run_label(const std::string& mode, bool post) {
    std::string label = mode == "images" ? "FCN on images" : "FCN on ROI";
    return post ? label + " + post-process" : label;
}

}  // namespace

fs::path manifest_path(const fs::path& dataset) {
    if (dataset.empty()) throw Error("no dataset given");
    return fs::is_directory(dataset) ? dataset / "manifest.json" : dataset;
}

dataset::Dataset run_synth(const PipelineConfig& config, const fs::path& out_dir) {
    return staged("synth", [&] {
        config.validate();
        const std::size_t n = config.synth.sequences;
        std::vector<dataset::SequenceEntry> entries(n);
        parallel_for(n, [&](std::size_t i) {
            const auto spec = dataset::corpus_member(config.synth.phantom, config.seed, i);
            const auto seq = dataset::generate_phantom(spec, dataset::corpus_sequence_id(i));
            entries[i] = dataset::write_sequence(out_dir, seq, 1.0, seq.sequence_id);
        });
        dataset::Manifest m;
        m.sequences = std::move(entries);
        dataset::save_manifest(out_dir / "manifest.json", m);
        return dataset::Dataset{out_dir, m};
    });
}

dataset::Dataset run_preprocess(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir) {
    return staged("preprocess", [&] {
        const auto ds = dataset::load_manifest(manifest_path(dataset));
        std::vector<dataset::SequenceEntry> entries(ds.size());
        parallel_for(ds.size(), [&](std::size_t i) {
            const auto seq = preprocess(ds.load(i), config.clip_fraction, config.clip_scope);
            entries[i] = dataset::write_sequence(out_dir, seq, kUnitScale, ds.manifest.sequences[i].patient_id);
        });
        dataset::Manifest m;
        m.intensity_scale = kUnitScale;
        m.sequences = std::move(entries);
        dataset::save_manifest(out_dir / "manifest.json", m);
        if (m.sequences.size() >= 2) {
            const auto [train, test] = dataset::split(m, config.train_fraction, config.seed);
            dataset::save_manifest(out_dir / "train.json", train);
            dataset::save_manifest(out_dir / "test.json", test);
        }
        return dataset::Dataset{out_dir, m};
    });
}

dataset::Dataset run_roi(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir) {
    return staged("roi", [&] {
        const fs::path in = manifest_path(dataset);
        const auto ds = dataset::load_manifest(in);
        struct Out {
            roi::RoiBox box;
            bool fallback = false;
            std::string warning;
            std::size_t iterations = 0;
            std::size_t height = 0, width = 0;
            dataset::SequenceEntry entry;
        };
        std::vector<Out> outs(ds.size());
        parallel_for(ds.size(), [&](std::size_t i) {
            const auto seq = ds.load(i);
            Out& o = outs[i];
            o.height = seq.height();
            o.width = seq.width();
            ImageSequence cropped;
            if (config.roi_enabled) {
                auto r = roi::extract_roi(seq, config.roi);
                o.box = r.box;
                o.fallback = r.fallback;
                o.warning = r.warning;
                o.iterations = r.iterations;
                cropped = std::move(r.cropped);
            } else {
                o.box = roi::full_frame_box(seq.height(), seq.width());
                cropped = roi::crop_sequence(seq, o.box);
            }
            o.entry = dataset::write_sequence(out_dir, cropped, ds.manifest.intensity_scale,
                                              ds.manifest.sequences[i].patient_id);
        });

        dataset::Manifest m;
        m.intensity_scale = ds.manifest.intensity_scale;
        ordered_json rois;
        rois["mode"] = config.roi_enabled ? "roi" : "images";
        rois["sequences"] = ordered_json::array();
        for (auto& o : outs) {
            rois["sequences"].push_back({{"sequenceId", o.entry.sequence_id},
                                         {"frameHeight", o.height},
                                         {"frameWidth", o.width},
                                         {"box", box_json(o.box)},
                                         {"fallback", o.fallback},
                                         {"warning", o.warning},
                                         {"iterations", o.iterations}});
            m.sequences.push_back(std::move(o.entry));
        }
        dataset::save_manifest(out_dir / "manifest.json", m);
        write_json(out_dir / "rois.json", rois);

        for (const char* name : {"train.json", "test.json"}) {
            const fs::path sub = in.parent_path() / name;
            if (!fs::exists(sub) || fs::equivalent(sub, in)) continue;
            std::set<std::string> ids;
            for (const auto& e : dataset::load_manifest(sub).manifest.sequences) ids.insert(e.sequence_id);
            dataset::save_manifest(out_dir / name, subset(m, ids));
        }
        return dataset::Dataset{out_dir, m};
    });
}

fcn::TrainResult run_train(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir,
                           const fcn::EpochCallback& on_epoch) {
    return staged("train", [&] {
        const auto ds = dataset::load_manifest(manifest_path(dataset));
        std::vector<std::vector<fcn::Sample>> per_sequence(ds.size());
        parallel_for(ds.size(), [&](std::size_t i) {
            per_sequence[i] = fcn::build_samples({ds.load(i)}, config.input_size, config.frames_per_sequence);
        });
        std::vector<fcn::Sample> samples;
        for (auto& v : per_sequence) {
            for (auto& s : v) samples.push_back(std::move(s));
        }
        auto result = fcn::train(samples, config.train_config(), fcn::mini_fcn8s(config.input_size), on_epoch);
        fcn::save_params(out_dir / "model.fcnw", result.params);
        ordered_json log;
        log["fingerprint"] = fcn::to_hex(result.params.fingerprint);
        log["samples"] = samples.size();
        log["iterations"] = result.iterations;
        log["classWeights"] = {result.class_weights[0], result.class_weights[1]};
        log["lossCurve"] = result.loss_curve;
        write_json(out_dir / "train.json", log);
        return result;
    });
}

fcn::TrainResult run_train(const PipelineConfig& config, const fs::path& dataset, const fs::path& out_dir) {
    return run_train(config, dataset, out_dir, {});
}

void run_infer(const PipelineConfig& config, const fs::path& model, const fs::path& dataset, const fs::path& out_dir) {
    staged("infer", [&] {
        const fs::path in = manifest_path(dataset);
        const auto ds = dataset::load_manifest(in);
        const fs::path rois_file = in.parent_path() / "rois.json";
        const json rois = read_json(rois_file);
        std::map<std::string, Placement> placement;
        for (const auto& s : rois.at("sequences")) {
            Placement p{field<std::string>(s, "sequenceId", rois_file), field<std::size_t>(s, "frameHeight", rois_file),
                        field<std::size_t>(s, "frameWidth", rois_file), box_from(s, rois_file), {}};
            placement[p.sequence_id] = p;
        }
        const auto params = fcn::load_params(model, fcn::mini_fcn8s(config.input_size));

        std::vector<Placement> outs(ds.size());
        parallel_for(ds.size(), [&](std::size_t i) {
            const auto seq = ds.load(i);
            auto it = placement.find(seq.sequence_id);
            if (it == placement.end()) throw Error("sequence '" + seq.sequence_id + "' missing from " + rois_file.string());
            Placement& p = outs[i];
            p = it->second;
            const auto maps = fcn::infer(params, seq);
            for (std::size_t k = 0; k < maps.size(); ++k) {
                const std::string rel = seq.sequence_id + "/" + numbered("prob", k);
                pgm::write_frame(out_dir / rel, maps[k], kUnitScale);
                p.paths.push_back(rel);
            }
        });

        ordered_json doc;
        doc["scale"] = kUnitScale;
        doc["inputSize"] = config.input_size;
        doc["mode"] = field<std::string>(rois, "mode", rois_file);
        doc["fingerprint"] = fcn::to_hex(params.fingerprint);
        doc["sequences"] = ordered_json::array();
        for (const auto& p : outs) {
            doc["sequences"].push_back({{"sequenceId", p.sequence_id},
                                        {"frameHeight", p.frame_height},
                                        {"frameWidth", p.frame_width},
                                        {"box", box_json(p.box)},
                                        {"probPaths", p.paths}});
        }
        write_json(out_dir / "probs.json", doc);
    });
}

void run_postprocess(const PipelineConfig& config, const fs::path& infer_dir, const fs::path& out_dir) {
    staged("postprocess", [&] {
        const auto idx = read_probs(infer_dir);
        struct FrameFlags {
            double threshold = 0.0;
            bool degenerate = false;
            bool empty = false;
            std::size_t components = 0;
        };
        std::vector<std::vector<FrameFlags>> flags(idx.sequences.size());
        std::vector<std::vector<std::string>> paths(idx.sequences.size());
        parallel_for(idx.sequences.size(), [&](std::size_t i) {
            const auto& s = idx.sequences[i];
            const postproc::Geometry g{s.box, s.frame_height, s.frame_width};
            for (std::size_t k = 0; k < s.paths.size(); ++k) {
                const auto p = pgm::read_frame(infer_dir / s.paths[k], idx.scale);
                const auto post = postproc::postprocess(p, g, config.post);
                const std::string rel = s.sequence_id + "/" + numbered("mask", k);
                pgm::write_mask(out_dir / "post" / rel, post.mask);
                pgm::write_mask(out_dir / "raw" / rel, postproc::raw_mask(p, g, config.raw_threshold));
                paths[i].push_back(rel);
                flags[i].push_back({post.threshold, post.degenerate, post.empty, post.components});
            }
        });
        for (const bool post : {true, false}) {
            ordered_json doc;
            doc["label"] = run_label(idx.mode, post);
            doc["sequences"] = ordered_json::array();
            for (std::size_t i = 0; i < idx.sequences.size(); ++i) {
                const auto& s = idx.sequences[i];
                ordered_json e = {{"sequenceId", s.sequence_id},
                                  {"frameHeight", s.frame_height},
                                  {"frameWidth", s.frame_width},
                                  {"box", box_json(s.box)},
                                  {"maskPaths", paths[i]}};
                if (post) {
                    e["frames"] = ordered_json::array();
                    for (const auto& f : flags[i]) {
                        e["frames"].push_back({{"threshold", f.threshold},
                                               {"degenerate", f.degenerate},
                                               {"empty", f.empty},
                                               {"components", f.components}});
                    }
                }
                doc["sequences"].push_back(std::move(e));
            }
            write_json(out_dir / (post ? "post" : "raw") / "run.json", doc);
        }
    });
}

RunRecord read_run(const fs::path& run_dir) {
    const fs::path file = run_dir / "run.json";
    const json doc = read_json(file);
    RunRecord r;
    r.label = field<std::string>(doc, "label", file);
    for (const auto& s : doc.at("sequences")) {
        r.sequences.push_back({field<std::string>(s, "sequenceId", file), box_from(s, file),
                               field<std::size_t>(s, "frameHeight", file), field<std::size_t>(s, "frameWidth", file),
                               field<std::vector<std::string>>(s, "maskPaths", file)});
    }
    return r;
}

std::vector<metrics::MetricReport> run_eval(const PipelineConfig& config, const fs::path& dataset,
                                            const std::vector<fs::path>& runs, const fs::path& out_dir) {
    return staged("eval", [&] {
        if (runs.empty()) throw Error("no runs given");
        const auto gt = dataset::load_manifest(manifest_path(dataset));
        std::vector<metrics::Run> counted;
        for (const auto& dir : runs) {
            const RunRecord rec = read_run(dir);
            std::vector<std::vector<metrics::FrameCounts>> per_seq(rec.sequences.size());
            parallel_for(rec.sequences.size(), [&](std::size_t i) {
                const auto& s = rec.sequences[i];
                const auto gi = gt.find(s.sequence_id);
                if (!gi) throw Error("sequence '" + s.sequence_id + "' of run '" + rec.label + "' not in the dataset");
                const auto& entry = gt.manifest.sequences[*gi];
                if (entry.mask_paths.size() != s.mask_paths.size()) {
                    throw Error("sequence '" + s.sequence_id + "' has no ground truth masks");
                }
                for (std::size_t k = 0; k < s.mask_paths.size(); ++k) {
                    if (!entry.mask_paths[k]) continue;
                    auto truth = pgm::read_mask(gt.root / *entry.mask_paths[k]);
                    auto pred = pgm::read_mask(dir / s.mask_paths[k]);
                    if (config.metrics_in_roi) {
                        const auto& b = s.box;
                        truth = crop(truth, b.top, b.left, b.side, b.side);
                        pred = crop(pred, b.top, b.left, b.side, b.side);
                    }
                    per_seq[i].push_back({s.sequence_id, k, metrics::confusion(pred, truth)});
                }
            });
            metrics::Run run{rec.label, {}};
            for (auto& v : per_seq) {
                for (auto& f : v) run.frames.push_back(std::move(f));
            }
            counted.push_back(std::move(run));
        }
        auto reports = metrics::ablation_report(counted);
        metrics::write_report(out_dir, reports, config.averaging);
        return reports;
    });
}

void run_overlays(const PipelineConfig& config, const fs::path& frames, const fs::path& infer_dir,
                  const fs::path& run_dir, const fs::path& ground_truth, const fs::path& out_dir) {
    staged("overlays", [&] {
        const auto fds = dataset::load_manifest(manifest_path(frames));
        const auto gds = dataset::load_manifest(manifest_path(ground_truth));
        const auto idx = read_probs(infer_dir);
        const auto run = read_run(run_dir);
        const std::size_t n = std::min(config.overlays.sequences, run.sequences.size());
        parallel_for(n, [&](std::size_t i) {
            const auto& s = run.sequences[i];
            const auto fi = fds.find(s.sequence_id);
            if (!fi) throw Error("sequence '" + s.sequence_id + "' not in the frame dataset");
            const auto seq = fds.load(*fi);
            const Placement* probs = nullptr;
            for (const auto& p : idx.sequences) {
                if (p.sequence_id == s.sequence_id) probs = &p;
            }
            if (!probs || probs->paths.size() != s.mask_paths.size()) {
                throw Error("sequence '" + s.sequence_id + "' has no matching probability maps");
            }
            const auto gi = gds.find(s.sequence_id);
            for (std::size_t k = 0; k < s.mask_paths.size(); ++k) {
                std::optional<BinaryMask> truth;
                if (gi) {
                    const auto& mp = gds.manifest.sequences[*gi].mask_paths;
                    if (k < mp.size() && mp[k]) truth = pgm::read_mask(gds.root / *mp[k]);
                }
                const auto overlay = render_overlays(seq.frames.at(k), s.box,
                                                     pgm::read_frame(infer_dir / probs->paths[k], idx.scale),
                                                     pgm::read_mask(run_dir / s.mask_paths[k]), truth);
                char stem[32];
                std::snprintf(stem, sizeof stem, "frame_%03zu", k);
                write_overlays(out_dir / s.sequence_id, stem, overlay);
            }
        });
    });
}

std::vector<metrics::MetricReport> run_pipeline(const PipelineConfig& config, const fs::path& dataset,
                                                const fs::path& out_dir, const std::optional<fs::path>& model) {
    PipelineConfig recorded = config;
    recorded.paths = {};
    write_text(out_dir / "config.json", config_to_json(recorded));

    run_preprocess(config, dataset, out_dir / "preprocessed");
    run_roi(config, out_dir / "preprocessed", out_dir / "roi");

    fs::path weights;
    fs::path eval_set;
    if (model) {
        weights = *model;
        eval_set = out_dir / "roi" / "manifest.json";
    } else {
        if (!fs::exists(out_dir / "roi" / "train.json")) {
            throw Error("pipeline: training needs at least two sequences for a train/test split");
        }
        run_train(config, out_dir / "roi" / "train.json", out_dir / "model");
        weights = out_dir / "model" / "model.fcnw";
        eval_set = out_dir / "roi" / "test.json";
    }
    run_infer(config, weights, eval_set, out_dir / "infer");
    run_postprocess(config, out_dir / "infer", out_dir / "runs");
    auto reports = run_eval(config, dataset, {out_dir / "runs" / "raw", out_dir / "runs" / "post"}, out_dir / "report");
    if (config.overlays.enabled) {
        run_overlays(config, out_dir / "preprocessed", out_dir / "infer", out_dir / "runs" / "post", dataset,
                     out_dir / "overlays");
    }
    return reports;
}

}  // namespace lvseg::cli
