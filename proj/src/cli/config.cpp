#include "lvseg/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace lvseg::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads optional keys of one JSON object and remembers which ones it saw so
// leftovers can be reported.
class Section {
public:
    Section(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw Error("config: '" + where_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& dst) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            dst = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw Error("config: bad type for '" + where_ + "." + key + "'");
        }
    }

    std::optional<Section> child(const char* key) {
        seen_.insert(key);
        if (!obj_.contains(key)) return std::nullopt;
        return Section(obj_.at(key), where_.empty() ? key : where_ + "." + key);
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items()) {
            if (!seen_.count(key)) {
                throw Error("config: unknown key '" + (where_.empty() ? key : where_ + "." + key) + "'");
            }
        }
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

roi::LevelMode parse_level_mode(const std::string& s) {
    if (s == "fraction-of-max") return roi::LevelMode::FractionOfMax;
    if (s == "percentile") return roi::LevelMode::Percentile;
    if (s == "mass") return roi::LevelMode::Mass;
    throw Error("config: unknown roi.levelMode '" + s + "'");
}

const char* level_mode_name(roi::LevelMode m) {
    switch (m) {
        case roi::LevelMode::FractionOfMax: return "fraction-of-max";
        case roi::LevelMode::Percentile: return "percentile";
        case roi::LevelMode::Mass: return "mass";
    }
    return "?";
}

postproc::DistanceSet parse_distance_set(const std::string& s) {
    if (s == "boundary") return postproc::DistanceSet::Boundary;
    if (s == "all-pixels") return postproc::DistanceSet::AllPixels;
    throw Error("config: unknown postproc.roundness '" + s + "'");
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error("config: " + what);
}

}  // namespace

void PipelineConfig::validate() const {
    require(synth.sequences >= 2, "synth.sequences must be at least 2");
    require(synth.phantom.frame_count >= 2, "synth.frames must be at least 2");
    require(synth.phantom.image_size >= 32, "synth.imageSize must be at least 32");
    require(synth.phantom.lv_radius_min > 0 && synth.phantom.lv_radius_min <= synth.phantom.lv_radius_max,
            "synth radius range must satisfy 0 < radiusMin <= radiusMax");
    require(synth.phantom.noise_sigma >= 0, "synth.noiseSigma must be non-negative");
    require(clip_fraction > 0 && clip_fraction < 1, "preprocess.clipFraction must be in (0, 1)");
    require(train_fraction > 0 && train_fraction < 1, "split.trainFraction must be in (0, 1)");
    require(roi.grid_size >= 2, "roi.gridSize must be at least 2");
    require(roi.sigma_frac > 0, "roi.sigmaFrac must be positive");
    require(roi.level > 0 && roi.level <= 1, "roi.level must be in (0, 1]");
    require(roi.margin_frac >= 0, "roi.marginFrac must be non-negative");
    require(roi.min_side >= 1, "roi.minSide must be positive");
    require(roi.tol > 0, "roi.tol must be positive");
    require(roi.max_iter >= 1, "roi.maxIter must be positive");
    require(input_size >= 8 && input_size % 8 == 0, "fcn.inputSize must be a positive multiple of 8");
    require(train.lr > 0, "fcn.lr must be positive");
    require(train.momentum >= 0 && train.momentum < 1, "fcn.momentum must be in [0, 1)");
    require(train.batch >= 1, "fcn.batch must be positive");
    require(train.fixed_weights[0] > 0 && train.fixed_weights[1] > 0, "fcn.classWeights must be positive");
    require(post.bins >= 2, "postproc.otsuBins must be at least 2");
    require(raw_threshold > 0 && raw_threshold <= 1, "postproc.rawThreshold must be in (0, 1]");
}

fcn::TrainConfig PipelineConfig::train_config() const {
    fcn::TrainConfig t = train;
    t.seed = seed;
    return t;
}

PipelineConfig config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("config: not valid JSON: ") + e.what());
    }
    PipelineConfig c;
    Section top(doc, "");
    top.read("seed", c.seed);
    if (auto s = top.child("paths")) {
        s->read("dataset", c.paths.dataset);
        s->read("out", c.paths.out);
        s->read("model", c.paths.model);
        s->finish();
    }
    if (auto s = top.child("synth")) {
        auto& p = c.synth.phantom;
        bool distractors = true;
        s->read("sequences", c.synth.sequences);
        s->read("frames", p.frame_count);
        s->read("imageSize", p.image_size);
        s->read("radiusMin", p.lv_radius_min);
        s->read("radiusMax", p.lv_radius_max);
        s->read("centerJitter", p.center_jitter);
        s->read("background", p.background);
        s->read("lvIntensity", p.lv_intensity);
        s->read("noiseSigma", p.noise_sigma);
        s->read("outlierCount", p.outlier_count);
        s->read("outlierMax", p.outlier_max);
        s->read("distractors", distractors);
        if (!distractors) p.distractors.clear();
        s->finish();
    }
    if (auto s = top.child("preprocess")) {
        std::string scope = c.clip_scope == ClipScope::Frame ? "frame" : "sequence";
        s->read("clipFraction", c.clip_fraction);
        s->read("clipScope", scope);
        if (scope == "frame") c.clip_scope = ClipScope::Frame;
        else if (scope == "sequence") c.clip_scope = ClipScope::Sequence;
        else throw Error("config: unknown preprocess.clipScope '" + scope + "'");
        s->finish();
    }
    if (auto s = top.child("split")) {
        s->read("trainFraction", c.train_fraction);
        s->finish();
    }
    if (auto s = top.child("roi")) {
        std::string level_mode = level_mode_name(c.roi.level_mode);
        s->read("enabled", c.roi_enabled);
        s->read("gridSize", c.roi.grid_size);
        s->read("sigmaFrac", c.roi.sigma_frac);
        s->read("level", c.roi.level);
        s->read("levelMode", level_mode);
        s->read("marginFrac", c.roi.margin_frac);
        s->read("minSide", c.roi.min_side);
        s->read("tol", c.roi.tol);
        s->read("maxIter", c.roi.max_iter);
        c.roi.level_mode = parse_level_mode(level_mode);
        s->finish();
    }
    if (auto s = top.child("fcn")) {
        std::string mode = fcn::to_string(c.train.class_weight_mode);
        std::vector<double> weights(c.train.fixed_weights.begin(), c.train.fixed_weights.end());
        s->read("inputSize", c.input_size);
        s->read("lr", c.train.lr);
        s->read("momentum", c.train.momentum);
        s->read("epochs", c.train.epochs);
        s->read("batch", c.train.batch);
        s->read("classWeightMode", mode);
        s->read("classWeights", weights);
        s->read("hflip", c.train.hflip);
        s->read("framesPerSequence", c.frames_per_sequence);
        c.train.class_weight_mode = fcn::parse_class_weight_mode(mode);
        require(weights.size() == 2, "fcn.classWeights needs two entries (background, LV)");
        c.train.fixed_weights = {weights[0], weights[1]};
        s->finish();
    }
    if (auto s = top.child("postproc")) {
        std::string set = c.post.select.distance_set == postproc::DistanceSet::Boundary ? "boundary" : "all-pixels";
        s->read("otsuBins", c.post.bins);
        s->read("roundness", set);
        s->read("minArea", c.post.select.min_area);
        s->read("rawThreshold", c.raw_threshold);
        c.post.select.distance_set = parse_distance_set(set);
        s->finish();
    }
    if (auto s = top.child("metrics")) {
        std::string avg = metrics::to_string(c.averaging);
        std::string region = c.metrics_in_roi ? "roi" : "frame";
        s->read("averaging", avg);
        s->read("region", region);
        c.averaging = metrics::parse_averaging(avg);
        if (region != "frame" && region != "roi") throw Error("config: unknown metrics.region '" + region + "'");
        c.metrics_in_roi = region == "roi";
        s->finish();
    }
    if (auto s = top.child("overlays")) {
        s->read("enabled", c.overlays.enabled);
        s->read("sequences", c.overlays.sequences);
        s->finish();
    }
    top.finish();
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return config_from_json(ss.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string config_to_json(const PipelineConfig& c) {
    const auto& p = c.synth.phantom;
    ordered_json j;
    j["seed"] = c.seed;
    j["paths"] = {{"dataset", c.paths.dataset}, {"out", c.paths.out}, {"model", c.paths.model}};
    j["synth"] = {{"sequences", c.synth.sequences}, {"frames", p.frame_count},   {"imageSize", p.image_size},
                  {"radiusMin", p.lv_radius_min},   {"radiusMax", p.lv_radius_max}, {"centerJitter", p.center_jitter},
                  {"background", p.background},     {"lvIntensity", p.lv_intensity}, {"noiseSigma", p.noise_sigma},
                  {"outlierCount", p.outlier_count}, {"outlierMax", p.outlier_max},
                  {"distractors", !p.distractors.empty()}};
    j["preprocess"] = {{"clipFraction", c.clip_fraction},
                       {"clipScope", c.clip_scope == ClipScope::Frame ? "frame" : "sequence"}};
    j["split"] = {{"trainFraction", c.train_fraction}};
    j["roi"] = {{"enabled", c.roi_enabled},       {"gridSize", c.roi.grid_size},
                {"sigmaFrac", c.roi.sigma_frac},  {"level", c.roi.level},
                {"levelMode", level_mode_name(c.roi.level_mode)}, {"marginFrac", c.roi.margin_frac},
                {"minSide", c.roi.min_side},      {"tol", c.roi.tol},
                {"maxIter", c.roi.max_iter}};
    j["fcn"] = {{"inputSize", c.input_size},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"epochs", c.train.epochs},
                {"batch", c.train.batch},
                {"classWeightMode", fcn::to_string(c.train.class_weight_mode)},
                {"classWeights", {c.train.fixed_weights[0], c.train.fixed_weights[1]}},
                {"hflip", c.train.hflip},
                {"framesPerSequence", c.frames_per_sequence}};
    j["postproc"] = {{"otsuBins", c.post.bins},
                     {"roundness", c.post.select.distance_set == postproc::DistanceSet::Boundary ? "boundary"
                                                                                                 : "all-pixels"},
                     {"minArea", c.post.select.min_area},
                     {"rawThreshold", c.raw_threshold}};
    j["metrics"] = {{"averaging", metrics::to_string(c.averaging)}, {"region", c.metrics_in_roi ? "roi" : "frame"}};
    j["overlays"] = {{"enabled", c.overlays.enabled}, {"sequences", c.overlays.sequences}};
    return j.dump(2) + "\n";
}

}  // namespace lvseg::cli
