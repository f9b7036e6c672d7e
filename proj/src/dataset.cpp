#include "lvseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lvseg/pgm.hpp"

namespace lvseg::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            throw Error(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw Error(where + ": missing '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(where + ": bad type for '" + key + "'");
    }
}

std::string frame_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03zu.pgm", k);
    return buf;
}

std::string mask_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mask_%03zu.pgm", k);
    return buf;
}

}  // namespace

Manifest manifest_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error("manifest root must be an object");
    reject_unknown_keys(doc, {"formatVersion", "intensityScale", "sequences"}, "manifest");

    Manifest m;
    m.format_version = required<int>(doc, "formatVersion", "manifest");
    if (m.format_version != kFormatVersion) {
        throw Error("manifest formatVersion " + std::to_string(m.format_version) + " is not supported");
    }
    if (doc.contains("intensityScale")) m.intensity_scale = required<double>(doc, "intensityScale", "manifest");
    if (!(m.intensity_scale > 0.0) || !std::isfinite(m.intensity_scale)) {
        throw Error("manifest intensityScale must be positive");
    }
    const auto& seqs = doc.at("sequences");
    if (!seqs.is_array()) throw Error("manifest 'sequences' must be an array");

    std::set<std::string> seen;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& s = seqs[i];
        const std::string where = "manifest sequence #" + std::to_string(i);
        if (!s.is_object()) throw Error(where + " must be an object");
        reject_unknown_keys(s, {"sequenceId", "patientId", "height", "width", "framePaths", "maskPaths"}, where);
        SequenceEntry e;
        e.sequence_id = required<std::string>(s, "sequenceId", where);
        if (s.contains("patientId")) e.patient_id = required<std::string>(s, "patientId", where);
        e.height = required<std::size_t>(s, "height", where);
        e.width = required<std::size_t>(s, "width", where);
        e.frame_paths = required<std::vector<std::string>>(s, "framePaths", where);
        if (e.sequence_id.empty()) throw Error(where + ": empty sequenceId");
        if (!seen.insert(e.sequence_id).second) throw Error(where + ": duplicate sequenceId '" + e.sequence_id + "'");
        if (e.frame_paths.empty()) throw Error(where + ": framePaths is empty");
        if (e.height == 0 || e.width == 0) throw Error(where + ": zero frame size");
        if (s.contains("maskPaths")) {
            const auto& mp = s.at("maskPaths");
            if (!mp.is_array()) throw Error(where + ": maskPaths must be an array");
            for (const auto& p : mp) {
                if (p.is_null()) {
                    e.mask_paths.emplace_back(std::nullopt);
                } else if (p.is_string()) {
                    e.mask_paths.emplace_back(p.get<std::string>());
                } else {
                    throw Error(where + ": maskPaths entries must be strings or null");
                }
            }
            if (e.mask_paths.size() != e.frame_paths.size()) {
                throw Error(where + ": maskPaths does not align with framePaths");
            }
        }
        m.sequences.push_back(std::move(e));
    }
    return m;
}

std::string manifest_to_json(const Manifest& manifest) {
    json doc;
    doc["formatVersion"] = manifest.format_version;
    doc["intensityScale"] = manifest.intensity_scale;
    doc["sequences"] = json::array();
    for (const auto& e : manifest.sequences) {
        json s;
        s["sequenceId"] = e.sequence_id;
        s["patientId"] = e.patient_id;
        s["height"] = e.height;
        s["width"] = e.width;
        s["framePaths"] = e.frame_paths;
        if (!e.mask_paths.empty()) {
            json mp = json::array();
            for (const auto& p : e.mask_paths) mp.push_back(p ? json(*p) : json(nullptr));
            s["maskPaths"] = std::move(mp);
        }
        doc["sequences"].push_back(std::move(s));
    }
    return doc.dump(2) + "\n";
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << manifest_to_json(manifest);
}

Dataset load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    Dataset ds;
    ds.root = path.parent_path();
    try {
        ds.manifest = manifest_from_json(ss.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }

    auto check_file = [&](const std::string& rel, const SequenceEntry& e) {
        const fs::path p = ds.root / rel;
        if (!fs::exists(p)) throw Error("sequence '" + e.sequence_id + "' references missing file '" + p.string() + "'");
        const auto hdr = pgm::probe(p);
        if (hdr.height != e.height || hdr.width != e.width) {
            throw Error("'" + p.string() + "' is " + std::to_string(hdr.height) + "x" + std::to_string(hdr.width) +
                        ", manifest declares " + std::to_string(e.height) + "x" + std::to_string(e.width));
        }
    };
    for (const auto& e : ds.manifest.sequences) {
        for (const auto& f : e.frame_paths) check_file(f, e);
        for (const auto& m : e.mask_paths) {
            if (m) check_file(*m, e);
        }
    }
    return ds;
}

ImageSequence Dataset::load(std::size_t index) const {
    const auto& e = manifest.sequences.at(index);
    ImageSequence seq;
    seq.sequence_id = e.sequence_id;
    for (const auto& f : e.frame_paths) {
        seq.frames.push_back(pgm::read_frame(root / f, manifest.intensity_scale));
        if (seq.frames.back().height() != e.height || seq.frames.back().width() != e.width) {
            throw Error("'" + (root / f).string() + "' does not match the declared frame size");
        }
    }
    for (const auto& m : e.mask_paths) {
        seq.ground_truth.push_back(m ? std::optional<BinaryMask>(pgm::read_mask(root / *m)) : std::nullopt);
    }
    seq.validate();
    return seq;
}

std::optional<std::size_t> Dataset::find(const std::string& sequence_id) const {
    for (std::size_t i = 0; i < manifest.sequences.size(); ++i) {
        if (manifest.sequences[i].sequence_id == sequence_id) return i;
    }
    return std::nullopt;
}

DatasetWriter::DatasetWriter(fs::path dir, double intensity_scale) : dir_(std::move(dir)) {
    manifest_.intensity_scale = intensity_scale;
    fs::create_directories(dir_);
}

SequenceEntry write_sequence(const fs::path& dir, const ImageSequence& seq, double intensity_scale,
                             const std::string& patient_id) {
    seq.validate();
    const auto& id = seq.sequence_id;
    if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
        throw Error("sequence id '" + id + "' cannot be used as a directory name");
    }
    SequenceEntry e;
    e.sequence_id = seq.sequence_id;
    e.patient_id = patient_id;
    e.height = seq.height();
    e.width = seq.width();
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        const std::string rel = seq.sequence_id + "/" + frame_name(k);
        pgm::write_frame(dir / rel, seq.frames[k], intensity_scale);
        e.frame_paths.push_back(rel);
    }
    for (std::size_t k = 0; k < seq.ground_truth.size(); ++k) {
        if (!seq.ground_truth[k]) {
            e.mask_paths.emplace_back(std::nullopt);
            continue;
        }
        const std::string rel = seq.sequence_id + "/" + mask_name(k);
        pgm::write_mask(dir / rel, *seq.ground_truth[k]);
        e.mask_paths.emplace_back(rel);
    }
    return e;
}

void DatasetWriter::add(const ImageSequence& seq, const std::string& patient_id) {
    manifest_.sequences.push_back(write_sequence(dir_, seq, manifest_.intensity_scale, patient_id));
}

Dataset DatasetWriter::finish() {
    save_manifest(dir_ / "manifest.json", manifest_);
    return {dir_, manifest_};
}

Dataset write_dataset(const fs::path& dir, const std::vector<ImageSequence>& sequences, double intensity_scale,
                      const std::vector<std::string>& patient_ids) {
    DatasetWriter writer(dir, intensity_scale);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        writer.add(sequences[i], i < patient_ids.size() ? patient_ids[i] : std::string{});
    }
    return writer.finish();
}

// ---------------------------------------------------------------------------
// Phantoms

namespace {

struct PlacedShape {
    DistractorShape shape;
    double intensity;
    double cy, cx;
    double half_a, half_b;  // rectangle half extents / ellipse semi-axes
    double angle;

    double extent() const { return std::hypot(half_a, half_b); }

    bool contains(double r, double c) const {
        const double dy = r - cy;
        const double dx = c - cx;
        const double u = dx * std::cos(angle) + dy * std::sin(angle);
        const double v = -dx * std::sin(angle) + dy * std::cos(angle);
        if (shape == DistractorShape::Rectangle) return std::abs(u) <= half_a && std::abs(v) <= half_b;
        return (u * u) / (half_a * half_a) + (v * v) / (half_b * half_b) <= 1.0;
    }
};

struct Layout {
    double cy = 0, cx = 0;
    std::vector<PlacedShape> shapes;
};

void validate_spec(const PhantomSpec& spec) {
    if (spec.frame_count == 0) throw Error("phantom: frameCount must be positive");
    if (spec.image_size < 16) throw Error("phantom: imageSize too small");
    if (!(spec.lv_radius_min > 0.0) || spec.lv_radius_max < spec.lv_radius_min) {
        throw Error("phantom: radius range must be positive and ordered");
    }
    if (spec.center_jitter < 0.0 || spec.noise_sigma < 0.0) throw Error("phantom: negative jitter or noise");
    const double half = static_cast<double>(spec.image_size) / 2.0;
    if (spec.lv_radius_max + spec.center_jitter + 1.0 > half) throw Error("phantom: LV disk can exceed the frame");
}

Layout make_layout(const PhantomSpec& spec, std::mt19937_64& rng) {
    validate_spec(spec);
    const double size = static_cast<double>(spec.image_size);
    std::uniform_real_distribution<double> jitter(-spec.center_jitter, spec.center_jitter);
    Layout lay;
    lay.cy = size / 2.0 + jitter(rng);
    lay.cx = size / 2.0 + jitter(rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Distractor sizes are tuned for 256 px frames and shrink with smaller ones.
    const double k = std::min(1.0, size / 256.0);
    for (const auto& d : spec.distractors) {
        PlacedShape s{d.shape, d.intensity, 0, 0, 0, 0, 0};
        if (d.shape == DistractorShape::Rectangle) {
            s.half_a = k * (16.0 + 6.0 * unit(rng));
            s.half_b = k * (7.0 + 3.0 * unit(rng));
        } else {
            s.half_a = k * (14.0 + 4.0 * unit(rng));
            s.half_b = k * (7.0 + 2.0 * unit(rng));
        }
        s.angle = std::numbers::pi * unit(rng);
        bool placed = false;
        for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
            const double theta = 2.0 * std::numbers::pi * unit(rng);
            const double dist = spec.lv_radius_max + k * (6.0 + 26.0 * unit(rng)) + s.extent();
            s.cy = lay.cy + dist * std::sin(theta);
            s.cx = lay.cx + dist * std::cos(theta);
            const double e = s.extent() + 2.0;
            if (s.cy - e < 0 || s.cx - e < 0 || s.cy + e > size || s.cx + e > size) continue;
            placed = std::all_of(lay.shapes.begin(), lay.shapes.end(), [&](const PlacedShape& o) {
                return std::hypot(o.cy - s.cy, o.cx - s.cx) > o.extent() + s.extent() + 4.0;
            });
        }
        if (!placed) throw Error("phantom: cannot place distractor inside the frame");
        lay.shapes.push_back(s);
    }
    return lay;
}

}  // namespace

double phantom_radius(const PhantomSpec& spec, std::size_t frame) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(frame) / static_cast<double>(spec.frame_count);
    return spec.lv_radius_min + (spec.lv_radius_max - spec.lv_radius_min) * (1.0 + std::sin(t + spec.radial_phase)) / 2.0;
}

std::pair<double, double> phantom_center(const PhantomSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    const Layout lay = make_layout(spec, rng);
    return {lay.cy, lay.cx};
}

ImageSequence generate_phantom(const PhantomSpec& spec, const std::string& sequence_id) {
    std::mt19937_64 rng(spec.seed);
    const Layout lay = make_layout(spec, rng);
    const std::size_t n = spec.image_size;

    // Static part of every frame.
    std::vector<double> base(n * n, spec.background);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            for (const auto& s : lay.shapes) {
                if (s.contains(static_cast<double>(r), static_cast<double>(c))) base[r * n + c] = s.intensity;
            }
        }
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, n * n - 1);
    std::uniform_real_distribution<double> hot(2.0 * spec.lv_intensity, std::max(2.0 * spec.lv_intensity, spec.outlier_max));

    ImageSequence seq;
    seq.sequence_id = sequence_id;
    for (std::size_t k = 0; k < spec.frame_count; ++k) {
        const double radius = phantom_radius(spec, k);
        const double r2 = radius * radius;
        std::vector<double> px = base;
        std::vector<std::uint8_t> gt(n * n, 0);
        for (std::size_t r = 0; r < n; ++r) {
            const double dy = static_cast<double>(r) - lay.cy;
            for (std::size_t c = 0; c < n; ++c) {
                const double dx = static_cast<double>(c) - lay.cx;
                if (dy * dy + dx * dx <= r2) {
                    px[r * n + c] = spec.lv_intensity;
                    gt[r * n + c] = 1;
                }
            }
        }
        for (double& v : px) v = std::max(0.0, std::round(v + spec.noise_sigma * noise(rng)));
        for (std::size_t i = 0; i < spec.outlier_count; ++i) {
            const std::size_t at = pick(rng);
            px[at] = std::round(hot(rng));
        }
        seq.frames.emplace_back(n, n, std::move(px));
        seq.ground_truth.emplace_back(BinaryMask(n, n, std::move(gt)));
    }
    return seq;
}

PhantomSpec corpus_member(const PhantomSpec& base, std::uint64_t corpus_seed, std::size_t index) {
    PhantomSpec s = base;
    std::seed_seq seq{static_cast<std::uint32_t>(corpus_seed), static_cast<std::uint32_t>(corpus_seed >> 32),
                      static_cast<std::uint32_t>(index), 0x5eedu};
    std::mt19937_64 rng(seq);
    s.seed = rng();
    s.radial_phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    return s;
}

std::string corpus_sequence_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq%04zu", index);
    return buf;
}

Split split(std::size_t count, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("split: trainFrac must be in (0,1)");
    if (count < 2) throw Error("split: need at least 2 sequences");
    const auto want = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
    const std::size_t n_train = std::clamp<std::size_t>(want, 1, count - 1);

    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Split out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::pair<Manifest, Manifest> split(const Manifest& manifest, double train_fraction, std::uint64_t seed) {
    const Split s = split(manifest.sequences.size(), train_fraction, seed);
    Manifest train = manifest;
    Manifest test = manifest;
    train.sequences.clear();
    test.sequences.clear();
    for (auto i : s.train) train.sequences.push_back(manifest.sequences[i]);
    for (auto i : s.test) test.sequences.push_back(manifest.sequences[i]);
    return {train, test};
}

}  // namespace lvseg::dataset
