#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvseg/imgcore.hpp"

namespace lvseg::dataset {

inline constexpr int kFormatVersion = 1;

struct SequenceEntry {
    std::string sequence_id;
    std::string patient_id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::string> frame_paths;                // relative to the manifest directory
    std::vector<std::optional<std::string>> mask_paths;  // empty, or aligned with frame_paths

    friend bool operator==(const SequenceEntry&, const SequenceEntry&) = default;
};

struct Manifest {
    int format_version = kFormatVersion;
    /// Multiplier applied to stored 16-bit frame samples on load. 1 for raw
    /// intensities; 1/65535 for stages that store [0,1] data.
    double intensity_scale = 1.0;
    std::vector<SequenceEntry> sequences;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// A manifest plus the directory its relative paths resolve against.
struct Dataset {
    std::filesystem::path root;
    Manifest manifest;

    std::size_t size() const { return manifest.sequences.size(); }
    /// Loads sequence `index` from disk, validating shapes and mask values.
    ImageSequence load(std::size_t index) const;
    std::optional<std::size_t> find(const std::string& sequence_id) const;
};

/// Parses and validates `path` (a manifest.json). Every referenced file must
/// exist and its PGM header must agree with the declared height and width.
Dataset load_manifest(const std::filesystem::path& path);

Manifest manifest_from_json(const std::string& text);
std::string manifest_to_json(const Manifest& manifest);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Writes `dir/manifest.json`, `dir/<id>/frame_###.pgm` and
/// `dir/<id>/mask_###.pgm` for every sequence. Frames are stored divided by
/// `intensity_scale`.
Dataset write_dataset(const std::filesystem::path& dir, const std::vector<ImageSequence>& sequences,
                      double intensity_scale = 1.0, const std::vector<std::string>& patient_ids = {});

/// Writes one sequence's files under `dir` and returns its manifest entry.
SequenceEntry write_sequence(const std::filesystem::path& dir, const ImageSequence& seq, double intensity_scale = 1.0,
                             const std::string& patient_id = {});

/// Same layout, appending to an open writer one sequence at a time so large
/// corpora need not be held in memory.
class DatasetWriter {
public:
    DatasetWriter(std::filesystem::path dir, double intensity_scale = 1.0);
    void add(const ImageSequence& seq, const std::string& patient_id = {});
    Dataset finish();

private:
    std::filesystem::path dir_;
    Manifest manifest_;
};

enum class DistractorShape { Rectangle, Ellipse };

struct Distractor {
    DistractorShape shape = DistractorShape::Rectangle;
    double intensity = 900.0;
};

struct PhantomSpec {
    std::size_t frame_count = 20;
    std::size_t image_size = 256;
    double lv_radius_min = 15.0;
    double lv_radius_max = 25.0;
    double radial_phase = 0.0;
    double center_jitter = 20.0;
    std::vector<Distractor> distractors = {{DistractorShape::Rectangle, 920.0},
                                           {DistractorShape::Ellipse, 880.0}};
    double background = 150.0;
    double lv_intensity = 1000.0;
    double noise_sigma = 60.0;
    /// Impulse outliers per frame with intensities up to `outlier_max`.
    std::size_t outlier_count = 40;
    double outlier_max = 8011.0;
    std::uint64_t seed = 0;
};

/// Moving bright disk over noise with static look-alike distractors. The disk
/// radius at frame k is min + (max-min) * (1 + sin(2*pi*k/frameCount + phase)) / 2.
/// Intensities are rounded to integers so the sequence survives a 16-bit write.
ImageSequence generate_phantom(const PhantomSpec& spec, const std::string& sequence_id = "phantom");

/// Centre of the LV disk that `generate_phantom(spec)` places (row, col).
std::pair<double, double> phantom_center(const PhantomSpec& spec);
double phantom_radius(const PhantomSpec& spec, std::size_t frame);

/// Per-sequence spec for member `index` of a seeded corpus: the base spec with
/// its own seed and a random cycle phase.
PhantomSpec corpus_member(const PhantomSpec& base, std::uint64_t corpus_seed, std::size_t index);
std::string corpus_sequence_id(std::size_t index);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Sequence-level split of `count` sequences; both index lists are returned in
/// ascending order.
Split split(std::size_t count, double train_fraction, std::uint64_t seed);
std::pair<Manifest, Manifest> split(const Manifest& manifest, double train_fraction, std::uint64_t seed);

}  // namespace lvseg::dataset
