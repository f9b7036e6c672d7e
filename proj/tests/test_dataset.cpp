#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "lvseg/dataset.hpp"
#include "support.hpp"

using namespace lvseg;
using namespace lvseg::dataset;

namespace {

ImageSequence small_sequence(const std::string& id, std::size_t frames, bool masks) {
    ImageSequence s;
    s.sequence_id = id;
    for (std::size_t k = 0; k < frames; ++k) {
        Image2D f(5, 6);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(k * 100 + i);
        s.frames.push_back(f);
        if (masks) {
            if (k == 1) {
                s.ground_truth.emplace_back(std::nullopt);
            } else {
                s.ground_truth.emplace_back(lvtest::rect(5, 6, 1, 1, 2, k + 1));
            }
        }
    }
    return s;
}

}  // namespace

TEST_CASE("write, load and round-trip a dataset") {
    lvtest::TempDir dir("ds");
    const std::vector<ImageSequence> seqs = {small_sequence("a", 3, true), small_sequence("b", 2, false)};
    const auto written = write_dataset(dir.path(), seqs, 1.0, {"p1", "p2"});
    const auto loaded = load_manifest(dir / "manifest.json");
    CHECK(loaded.manifest == written.manifest);
    CHECK(loaded.size() == 2);
    CHECK(loaded.manifest.sequences[0].patient_id == "p1");

    const auto a = loaded.load(0);
    CHECK(a.sequence_id == "a");
    CHECK(a.frames == seqs[0].frames);
    CHECK(a.ground_truth == seqs[0].ground_truth);
    CHECK_FALSE(a.ground_truth[1].has_value());
    CHECK_FALSE(loaded.load(1).has_ground_truth());
    CHECK(loaded.find("b") == std::size_t{1});
    CHECK_FALSE(loaded.find("zzz").has_value());

    CHECK(manifest_from_json(manifest_to_json(written.manifest)) == written.manifest);
}

TEST_CASE("single sequence with 20 frames") {
    lvtest::TempDir dir("ds20");
    write_dataset(dir.path(), {small_sequence("only", 20, false)});
    const auto d = load_manifest(dir / "manifest.json");
    CHECK(d.size() == 1);
    CHECK(d.load(0).frames.size() == 20);
}

TEST_CASE("streaming writer matches the batch writer") {
    lvtest::TempDir a("dsa"), b("dsb");
    const std::vector<ImageSequence> seqs = {small_sequence("x", 2, true), small_sequence("y", 3, true)};
    write_dataset(a.path(), seqs);
    DatasetWriter w(b.path());
    for (const auto& s : seqs) w.add(s);
    w.finish();
    CHECK(lvtest::compare_trees(a.path(), b.path()).empty());
}

TEST_CASE("manifest validation errors") {
    lvtest::TempDir dir("dserr");
    write_dataset(dir.path(), {small_sequence("a", 2, true)});
    const auto path = dir / "manifest.json";

    SUBCASE("missing referenced file names the file") {
        std::filesystem::remove(dir / "a" / "frame_001.pgm");
        try {
            load_manifest(path);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("frame_001.pgm") != std::string::npos);
        }
    }
    SUBCASE("missing manifest") { CHECK_THROWS_AS(load_manifest(dir / "nope.json"), Error); }
    SUBCASE("unknown keys") {
        CHECK_THROWS_AS(manifest_from_json(R"({"formatVersion":1,"sequences":[],"extra":1})"), Error);
        CHECK_THROWS_AS(
            manifest_from_json(
                R"({"formatVersion":1,"sequences":[{"sequenceId":"a","height":1,"width":1,"framePaths":["f"],"x":0}]})"),
            Error);
    }
    SUBCASE("structural errors") {
        CHECK_THROWS_AS(manifest_from_json("not json"), Error);
        CHECK_THROWS_AS(manifest_from_json(R"({"formatVersion":2,"sequences":[]})"), Error);
        CHECK_THROWS_AS(
            manifest_from_json(R"({"formatVersion":1,"sequences":[{"sequenceId":"a","height":1,"width":1,"framePaths":[]}]})"),
            Error);
        CHECK_THROWS_AS(
            manifest_from_json(
                R"({"formatVersion":1,"sequences":[{"sequenceId":"a","height":1,"width":1,"framePaths":["f"],"maskPaths":[]}]})"),
            Error);
    }
    SUBCASE("declared size must match the file") {
        auto m = load_manifest(path).manifest;
        m.sequences[0].height = 7;
        save_manifest(path, m);
        CHECK_THROWS_AS(load_manifest(path), Error);
    }
    SUBCASE("unsafe sequence ids") {
        CHECK_THROWS_AS(write_sequence(dir.path(), small_sequence("../up", 1, false)), Error);
        CHECK_THROWS_AS(write_sequence(dir.path(), small_sequence("..", 1, false)), Error);
    }
}

TEST_CASE("phantom is deterministic and seed-dependent") {
    PhantomSpec spec;
    spec.image_size = 96;
    spec.frame_count = 4;
    spec.lv_radius_min = 8;
    spec.lv_radius_max = 12;
    spec.center_jitter = 6;
    spec.seed = 5;
    const auto a = generate_phantom(spec, "p");
    const auto b = generate_phantom(spec, "p");
    CHECK(a.frames == b.frames);
    CHECK(a.ground_truth == b.ground_truth);
    spec.seed = 6;
    CHECK(generate_phantom(spec, "p").frames != a.frames);
    for (const auto& f : a.frames) {
        for (double v : f.pixels()) CHECK(v == std::round(v));
    }
}

TEST_CASE("phantom GT area follows the radius sinusoid") {
    PhantomSpec spec;
    spec.seed = 17;
    spec.radial_phase = 0.3;
    const auto seq = generate_phantom(spec);
    REQUIRE(seq.frames.size() == 20);
    const auto [cy, cx] = phantom_center(spec);
    for (std::size_t k = 0; k < 20; ++k) {
        const double t = 2 * std::numbers::pi * static_cast<double>(k) / 20.0;
        const double r = 15.0 + 10.0 * (1 + std::sin(t + 0.3)) / 2.0;
        CHECK(phantom_radius(spec, k) == doctest::Approx(r));
        const auto& gt = *seq.ground_truth[k];
        const double area = std::numbers::pi * r * r;
        CHECK(std::abs(static_cast<double>(gt.count()) - area) <= 2 * std::numbers::pi * r);
        // Every GT pixel lies on the disk around the reported centre.
        for (std::size_t row = 0; row < gt.height(); ++row) {
            for (std::size_t col = 0; col < gt.width(); ++col) {
                if (gt.at(row, col)) CHECK(std::hypot(row - cy, col - cx) <= r + 1e-9);
            }
        }
    }
}

TEST_CASE("phantom rejects impossible specs") {
    PhantomSpec spec;
    spec.lv_radius_min = 0;
    CHECK_THROWS_AS(generate_phantom(spec), Error);
    spec = {};
    spec.image_size = 64;  // max radius + jitter exceeds half the frame
    CHECK_THROWS_AS(generate_phantom(spec), Error);
}

TEST_CASE("corpus members differ and are reproducible") {
    PhantomSpec base;
    const auto a = corpus_member(base, 2024, 0), b = corpus_member(base, 2024, 1);
    CHECK(a.seed != b.seed);
    CHECK(corpus_member(base, 2024, 0).seed == a.seed);
    CHECK(corpus_member(base, 2025, 0).seed != a.seed);
    CHECK(corpus_sequence_id(7) == "seq0007");
}

TEST_CASE("sequence-level split") {
    const auto s = split(10, 0.8, 1);
    CHECK(s.train.size() == 8);
    CHECK(s.test.size() == 2);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 10);
    CHECK(std::is_sorted(s.train.begin(), s.train.end()));
    const auto again = split(10, 0.8, 1);
    CHECK(again.train == s.train);
    CHECK_THROWS_AS(split(1, 0.8, 1), Error);
    CHECK_THROWS_AS(split(10, 1.0, 1), Error);

    Manifest m;
    for (int i = 0; i < 10; ++i) m.sequences.push_back({"s" + std::to_string(i), "", 1, 1, {"f"}, {}});
    const auto [train, test] = split(m, 0.8, 1);
    CHECK(train.sequences.size() == 8);
    CHECK(test.sequences.size() == 2);
    CHECK(test.sequences[0].sequence_id == m.sequences[s.test[0]].sequence_id);
}

TEST_CASE("default distractors fit small frames") {
    PhantomSpec spec;
    spec.image_size = 64;
    spec.frame_count = 1;
    spec.lv_radius_min = 6;
    spec.lv_radius_max = 9;
    spec.center_jitter = 4;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        spec.seed = seed;
        CHECK_NOTHROW(generate_phantom(spec, "small"));
    }
}
