#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lvseg/cli/stages.hpp"
#include "lvseg/dataset.hpp"
#include "lvseg/fcn/train.hpp"
#include "lvseg/imgcore.hpp"
#include "lvseg/metrics.hpp"
#include "lvseg/postproc.hpp"
#include "lvseg/roi.hpp"

namespace py = pybind11;
using namespace lvseg;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename G, typename A>
G grid_from(const A& a) {
    if (a.ndim() != 2) throw Error("expected a 2-D array");
    const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
    using T = typename G::value_type;
    std::vector<T> data(a.data(), a.data() + h * w);
    return G(h, w, std::move(data));
}

template <typename G>
py::array_t<typename G::value_type> to_array(const G& g) {
    py::array_t<typename G::value_type> out({g.height(), g.width()});
    std::copy(g.pixels().begin(), g.pixels().end(), out.mutable_data());
    return out;
}

template <typename G>
py::array_t<typename G::value_type> stack(const std::vector<G>& gs) {
    const std::size_t n = gs.size(), h = n ? gs[0].height() : 0, w = n ? gs[0].width() : 0;
    py::array_t<typename G::value_type> out({n, h, w});
    auto* p = out.mutable_data();
    for (const auto& g : gs) p = std::copy(g.pixels().begin(), g.pixels().end(), p);
    return out;
}

ImageSequence sequence_from(const F64Array& frames, const std::optional<U8Array>& masks) {
    if (frames.ndim() != 3) throw Error("frames must have shape (n, h, w)");
    const auto n = static_cast<std::size_t>(frames.shape(0)), h = static_cast<std::size_t>(frames.shape(1)),
               w = static_cast<std::size_t>(frames.shape(2));
    ImageSequence seq;
    seq.sequence_id = "array";
    for (std::size_t k = 0; k < n; ++k) {
        const double* p = frames.data() + k * h * w;
        seq.frames.emplace_back(h, w, std::vector<double>(p, p + h * w));
    }
    if (masks) {
        if (masks->ndim() != 3 || static_cast<std::size_t>(masks->shape(0)) != n) throw Error("masks must match frames");
        for (std::size_t k = 0; k < n; ++k) {
            const std::uint8_t* p = masks->data() + k * h * w;
            seq.ground_truth.emplace_back(BinaryMask(h, w, std::vector<std::uint8_t>(p, p + h * w)));
        }
    }
    seq.validate();
    return seq;
}

py::dict box_dict(const roi::RoiBox& b) {
    py::dict d;
    d["top"] = b.top;
    d["left"] = b.left;
    d["side"] = b.side;
    return d;
}

py::dict counts_dict(const metrics::ConfusionCounts& c) {
    py::dict d;
    d["tp"] = c.tp;
    d["fp"] = c.fp;
    d["fn"] = c.fn;
    d["tn"] = c.tn;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Left-ventricle segmentation pipeline (C++ core)";

    py::register_exception<Error>(m, "LvsegError", PyExc_RuntimeError);

    m.def("clip_outliers", [](const F64Array& img, double fraction) {
        return to_array(clip_outliers(grid_from<Image2D>(img), fraction));
    }, py::arg("image"), py::arg("fraction") = 0.01);

    m.def("scale_unit", [](const F64Array& img) { return to_array(scale_unit(grid_from<Image2D>(img))); },
          py::arg("image"));

    m.def("generate_phantom", [](std::uint64_t seed, std::size_t frames, std::size_t size, double noise_sigma) {
        dataset::PhantomSpec spec;
        spec.seed = seed;
        spec.frame_count = frames;
        spec.image_size = size;
        spec.noise_sigma = noise_sigma;
        const auto seq = dataset::generate_phantom(spec);
        std::vector<BinaryMask> masks;
        for (const auto& m : seq.ground_truth) masks.push_back(*m);
        return py::make_tuple(stack(seq.frames), stack(masks));
    }, py::arg("seed"), py::arg("frames") = 20, py::arg("size") = 256, py::arg("noise_sigma") = 60.0,
       "Phantom sequence as (frames[n,h,w] float64, masks[n,h,w] uint8).");

    m.def("preprocess", [](const F64Array& frames, double fraction) {
        return stack(preprocess(sequence_from(frames, std::nullopt), fraction).frames);
    }, py::arg("frames"), py::arg("fraction") = 0.01);

    m.def("extract_roi", [](const F64Array& frames) {
        const auto r = roi::extract_roi(sequence_from(frames, std::nullopt));
        py::dict d;
        d["box"] = box_dict(r.box);
        d["fallback"] = r.fallback;
        d["warning"] = r.warning;
        d["iterations"] = r.iterations;
        d["saliency"] = to_array(r.saliency);
        return d;
    }, py::arg("frames"), "ROI box of a preprocessed sequence (frames[n,h,w] in [0,1]).");

    m.def("otsu_threshold", [](const F64Array& p, std::size_t bins) {
        const auto r = postproc::otsu_threshold(grid_from<ProbabilityMap>(p), bins);
        return py::make_tuple(r.threshold, to_array(r.mask), r.degenerate);
    }, py::arg("probability"), py::arg("bins") = 256);

    m.def("label_components", [](const U8Array& mask) {
        const auto comps = postproc::connected_components(grid_from<BinaryMask>(mask));
        py::array_t<std::int32_t> labels({mask.shape(0), mask.shape(1)});
        std::fill(labels.mutable_data(), labels.mutable_data() + labels.size(), 0);
        auto* L = labels.mutable_data();
        const auto w = static_cast<std::size_t>(mask.shape(1));
        for (const auto& c : comps) {
            for (const auto& px : c.pixels) L[px.row * w + px.col] = static_cast<std::int32_t>(c.label);
        }
        return py::make_tuple(labels, comps.size());
    }, py::arg("mask"), "8-connected labels (0 = background) and the component count.");

    m.def("roundness", [](const U8Array& mask, bool all_pixels) {
        const auto comps = postproc::connected_components(grid_from<BinaryMask>(mask));
        if (comps.size() != 1) throw Error("roundness: mask must hold exactly one component");
        return postproc::roundness(comps[0], all_pixels ? postproc::DistanceSet::AllPixels
                                                        : postproc::DistanceSet::Boundary);
    }, py::arg("mask"), py::arg("all_pixels") = false);

    m.def("confusion", [](const U8Array& pred, const U8Array& gt) {
        const auto c = metrics::confusion(grid_from<BinaryMask>(pred), grid_from<BinaryMask>(gt));
        py::dict d = counts_dict(c);
        d["accuracy"] = metrics::accuracy(c);
        d["dice"] = metrics::dice(c);
        d["sensitivity"] = metrics::tpr(c);
        return d;
    }, py::arg("pred"), py::arg("gt"));

    py::class_<fcn::NetworkParams>(m, "Model")
        .def_static("load", [](const std::filesystem::path& path, std::size_t input_size) {
            return fcn::load_params(path, fcn::mini_fcn8s(input_size));
        }, py::arg("path"), py::arg("input_size") = 64)
        .def("save", [](const fcn::NetworkParams& p, const std::filesystem::path& path) { fcn::save_params(path, p); })
        .def_property_readonly("fingerprint", [](const fcn::NetworkParams& p) { return fcn::to_hex(p.fingerprint); })
        .def_property_readonly("input_size", [](const fcn::NetworkParams& p) { return p.architecture.input_size; })
        .def("predict", [](const fcn::NetworkParams& p, const F64Array& crop) {
            return to_array(fcn::infer_frame(p, grid_from<Image2D>(crop)));
        }, py::arg("crop"), "LV probability at network resolution for one cropped frame.");

    m.def("train", [](const F64Array& crops, const U8Array& masks, std::size_t epochs, std::size_t batch, double lr,
                      std::uint64_t seed, std::size_t input_size) {
        const auto seq = sequence_from(crops, masks);
        const auto samples = fcn::build_samples({seq}, input_size);
        fcn::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch = batch;
        cfg.lr = lr;
        cfg.seed = seed;
        auto r = fcn::train(samples, cfg, fcn::mini_fcn8s(input_size));
        return py::make_tuple(std::move(r.params), r.loss_curve);
    }, py::arg("crops"), py::arg("masks"), py::arg("epochs") = 30, py::arg("batch") = 8, py::arg("lr") = 0.01,
       py::arg("seed") = 1, py::arg("input_size") = 64, "Returns (Model, per-epoch loss).");

    m.def("pipeline", [](const std::filesystem::path& dataset, const std::filesystem::path& out,
                         const std::optional<std::filesystem::path>& config, std::optional<std::uint64_t> seed,
                         const std::optional<std::filesystem::path>& model) {
        auto cfg = config ? cli::load_config(*config) : cli::PipelineConfig{};
        if (seed) cfg.seed = *seed;
        std::vector<metrics::MetricReport> reports;
        {
            py::gil_scoped_release release;
            reports = cli::run_pipeline(cfg, dataset, out, model);
        }
        py::list rows;
        for (const auto& r : reports) {
            py::dict d;
            d["config"] = r.label;
            d["frames"] = r.frames.size();
            d["accuracy"] = r.micro.accuracy;
            d["dice"] = r.micro.dice;
            d["sensitivity"] = r.micro.sensitivity;
            rows.append(d);
        }
        return rows;
    }, py::arg("dataset"), py::arg("out"), py::arg("config") = py::none(), py::arg("seed") = py::none(),
       py::arg("model") = py::none(), "Full pipeline; returns the report rows.");

    m.def("synth", [](const std::filesystem::path& out, std::optional<std::size_t> sequences,
                      std::optional<std::uint64_t> seed, const std::optional<std::filesystem::path>& config) {
        auto cfg = config ? cli::load_config(*config) : cli::PipelineConfig{};
        if (sequences) cfg.synth.sequences = *sequences;
        if (seed) cfg.seed = *seed;
        return cli::run_synth(cfg, out).size();
    }, py::arg("out"), py::arg("sequences") = py::none(), py::arg("seed") = py::none(),
       py::arg("config") = py::none(), "Phantom corpus; returns the sequence count.");
}
