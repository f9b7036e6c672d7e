// lvseg: left-ventricle segmentation pipeline driver.
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lvseg/cli/config.hpp"
#include "lvseg/cli/stages.hpp"

namespace {

using namespace lvseg;
namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string model;
    std::string dataset;
    std::vector<std::string> runs;
};

void add_common(CLI::App* app, Options& o) {
    app->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", o.seed, "Seed (overrides the config)");
    app->add_option("--out", o.out, "Output directory");
}

// Flags win over the config file, which wins over built-in defaults.
cli::PipelineConfig resolve(const Options& o) {
    cli::PipelineConfig c = o.config.empty() ? cli::PipelineConfig{} : cli::load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.out.empty()) c.paths.out = o.out;
    if (!o.model.empty()) c.paths.model = o.model;
    if (!o.dataset.empty()) c.paths.dataset = o.dataset;
    c.validate();
    return c;
}

const std::string& need(const std::string& value, const char* flag, const char* stage) {
    if (value.empty()) throw Error(std::string(stage) + ": " + flag + " is required");
    return value;
}

void print_table(const std::vector<metrics::MetricReport>& reports, metrics::Averaging mode) {
    std::cout << metrics::report_table(reports, mode);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Left-ventricle segmentation in cine MRI: preprocessing, motion ROI, FCN, post-processing, metrics"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "Write a seeded phantom corpus");
    add_common(synth, o);

    auto* pre = app.add_subcommand("preprocess", "Clip outliers and scale frames to [0,1]");
    add_common(pre, o);
    pre->add_option("--dataset", o.dataset, "Input dataset (directory or manifest)");

    auto* roi = app.add_subcommand("roi", "Extract one ROI per sequence and crop");
    add_common(roi, o);
    roi->add_option("--dataset", o.dataset, "Preprocessed dataset");

    auto* train = app.add_subcommand("train", "Train the FCN on cropped sequences");
    add_common(train, o);
    train->add_option("--dataset", o.dataset, "Cropped dataset or a split manifest such as train.json");

    auto* infer = app.add_subcommand("infer", "Probability maps for a cropped dataset");
    add_common(infer, o);
    infer->add_option("--dataset", o.dataset, "Cropped dataset (its directory holds rois.json)");
    infer->add_option("--model", o.model, "Weight file");

    auto* post = app.add_subcommand("postprocess", "Otsu + roundness masks, plus raw 0.5-threshold masks");
    add_common(post, o);
    post->add_option("--dataset", o.dataset, "Directory written by infer");

    auto* eval = app.add_subcommand("eval", "Ablation report over run directories");
    add_common(eval, o);
    eval->add_option("--dataset", o.dataset, "Dataset holding the ground-truth masks");
    eval->add_option("--runs", o.runs, "Run directories, comma separated")->delimiter(',')->required();

    auto* pipe = app.add_subcommand("pipeline", "preprocess, roi, [train], infer, postprocess, eval, overlays");
    add_common(pipe, o);
    pipe->add_option("--dataset", o.dataset, "Raw dataset with ground truth");
    pipe->add_option("--model", o.model, "Use this weight file instead of training");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const auto c = resolve(o);
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        const fs::path out = need(c.paths.out, "--out", name.c_str());

        if (sub == synth) {
            const auto ds = cli::run_synth(c, out);
            std::cout << "synth: " << ds.size() << " sequences -> " << out.string() << "\n";
        } else if (sub == pre) {
            const auto ds = cli::run_preprocess(c, need(c.paths.dataset, "--dataset", "preprocess"), out);
            std::cout << "preprocess: " << ds.size() << " sequences -> " << out.string() << "\n";
        } else if (sub == roi) {
            const auto ds = cli::run_roi(c, need(c.paths.dataset, "--dataset", "roi"), out);
            std::cout << "roi: " << ds.size() << " sequences -> " << out.string() << "\n";
        } else if (sub == train) {
            const auto r = cli::run_train(c, need(c.paths.dataset, "--dataset", "train"), out,
                                          [](std::size_t epoch, double loss) {
                                              std::fprintf(stderr, "epoch %zu loss %.6f\n", epoch + 1, loss);
                                          });
            std::cout << "train: " << r.iterations << " iterations, final loss "
                      << (r.loss_curve.empty() ? 0.0 : r.loss_curve.back()) << " -> " << (out / "model.fcnw").string()
                      << "\n";
        } else if (sub == infer) {
            cli::run_infer(c, need(c.paths.model, "--model", "infer"), need(c.paths.dataset, "--dataset", "infer"), out);
            std::cout << "infer: -> " << out.string() << "\n";
        } else if (sub == post) {
            cli::run_postprocess(c, need(c.paths.dataset, "--dataset", "postprocess"), out);
            std::cout << "postprocess: -> " << (out / "post").string() << ", " << (out / "raw").string() << "\n";
        } else if (sub == eval) {
            std::vector<fs::path> runs(o.runs.begin(), o.runs.end());
            const auto reports = cli::run_eval(c, need(c.paths.dataset, "--dataset", "eval"), runs, out);
            print_table(reports, c.averaging);
        } else if (sub == pipe) {
            std::optional<fs::path> model;
            if (!c.paths.model.empty()) model = c.paths.model;
            const auto reports = cli::run_pipeline(c, need(c.paths.dataset, "--dataset", "pipeline"), out, model);
            print_table(reports, c.averaging);
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& ch : msg) {
            if (ch == '\n') ch = ' ';
        }
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
    return 0;
}
