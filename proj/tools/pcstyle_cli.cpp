// Command-line entry points. Exit codes:
//   0 success, 1 unexpected failure, 2 usage or config error, 3 io error,
//   4 checkpoint error, 5 empty region, 6 resource limit, 7 invalid argument.
// Failures print one JSON object on stderr: {"error": <kind>, "message": <text>}.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "pcstyle/errors.hpp"
#include "pcstyle/experiments.hpp"
#include "pcstyle/image_io.hpp"
#include "pcstyle/multimask.hpp"

namespace fs = std::filesystem;
using namespace pcstyle;

namespace {

struct Failure {
    int code;
    const char* kind;
};

int report(const Failure& f, const std::string& message) {
    nlohmann::ordered_json j;
    j["error"] = f.kind;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
    return f.code;
}

std::string resolve_weights(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kWeightsEnv); env && *env) return env;
    return {};
}

struct BlendFlags {
    bool feather_before = false;
    bool expand_during = false;
    bool content_feather = false;
    int feather_px = 5;

    void add(CLI::App* cmd) {
        cmd->add_flag("--feather-before", feather_before, "feather the mask before encoding");
        cmd->add_flag("--expand-during", expand_during, "dilate the working mask inside each convolution");
        cmd->add_flag("--content-feather", content_feather, "blend content features around the region in the decoder");
        cmd->add_option("--feather-px", feather_px, "feather kernel width in pixels (odd)")->capture_default_str();
    }
    BlendConfig config() const { return {feather_before, feather_px, expand_during, content_feather}; }
};

struct NetworkFlags {
    std::string weights;
    bool renormalize = true;

    void add(CLI::App* cmd) {
        cmd->add_option("--weights", weights,
                        std::string("checkpoint path or random:<seed>; defaults to $") + kWeightsEnv);
        cmd->add_flag("--renormalize,!--no-renormalize", renormalize, "window renormalization in partial convolutions")
            ->capture_default_str();
    }
    StyleNetwork load() const { return load_network(resolve_weights(weights), renormalize); }
};

/// Loads a config, applying command-line overrides of output_dir and workers.
RunConfig experiment_config(const fs::path& path, const fs::path& out, int workers) {
    RunConfig cfg = load_run_config(path);
    if (!out.empty()) cfg.output_dir = out;
    if (workers > 0) cfg.workers = workers;
    if (cfg.output_dir.empty()) throw ConfigError("no output directory: set 'output_dir' or pass --out");
    cfg.validate();
    return cfg;
}

void write_sidecar(const fs::path& path, const std::string& kind, const RunConfig& cfg,
                   const std::string& dataset_hash, std::size_t evaluated, const std::vector<SkippedItem>& skipped,
                   const std::vector<std::string>& warnings) {
    write_text_file(path, run_sidecar_json(kind, cfg, dataset_hash, cfg.weights, evaluated, skipped, warnings));
}

void print_summary(const std::string& kind, const RunConfig& cfg, std::size_t evaluated, std::size_t skipped) {
    nlohmann::ordered_json j;
    j["command"] = kind;
    j["output_dir"] = cfg.output_dir.generic_string();
    j["config_hash"] = cfg.hash();
    j["evaluated"] = evaluated;
    j["skipped"] = skipped;
    std::cout << j.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Feature maps are large and short-lived; keeping them off mmap avoids repeated page faults.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

    CLI::App app{"Masked style transfer with partial convolutions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kReportSchemaVersion));

    // stylize
    std::string content, mask, style, out;
    BlendFlags blend;
    NetworkFlags network;
    auto* stylize = app.add_subcommand("stylize", "stylize the masked region of one image");
    stylize->add_option("--content", content)->required();
    stylize->add_option("--mask", mask, "8-bit mask image, >127 is inside")->required();
    stylize->add_option("--style", style)->required();
    stylize->add_option("--out", out, "output PNG")->required();
    blend.add(stylize);
    network.add(stylize);

    // stylize-multi
    std::vector<std::string> regions;
    auto* multi = app.add_subcommand("stylize-multi", "stylize several regions, each with its own style");
    multi->add_option("--content", content)->required();
    multi->add_option("--region", regions, "MASK:STYLE, repeatable")->required();
    multi->add_option("--out", out)->required();
    blend.add(multi);
    network.add(multi);

    // baseline
    std::string mode;
    auto* baseline = app.add_subcommand("baseline", "whole-image stylization composited with the mask");
    baseline->add_option("--mode", mode)->required()->check(CLI::IsMember({"style-then-mask", "mask-then-style"}));
    baseline->add_option("--content", content)->required();
    baseline->add_option("--mask", mask)->required();
    baseline->add_option("--style", style)->required();
    baseline->add_option("--out", out)->required();
    network.add(baseline);

    // score
    std::string output;
    MetricOptions metric_opts;
    auto* score = app.add_subcommand("score", "metrics of one stylized output, printed as JSON");
    score->add_option("--output", output, "stylized image")->required();
    score->add_option("--mask", mask)->required();
    score->add_option("--style", style)->required();
    score->add_option("--bins", metric_opts.bins)->capture_default_str();
    score->add_option("--projections", metric_opts.n_projections)->capture_default_str();
    score->add_option("--seed", metric_opts.seed)->capture_default_str();
    network.add(score);

    // experiments
    std::string config_path, out_dir;
    int workers = 0;
    auto add_experiment = [&](const char* name, const char* help) {
        auto* cmd = app.add_subcommand(name, help);
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--out", out_dir, "overrides output_dir");
        cmd->add_option("--workers", workers, "overrides workers")->check(CLI::PositiveNumber);
        return cmd;
    };
    auto* evaluate = add_experiment("evaluate", "per-method metrics over the dataset (tab2.csv)");
    auto* ablate = add_experiment("ablate", "boundary metrics over the eight blend configurations (ablation.csv)");
    auto* disparity = add_experiment("disparity", "whole-image vs region EMD per image (disparity.csv)");

    // index
    std::string root;
    auto* index = app.add_subcommand("index", "index a dataset directory and print it as JSON");
    index->add_option("--root", root)->required();

    // init-random
    std::uint64_t init_seed = 0;
    auto* init = app.add_subcommand("init-random", "write a checkpoint with seeded random weights");
    init->add_option("--seed", init_seed)->capture_default_str();
    init->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report({2, "usage"}, e.what());
    }

    try {
        if (stylize->parsed()) {
            const StyleNetwork net = network.load();
            write_png(out, stylize_masked(net, {read_image(content), read_image(style), read_mask(mask), blend.config()}));
        } else if (multi->parsed()) {
            const StyleNetwork net = network.load();
            std::vector<RegionSpec> specs;
            for (const auto& r : regions) {
                const auto colon = r.find(':');
                if (colon == std::string::npos || colon == 0 || colon + 1 == r.size())
                    throw ConfigError("--region '" + r + "': expected MASK:STYLE");
                specs.push_back({read_mask(r.substr(0, colon)), read_image(r.substr(colon + 1))});
            }
            write_png(out, stylize_multi(net, read_image(content), specs, blend.config()));
        } else if (baseline->parsed()) {
            const StyleNetwork net = network.load();
            const ImageBuffer c = read_image(content), s = read_image(style);
            const MaskMap m = read_mask(mask);
            write_png(out, mode == "style-then-mask" ? style_then_mask(net, c, s, m) : mask_then_style(net, c, s, m));
        } else if (score->parsed()) {
            const StyleNetwork net = network.load();
            const MetricReport r = compute_metrics(net, read_image(output), read_mask(mask), read_image(style), metric_opts);
            nlohmann::ordered_json j;
            j["gray_emd"] = r.gray_emd;
            j["sliced_emd"] = r.sliced_emd;
            j["style_loss"] = r.style_loss;
            j["boundary_grad_magnitude"] = r.boundary_grad_magnitude;
            j["boundary_color_contrast"] = r.boundary_color_contrast;
            j["finite"] = r.all_finite();
            std::cout << j.dump() << '\n';
        } else if (evaluate->parsed()) {
            const RunConfig cfg = experiment_config(config_path, out_dir, workers);
            const Tab2Result r = run_tab2(cfg, load_network(cfg.weights, cfg.renormalize));
            write_text_file(cfg.output_dir / "tab2.csv", tab2_csv(r, cfg));
            write_sidecar(cfg.output_dir / "tab2.json", "evaluate", cfg, r.dataset_hash, r.evaluated, r.skipped,
                          r.warnings);
            print_summary("evaluate", cfg, r.evaluated, r.skipped.size());
        } else if (ablate->parsed()) {
            const RunConfig cfg = experiment_config(config_path, out_dir, workers);
            const AblationRun r = run_dataset_ablation(cfg, load_network(cfg.weights, cfg.renormalize));
            std::vector<SkippedItem> skipped;
            for (const auto& f : r.grid.failures) skipped.push_back({f.id, f.message});
            write_text_file(cfg.output_dir / "ablation.csv", ablation_csv(r.grid));
            write_text_file(cfg.output_dir / "ablation_rows.csv", ablation_rows_csv(r.grid, cfg));
            write_sidecar(cfg.output_dir / "ablation.json", "ablate", cfg, r.dataset_hash, r.grid.evaluated, skipped,
                          r.warnings);
            print_summary("ablate", cfg, r.grid.evaluated, skipped.size());
        } else if (disparity->parsed()) {
            const RunConfig cfg = experiment_config(config_path, out_dir, workers);
            const DisparityResult r = run_disparity(cfg);
            write_text_file(cfg.output_dir / "disparity.csv", disparity_csv(r, cfg));
            write_sidecar(cfg.output_dir / "disparity.json", "disparity", cfg, r.dataset_hash, r.rows.size(),
                          r.skipped, r.warnings);
            print_summary("disparity", cfg, r.rows.size(), r.skipped.size());
        } else if (index->parsed()) {
            const DatasetIndex idx = index_dataset(root);
            nlohmann::ordered_json j;
            j["root"] = idx.root.generic_string();
            j["integrity_hash"] = idx.integrity_hash;
            j["entries"] = nlohmann::json::array();
            for (const auto& e : idx.entries) {
                nlohmann::ordered_json je;
                je["id"] = e.id;
                je["image"] = e.image_path.generic_string();
                je["height"] = e.height;
                je["width"] = e.width;
                je["mask_areas"] = nlohmann::json::array();
                for (const auto& m : e.masks) je["mask_areas"].push_back(m.area);
                j["entries"].push_back(je);
            }
            j["warnings"] = idx.warnings;
            std::cout << j.dump() << '\n';
        } else if (init->parsed()) {
            save_weights(make_random_network(init_seed), out);
        }
    } catch (const ConfigError& e) {
        return report({2, "config"}, e.what());
    } catch (const IoError& e) {
        return report({3, "io"}, e.what());
    } catch (const DatasetError& e) {
        return report({3, "dataset"}, e.what());
    } catch (const CheckpointFormatError& e) {
        return report({4, "checkpoint"}, e.what());
    } catch (const EmptyRegionError& e) {
        return report({5, "empty_region"}, e.what());
    } catch (const ResourceError& e) {
        return report({6, "resource"}, e.what());
    } catch (const InvalidArgument& e) {
        return report({7, "invalid_argument"}, e.what());
    } catch (const std::exception& e) {
        return report({1, "internal"}, e.what());
    }
    return 0;
}
