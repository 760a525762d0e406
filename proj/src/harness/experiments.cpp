#include "pcstyle/experiments.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pcstyle/errors.hpp"
#include "pcstyle/format.hpp"
#include "pcstyle/image_io.hpp"
#include "pcstyle/parallel.hpp"

namespace pcstyle {
namespace {

namespace fs = std::filesystem;

void require_path(const fs::path& p, const char* key) {
    if (p.empty()) throw ConfigError(std::string("config key '") + key + "' is required for this command");
}

ImageBuffer load_capped(const fs::path& path, int max_side) {
    const ImageBuffer img = to_rgb(read_image(path));
    const auto [h, w] = capped_dims(img.height, img.width, max_side);
    return resize_image_area(img, h, w);
}

std::string metric_cells(const MetricReport& r) {
    return format_real(r.gray_emd) + ',' + format_real(r.sliced_emd) + ',' + format_real(r.style_loss) + ',' +
           format_real(r.boundary_grad_magnitude) + ',' + format_real(r.boundary_color_contrast);
}

std::string row_prefix(const RunConfig& config) {
    return std::string(kReportSchemaVersion) + ',' + config.hash() + ',' + std::to_string(config.seed) + ',';
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

StyleNetwork load_network(const std::string& weights, bool renormalize) {
    if (weights.empty())
        throw ConfigError(std::string("no weights: set the 'weights' key, --weights, or ") + kWeightsEnv);
    StyleNetwork net;
    if (weights.starts_with("random:")) {
        const std::string digits = weights.substr(7);
        std::uint64_t seed = 0;
        try {
            std::size_t used = 0;
            seed = std::stoull(digits, &used);
            if (used != digits.size()) throw std::invalid_argument(digits);
        } catch (const std::exception&) {
            throw ConfigError("weights '" + weights + "': expected random:<unsigned seed>");
        }
        net = make_random_network(seed);
    } else {
        net = load_weights(weights);
    }
    return renormalize ? net : with_renormalize(std::move(net), false);
}

ImageBuffer run_method(const StyleNetwork& network, Method method, const ImageBuffer& content,
                       const ImageBuffer& style, const MaskMap& mask, const BlendConfig& blend) {
    switch (method) {
    case Method::partialconv: return stylize_masked(network, {content, style, mask, blend});
    case Method::style_then_mask: return style_then_mask(network, content, style, mask);
    case Method::mask_then_style: return mask_then_style(network, content, style, mask);
    }
    throw InvalidArgument("run_method: unknown method");
}

RegionDisparity region_disparity_emd(const ImageBuffer& content, const MaskMap& mask, int bins, int n_projections,
                                     std::uint64_t seed) {
    const MaskMap all = MaskMap::ones(content.height, content.width);
    return {gray_emd(content, all, content, mask, bins),
            sliced_emd(masked_pixels(content, all), masked_pixels(content, mask), n_projections, seed)};
}

ExperimentInputs ExperimentInputs::load(const RunConfig& config, bool with_styles) {
    require_path(config.dataset_root, "dataset_root");
    ExperimentInputs in;
    in.index = index_dataset(config.dataset_root);
    if (config.max_images > 0 && in.index.entries.size() > static_cast<std::size_t>(config.max_images))
        in.index.entries.resize(static_cast<std::size_t>(config.max_images));
    if (with_styles) {
        require_path(config.style_dir, "style_dir");
        in.style_paths = list_images(config.style_dir);
        for (const auto& p : in.style_paths) in.styles.push_back(load_capped(p, config.max_side));
    }
    return in;
}

PreparedItem ExperimentInputs::prepare(std::size_t entry, const RunConfig& config) const {
    const DatasetEntry& e = index.entries.at(entry);
    auto mask = select_random_mask(e, config.min_mask_area_fraction, config.seed);
    if (!mask)
        throw EmptyRegionError("no mask covers at least " + format_real(config.min_mask_area_fraction) +
                               " of the image");
    const ImageBuffer raw = to_rgb(read_image(e.image_path));
    if (raw.height != e.height || raw.width != e.width)
        throw IoError("image size differs from its annotation (" + std::to_string(raw.height) + "x" +
                      std::to_string(raw.width) + " vs " + std::to_string(e.height) + "x" + std::to_string(e.width) + ")");
    const auto [h, w] = capped_dims(e.height, e.width, config.max_side);
    PreparedItem item{e.id, resize_image_area(raw, h, w), resize_mask_nearest(*mask, h, w), -1};
    if (item.mask.count_above(0.5f) == 0) throw EmptyRegionError("mask vanishes after resizing");
    if (!styles.empty())
        item.style_index = static_cast<int>(uniform_index(styles.size(), config.seed, "style:" + e.id));
    return item;
}

std::string ExperimentInputs::style_id(int style_index) const {
    if (style_index < 0 || static_cast<std::size_t>(style_index) >= style_paths.size()) return "";
    return style_paths[static_cast<std::size_t>(style_index)].stem().string();
}

Tab2Result run_tab2(const RunConfig& config, const StyleNetwork& network) {
    config.validate();
    const ExperimentInputs in = ExperimentInputs::load(config, true);
    const std::size_t n = in.index.entries.size();

    // Style Grams are shared by every output scored against the same style.
    std::vector<int> style_of(n);
    std::vector<std::optional<StyleGrams>> grams(in.styles.size());
    for (std::size_t i = 0; i < n; ++i) {
        style_of[i] = static_cast<int>(uniform_index(in.styles.size(), config.seed, "style:" + in.index.entries[i].id));
        auto& g = grams[static_cast<std::size_t>(style_of[i])];
        if (!g) g = style_grams(network, in.styles[static_cast<std::size_t>(style_of[i])]);
    }

    const MetricOptions options{config.bins, config.n_projections, config.seed};
    struct Slot {
        std::vector<Tab2Row> rows;
        std::string error;
    };
    std::vector<Slot> slots(n);
    parallel_for(n, config.workers, [&](std::size_t i) {
        try {
            const PreparedItem item = in.prepare(i, config);
            const ImageBuffer& style = in.styles[static_cast<std::size_t>(item.style_index)];
            std::vector<Tab2Row> rows;
            std::vector<ImageBuffer> outputs;
            for (Method m : config.methods) {
                outputs.push_back(run_method(network, m, item.content, style, item.mask, config.blend));
                Tab2Row row{item.id, in.style_id(item.style_index), m,
                            compute_metrics(network, outputs.back(), item.mask, style, options,
                                            &*grams[static_cast<std::size_t>(item.style_index)])};
                row.report.metadata = {{"image", item.id},
                                       {"mask", "seed:" + std::to_string(config.seed)},
                                       {"style", row.style_id},
                                       {"config_hash", config.hash()}};
                rows.push_back(std::move(row));
            }
            // Outputs are written only once every method succeeded, keeping skips symmetric.
            if (!config.output_dir.empty())
                for (std::size_t k = 0; k < rows.size(); ++k)
                    write_png(config.output_dir / "images" /
                                  (item.id + "__" + std::string(method_name(rows[k].method)) + ".png"),
                              outputs[k]);
            slots[i].rows = std::move(rows);
        } catch (const std::exception& e) {
            slots[i].rows.clear();
            slots[i].error = e.what();
        }
    });

    Tab2Result result;
    result.dataset_hash = in.index.integrity_hash;
    result.warnings = in.index.warnings;
    std::vector<MetricReport> sums(config.methods.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!slots[i].error.empty()) {
            result.skipped.push_back({in.index.entries[i].id, slots[i].error});
            continue;
        }
        ++result.evaluated;
        for (std::size_t k = 0; k < slots[i].rows.size(); ++k) {
            const MetricReport& r = slots[i].rows[k].report;
            sums[k].gray_emd += r.gray_emd;
            sums[k].sliced_emd += r.sliced_emd;
            sums[k].style_loss += r.style_loss;
            sums[k].boundary_grad_magnitude += r.boundary_grad_magnitude;
            sums[k].boundary_color_contrast += r.boundary_color_contrast;
            result.rows.push_back(std::move(slots[i].rows[k]));
        }
    }
    if (result.evaluated > 0) {
        const double d = static_cast<double>(result.evaluated);
        for (std::size_t k = 0; k < config.methods.size(); ++k) {
            MetricReport m = sums[k];
            m.gray_emd /= d;
            m.sliced_emd /= d;
            m.style_loss /= d;
            m.boundary_grad_magnitude /= d;
            m.boundary_color_contrast /= d;
            m.metadata = {{"image", "__mean__"}, {"config_hash", config.hash()}};
            result.means.emplace_back(config.methods[k], m);
        }
    }
    return result;
}

DisparityResult run_disparity(const RunConfig& config) {
    config.validate();
    const ExperimentInputs in = ExperimentInputs::load(config, false);
    const std::size_t n = in.index.entries.size();
    struct Slot {
        std::optional<DisparityRow> row;
        std::string error;
    };
    std::vector<Slot> slots(n);
    parallel_for(n, config.workers, [&](std::size_t i) {
        try {
            const PreparedItem item = in.prepare(i, config);
            const double frac = static_cast<double>(item.mask.count_above(0.5f)) /
                                (static_cast<double>(item.mask.height) * item.mask.width);
            slots[i].row = DisparityRow{
                item.id, frac, region_disparity_emd(item.content, item.mask, config.bins, config.n_projections, config.seed)};
        } catch (const std::exception& e) {
            slots[i].error = e.what();
        }
    });
    DisparityResult result;
    result.dataset_hash = in.index.integrity_hash;
    result.warnings = in.index.warnings;
    for (std::size_t i = 0; i < n; ++i) {
        if (!slots[i].row) {
            result.skipped.push_back({in.index.entries[i].id, slots[i].error});
            continue;
        }
        result.mean.gray += slots[i].row->emd.gray;
        result.mean.sliced += slots[i].row->emd.sliced;
        result.rows.push_back(*slots[i].row);
    }
    if (!result.rows.empty()) {
        result.mean.gray /= static_cast<double>(result.rows.size());
        result.mean.sliced /= static_cast<double>(result.rows.size());
    }
    return result;
}

AblationRun run_dataset_ablation(const RunConfig& config, const StyleNetwork& network) {
    config.validate();
    const ExperimentInputs in = ExperimentInputs::load(config, true);
    auto load = [&](std::size_t i) {
        PreparedItem item = in.prepare(i, config);
        return AblationItem{item.id, std::move(item.content), std::move(item.mask),
                            in.styles[static_cast<std::size_t>(item.style_index)]};
    };
    AblationRun run;
    run.grid = run_ablation(network, in.index.entries.size(), load, config.seed, config.blend.feather_kernel_px,
                            config.workers);
    run.dataset_hash = in.index.integrity_hash;
    run.warnings = in.index.warnings;
    return run;
}

std::string tab2_csv(const Tab2Result& result, const RunConfig& config) {
    std::ostringstream os;
    os << "schema_version,config_hash,seed,image_id,style_id,method,gray_emd,sliced_emd,style_loss,"
          "boundary_grad_magnitude,boundary_color_contrast\n";
    const std::string prefix = row_prefix(config);
    for (const auto& r : result.rows)
        os << prefix << r.image_id << ',' << r.style_id << ',' << method_name(r.method) << ',' << metric_cells(r.report)
           << '\n';
    for (const auto& [m, report] : result.means)
        os << prefix << "__mean__,," << method_name(m) << ',' << metric_cells(report) << '\n';
    return os.str();
}

std::string disparity_csv(const DisparityResult& result, const RunConfig& config) {
    std::ostringstream os;
    os << "schema_version,config_hash,seed,image_id,method,mask_area_fraction,gray_emd,sliced_emd\n";
    const std::string prefix = row_prefix(config);
    for (const auto& r : result.rows)
        os << prefix << r.image_id << ",disparity," << format_real(r.area_fraction) << ',' << format_real(r.emd.gray)
           << ',' << format_real(r.emd.sliced) << '\n';
    if (!result.rows.empty())
        os << prefix << "__mean__,disparity,," << format_real(result.mean.gray) << ','
           << format_real(result.mean.sliced) << '\n';
    return os.str();
}

std::string ablation_rows_csv(const AblationGrid& grid, const RunConfig& config) {
    std::ostringstream os;
    os << "schema_version,config_hash,seed,column,method,feathering_before,expansion_during,feathering_decoder,"
          "items,grad_magnitude,color_contrast\n";
    const std::string prefix = row_prefix(config);
    for (std::size_t k = 0; k < grid.columns.size(); ++k) {
        const auto& c = grid.columns[k];
        std::string label;
        if (c.config.feather_before) label += 'F';
        if (c.config.expand_during) label += 'E';
        if (c.config.content_feather_decoder) label += 'D';
        if (label.empty()) label = "none";
        os << prefix << k + 1 << ",partialconv:" << label << ',' << c.config.feather_before << ','
           << c.config.expand_during << ',' << c.config.content_feather_decoder << ',' << grid.evaluated << ','
           << format_real(c.grad_magnitude) << ',' << format_real(c.color_contrast) << '\n';
    }
    return os.str();
}

std::string run_sidecar_json(const std::string& kind, const RunConfig& config, const std::string& dataset_hash,
                             const std::string& network_source, std::size_t evaluated,
                             const std::vector<SkippedItem>& skipped, const std::vector<std::string>& warnings) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = kind;
    j["config_hash"] = config.hash();
    j["config"] = config.canonical();
    j["output_dir"] = config.output_dir.generic_string();
    j["workers"] = config.workers;
    j["dataset_hash"] = dataset_hash;
    j["network_source"] = network_source;
    j["evaluated"] = evaluated;
    j["skipped"] = nlohmann::ordered_json::array();
    for (const auto& s : skipped) j["skipped"].push_back({{"id", s.id}, {"reason", s.reason}});
    j["warnings"] = warnings;
    j["timestamp"] = utc_timestamp();
    return j.dump(2) + "\n";
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace pcstyle
