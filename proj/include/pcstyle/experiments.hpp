#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcstyle/ablation.hpp"
#include "pcstyle/dataset.hpp"
#include "pcstyle/metrics.hpp"
#include "pcstyle/run_config.hpp"

namespace pcstyle {

/// "random:<seed>" builds the seeded random network; anything else is a checkpoint path.
StyleNetwork load_network(const std::string& weights, bool renormalize = true);

/// Output of one method on a prepared item. The mask is the item's own binary mask.
ImageBuffer run_method(const StyleNetwork& network, Method method, const ImageBuffer& content,
                       const ImageBuffer& style, const MaskMap& mask, const BlendConfig& blend);

struct RegionDisparity {
    double gray = 0.0;
    double sliced = 0.0;
};

/// Gray and sliced EMD between the whole image and its masked region.
RegionDisparity region_disparity_emd(const ImageBuffer& content, const MaskMap& mask, int bins, int n_projections,
                                     std::uint64_t seed);

struct SkippedItem {
    std::string id;
    std::string reason;
};

/// One dataset entry after mask selection and resizing to the configured cap.
struct PreparedItem {
    std::string id;
    ImageBuffer content;
    MaskMap mask;
    /// Index into the style list, or -1 when styles were not requested.
    int style_index = -1;
};

/// Dataset view shared by the experiment runners: the index truncated to
/// max_images, plus the style images resized to the cap.
struct ExperimentInputs {
    DatasetIndex index;
    std::vector<std::filesystem::path> style_paths;
    std::vector<ImageBuffer> styles;

    static ExperimentInputs load(const RunConfig& config, bool with_styles);
    /// Throws EmptyRegionError when the entry has no mask above the area floor.
    PreparedItem prepare(std::size_t entry, const RunConfig& config) const;
    std::string style_id(int style_index) const;
};

struct Tab2Row {
    std::string image_id;
    std::string style_id;
    Method method = Method::partialconv;
    MetricReport report;
};

struct Tab2Result {
    std::vector<Tab2Row> rows;  // dataset order, then config method order
    std::vector<std::pair<Method, MetricReport>> means;
    std::vector<SkippedItem> skipped;
    std::size_t evaluated = 0;
    std::string dataset_hash;
    std::vector<std::string> warnings;
};

/// Per image: select a mask, pick a style, run every configured method and score
/// it. An item failing for any method is skipped for all of them. When
/// output_dir is set, each output is written as images/<id>__<method>.png.
Tab2Result run_tab2(const RunConfig& config, const StyleNetwork& network);

struct DisparityRow {
    std::string image_id;
    double area_fraction = 0.0;
    RegionDisparity emd;
};

struct DisparityResult {
    std::vector<DisparityRow> rows;
    RegionDisparity mean;
    std::vector<SkippedItem> skipped;
    std::string dataset_hash;
    std::vector<std::string> warnings;
};

DisparityResult run_disparity(const RunConfig& config);

struct AblationRun {
    AblationGrid grid;
    std::string dataset_hash;
    std::vector<std::string> warnings;
};

/// run_ablation over the configured dataset; mask selection failures count as failed items.
AblationRun run_dataset_ablation(const RunConfig& config, const StyleNetwork& network);

// --- reports ---------------------------------------------------------------------

inline constexpr const char* kReportSchemaVersion = "pcstyle-report/1";

std::string tab2_csv(const Tab2Result& result, const RunConfig& config);
std::string disparity_csv(const DisparityResult& result, const RunConfig& config);
/// One row per ablation column with its flags and both metrics.
std::string ablation_rows_csv(const AblationGrid& grid, const RunConfig& config);

/// Run metadata as JSON text: schema, kind, config and its hash, dataset hash,
/// network source, counts, skips, warnings and the wall-clock timestamp.
std::string run_sidecar_json(const std::string& kind, const RunConfig& config, const std::string& dataset_hash,
                             const std::string& network_source, std::size_t evaluated,
                             const std::vector<SkippedItem>& skipped, const std::vector<std::string>& warnings);

/// Creates parent directories; throws IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace pcstyle
