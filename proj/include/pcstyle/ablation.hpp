#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcstyle/stylize.hpp"

namespace pcstyle {

struct AblationItem {
    std::string id;
    ImageBuffer content;
    MaskMap mask;
    ImageBuffer style;
};

struct AblationColumn {
    BlendConfig config;
    double grad_magnitude = 0.0;
    double color_contrast = 0.0;
};

inline constexpr std::size_t kAblationConfigCount = 8;

struct AblationFailure {
    std::string id;
    std::string message;
};

/// Columns in table order: F, E, D, FE, FD, ED, FED, none
/// (F feather before, E expansion during, D content feathering in the decoder).
struct AblationGrid {
    std::array<AblationColumn, kAblationConfigCount> columns;
    std::uint64_t seed = 0;
    std::size_t evaluated = 0;
    std::vector<AblationFailure> failures;
};

/// The eight blend configurations in column order, sharing `feather_kernel_px`.
std::array<BlendConfig, kAblationConfigCount> ablation_configs(int feather_kernel_px = 5);

/// Per-item boundary metrics for every configuration, measured at the border of
/// the item's own mask. Optionally returns the eight outputs.
std::array<AblationColumn, kAblationConfigCount> ablate_item(const StyleNetwork& network, const AblationItem& item,
                                                             int feather_kernel_px = 5,
                                                             std::vector<ImageBuffer>* outputs = nullptr);

/// Means over the items that succeeded in every configuration. An item failing
/// in any configuration is excluded from all of them and listed in `failures`.
/// Throws InvalidArgument on an empty dataset.
AblationGrid run_ablation(const StyleNetwork& network, const std::vector<AblationItem>& dataset, std::uint64_t seed,
                          int feather_kernel_px = 5, int workers = 1);

/// Same, with items produced on demand by `load(i)` for i in [0, count); a throwing
/// load counts as a failed item. Lets large datasets run without holding every image.
AblationGrid run_ablation(const StyleNetwork& network, std::size_t count,
                          const std::function<AblationItem(std::size_t)>& load, std::uint64_t seed,
                          int feather_kernel_px = 5, int workers = 1);

/// Table layout: a header row of column numbers, three 0/1 rows for the
/// techniques, then the two metric rows.
std::string ablation_csv(const AblationGrid& grid);

} // namespace pcstyle
