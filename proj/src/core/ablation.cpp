#include "pcstyle/ablation.hpp"

#include <optional>
#include <sstream>

#include "pcstyle/errors.hpp"
#include "pcstyle/format.hpp"
#include "pcstyle/metrics.hpp"
#include "pcstyle/parallel.hpp"

namespace pcstyle {

std::array<BlendConfig, kAblationConfigCount> ablation_configs(int feather_kernel_px) {
    auto make = [feather_kernel_px](bool f, bool e, bool d) { return BlendConfig{f, feather_kernel_px, e, d}; };
    return {make(true, false, false), make(false, true, false), make(false, false, true), make(true, true, false),
            make(true, false, true),  make(false, true, true),  make(true, true, true),   make(false, false, false)};
}

std::array<AblationColumn, kAblationConfigCount> ablate_item(const StyleNetwork& network, const AblationItem& item,
                                                             int feather_kernel_px, std::vector<ImageBuffer>* outputs) {
    const auto configs = ablation_configs(feather_kernel_px);
    StylizeRequest{item.content, item.style, item.mask, configs.front()}.validate();
    if (item.mask.count_above(0.0f) == 0) throw EmptyRegionError("ablation item '" + item.id + "': mask is empty");
    const MaskedFeature style_feature = encode_style(network, item.style);
    const auto content_stages = content_decoder_stages(network, to_rgb(item.content));
    const StylizeShared shared{&style_feature, &content_stages};

    std::array<AblationColumn, kAblationConfigCount> cols;
    if (outputs) outputs->clear();
    for (std::size_t k = 0; k < configs.size(); ++k) {
        const ImageBuffer out =
            stylize_masked_traced(network, {item.content, item.style, item.mask, configs[k]}, shared).output;
        cols[k] = {configs[k], boundary_gradient_magnitude(out, item.mask), boundary_color_contrast(out, item.mask)};
        if (outputs) outputs->push_back(out);
    }
    return cols;
}

AblationGrid run_ablation(const StyleNetwork& network, const std::vector<AblationItem>& dataset, std::uint64_t seed,
                          int feather_kernel_px, int workers) {
    return run_ablation(network, dataset.size(), [&](std::size_t i) { return dataset[i]; }, seed, feather_kernel_px,
                        workers);
}

AblationGrid run_ablation(const StyleNetwork& network, std::size_t count,
                          const std::function<AblationItem(std::size_t)>& load, std::uint64_t seed,
                          int feather_kernel_px, int workers) {
    if (count == 0) throw InvalidArgument("run_ablation: dataset is empty");
    BlendConfig{false, feather_kernel_px, false, false}.validate();

    struct Slot {
        std::string id;
        std::optional<std::array<AblationColumn, kAblationConfigCount>> cols;
        std::string error;
    };
    std::vector<Slot> slots(count);
    parallel_for(count, workers, [&](std::size_t i) {
        try {
            const AblationItem item = load(i);
            slots[i].id = item.id;
            slots[i].cols = ablate_item(network, item, feather_kernel_px);
        } catch (const std::exception& e) {
            if (slots[i].id.empty()) slots[i].id = "#" + std::to_string(i);
            slots[i].error = e.what();
        }
    });

    AblationGrid grid;
    grid.seed = seed;
    const auto configs = ablation_configs(feather_kernel_px);
    std::array<double, kAblationConfigCount> grad{}, contrast{};
    // Summed in dataset order so the means do not depend on scheduling.
    for (const auto& slot : slots) {
        if (!slot.cols) {
            grid.failures.push_back({slot.id, slot.error});
            continue;
        }
        ++grid.evaluated;
        for (std::size_t k = 0; k < kAblationConfigCount; ++k) {
            grad[k] += (*slot.cols)[k].grad_magnitude;
            contrast[k] += (*slot.cols)[k].color_contrast;
        }
    }
    for (std::size_t k = 0; k < kAblationConfigCount; ++k) {
        grid.columns[k].config = configs[k];
        if (grid.evaluated > 0) {
            grid.columns[k].grad_magnitude = grad[k] / static_cast<double>(grid.evaluated);
            grid.columns[k].color_contrast = contrast[k] / static_cast<double>(grid.evaluated);
        }
    }
    return grid;
}

std::string ablation_csv(const AblationGrid& grid) {
    std::ostringstream os;
    os << "feature";
    for (std::size_t k = 0; k < kAblationConfigCount; ++k) os << ',' << k + 1;
    os << '\n';
    auto flag_row = [&](const char* name, bool BlendConfig::*field) {
        os << name;
        for (const auto& c : grid.columns) os << ',' << (c.config.*field ? 1 : 0);
        os << '\n';
    };
    flag_row("feathering_before", &BlendConfig::feather_before);
    flag_row("expansion_during", &BlendConfig::expand_during);
    flag_row("feathering_decoder", &BlendConfig::content_feather_decoder);
    os << "grad_magnitude";
    for (const auto& c : grid.columns) os << ',' << format_real(c.grad_magnitude);
    os << "\ncolor_contrast";
    for (const auto& c : grid.columns) os << ',' << format_real(c.color_contrast);
    os << '\n';
    return os.str();
}

} // namespace pcstyle
