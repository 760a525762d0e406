#include "pcstyle/multimask.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "pcstyle/errors.hpp"
#include "pcstyle/hash.hpp"
#include "pcstyle/masked_ops.hpp"

namespace pcstyle {
namespace {

/// Sum in ascending order so the result does not depend on item order.
float ordered_sum(std::vector<float>& terms) {
    if (terms.size() > 2) std::sort(terms.begin(), terms.end());
    float s = 0.0f;
    for (float t : terms) s += t;
    return s;
}

std::uint64_t image_hash(const ImageBuffer& img) {
    Fnv1a h;
    h.update_value(img.height);
    h.update_value(img.width);
    h.update_value(img.channels);
    h.update(std::as_bytes(std::span(img.values)));
    return h.digest();
}

} // namespace

MaskedFeature merge_masked_features(const std::vector<MaskedFeature>& items) {
    if (items.empty()) throw InvalidArgument("merge_masked_features: no items");
    const auto& first = items.front().features;
    for (std::size_t i = 0; i < items.size(); ++i) {
        items[i].check_consistent("merge_masked_features");
        if (!items[i].features.same_shape(first))
            throw InvalidArgument("merge_masked_features: item " + std::to_string(i) + " has different dims");
    }
    const std::size_t n = first.plane_size();
    const std::size_t k = items.size();
    MaskedFeature out{FeatureMap(first.channels, first.height, first.width), MaskMap(first.height, first.width)};
    std::vector<float> terms(k);
    std::vector<float> denom(n, 0.0f);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < k; ++i) terms[i] = items[i].mask.values[p];
        const float total = ordered_sum(terms);
        out.mask.values[p] = std::min(total, 1.0f);
        denom[p] = total > 0.0f ? std::max(total, 1.0f) : 0.0f;
    }
    for (int c = 0; c < first.channels; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * n;
        for (std::size_t p = 0; p < n; ++p) {
            if (denom[p] == 0.0f) continue;
            for (std::size_t i = 0; i < k; ++i) terms[i] = items[i].mask.values[p] * items[i].features.values[base + p];
            out.features.values[base + p] = ordered_sum(terms) / denom[p];
        }
    }
    return out;
}

MultiStylizeTrace stylize_multi_traced(const StyleNetwork& network, const ImageBuffer& content_in,
                                       const std::vector<RegionSpec>& regions, const BlendConfig& blend) {
    if (regions.empty()) throw InvalidArgument("stylize_multi: region list is empty");
    content_in.validate("stylize_multi.content");
    check_image_limits(content_in, "content");
    blend.validate();
    const ImageBuffer content = to_rgb(content_in);

    std::vector<MaskMap> pixel_masks;
    std::string empty_regions;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto& r = regions[i];
        const std::string where = "stylize_multi.region[" + std::to_string(i) + "]";
        if (!content.same_dims(r.mask)) throw InvalidArgument(where + ": mask dims must equal content dims");
        if (!r.mask.is_valid()) throw InvalidArgument(where + ": mask values must be finite and in [0,1]");
        r.style.validate((where + ".style").c_str());
        check_image_limits(r.style, "style");
        MaskMap m = blend.feather_before ? feather_mask(binarize(r.mask, 0.5f), blend.feather_kernel_px) : r.mask;
        if (m.count_above(0.0f) == 0) empty_regions += (empty_regions.empty() ? "" : ", ") + std::to_string(i);
        pixel_masks.push_back(std::move(m));
    }
    if (!empty_regions.empty()) throw EmptyRegionError("stylize_multi: empty mask in region(s) " + empty_regions);

    std::map<std::uint64_t, std::pair<const ImageBuffer*, StyleStatistics>> style_cache;
    MultiStylizeTrace trace;
    std::string failures;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        try {
            const ImageBuffer& style = regions[i].style;
            const std::uint64_t key = image_hash(style);
            auto it = style_cache.find(key);
            if (it == style_cache.end() || !(*it->second.first == style))
                it = style_cache.insert_or_assign(key, std::pair{&style, style_statistics(network, encode_style(network, style))}).first;
            const auto stages = encode(network, content, pixel_masks[i], blend);
            const StyleTransform t = compute_style_transform(network, stages.back(), it->second.second);
            trace.region_features.push_back(apply_transform(stages.back(), t));
        } catch (const EmptyRegionError& e) {
            failures += (failures.empty() ? "" : "; ") + ("region " + std::to_string(i) + ": " + e.what());
        }
    }
    if (!failures.empty()) throw EmptyRegionError("stylize_multi: " + failures);

    trace.merged = merge_masked_features(trace.region_features);
    trace.composite_mask = MaskMap(content.height, content.width);
    for (std::size_t p = 0; p < trace.composite_mask.size(); ++p) {
        std::vector<float> terms;
        for (const auto& m : pixel_masks) terms.push_back(m.values[p]);
        trace.composite_mask.values[p] = std::min(ordered_sum(terms), 1.0f);
    }

    std::vector<MaskedFeature> content_stages;
    if (blend.content_feather_decoder) content_stages = content_decoder_stages(network, content);
    trace.decoded = decode(network, trace.merged, trace.composite_mask,
                           blend.content_feather_decoder ? &content_stages : nullptr, blend);
    trace.output = alpha_composite(trace.decoded, content, trace.composite_mask);
    return trace;
}

ImageBuffer stylize_multi(const StyleNetwork& network, const ImageBuffer& content,
                          const std::vector<RegionSpec>& regions, const BlendConfig& blend) {
    return stylize_multi_traced(network, content, regions, blend).output;
}

} // namespace pcstyle
