#pragma once

#include <vector>

#include "pcstyle/stylize.hpp"

namespace pcstyle {

/// One mask paired with one style image; masks share the content dims.
struct RegionSpec {
    MaskMap mask;
    ImageBuffer style;
};

/// merged(p) = sum_i m_i(p) f_i(p) / max(sum_i m_i(p), 1) where sum_i m_i(p) > 0, else 0;
/// merged mask = min(sum_i m_i, 1).
MaskedFeature merge_masked_features(const std::vector<MaskedFeature>& items);

struct MultiStylizeTrace {
    ImageBuffer output;
    ImageBuffer decoded;
    MaskMap composite_mask;                     // min(sum of per-region pixel masks, 1)
    std::vector<MaskedFeature> region_features;  // transformed, at the transform stage
    MaskedFeature merged;
};

/// Per-region encode + transform, one merge at the transform stage, one decode.
/// Throws InvalidArgument for an empty list or mismatched dims, and a single
/// EmptyRegionError naming every region index whose mask is empty.
MultiStylizeTrace stylize_multi_traced(const StyleNetwork& network, const ImageBuffer& content,
                                       const std::vector<RegionSpec>& regions, const BlendConfig& blend);
ImageBuffer stylize_multi(const StyleNetwork& network, const ImageBuffer& content,
                          const std::vector<RegionSpec>& regions, const BlendConfig& blend);

} // namespace pcstyle
