#pragma once

#include <vector>

#include "pcstyle/network.hpp"
#include "pcstyle/tensor.hpp"

namespace pcstyle {

/// Input limits; larger images raise ResourceError.
inline constexpr int kMaxImageSide = 4096;
inline constexpr long long kMaxImagePixels = 2048LL * 2048LL;
/// Smallest side the encoder's two 2x2 poolings accept.
inline constexpr int kMinImageSide = 4;
/// Transform-stage mask binarization threshold.
inline constexpr float kTransformMaskThreshold = 0.5f;

struct BlendConfig {
    bool feather_before = false;
    int feather_kernel_px = 5;
    bool expand_during = false;
    bool content_feather_decoder = false;

    /// Throws InvalidArgument unless feather_kernel_px is odd and >= 1.
    void validate() const;
    bool any() const { return feather_before || expand_during || content_feather_decoder; }
    bool operator==(const BlendConfig&) const = default;
};

struct StylizeRequest {
    ImageBuffer content;
    ImageBuffer style;
    MaskMap mask;
    BlendConfig blend;

    /// Checks images, mask range and dims, blend config and size limits.
    void validate() const;
};

/// Channel-space affine map y = matrix * (x - content_mean) + offset + style_mean.
/// `offset` carries the transform module's compress/unzip biases.
struct StyleTransform {
    int channels = 0;
    std::vector<float> matrix;  // [C][C], row-major
    std::vector<float> content_mean;
    std::vector<float> style_mean;
    std::vector<float> offset;

    static StyleTransform identity(int channels);
    bool all_finite() const;
};

/// Style-side output of the transform module; depends only on the style image.
struct StyleStatistics {
    std::vector<float> mean;    // [C]
    std::vector<float> matrix;  // [m][m], row-major
};

/// Throws ResourceError above the size limits, InvalidArgument below the minimum.
void check_image_limits(const ImageBuffer& image, const char* what);

/// Grayscale images are replicated to three channels; RGB passes through.
ImageBuffer to_rgb(const ImageBuffer& image);

/// Runs the partial-convolution encoder. One MaskedFeature per encoder stage,
/// shallowest first; stored masks never include the expansion.
std::vector<MaskedFeature> encode(const StyleNetwork& network, const ImageBuffer& image, const MaskMap& mask,
                                  const BlendConfig& blend);

/// Encoder pass confined to `region` (binarized at 0.5): after every convolution the
/// mask is reset to the region pooled to that level and features outside it are 0,
/// so no stage depends on positions outside the region. Stage masks are those regions.
std::vector<MaskedFeature> encode_within(const StyleNetwork& network, const ImageBuffer& image, const MaskMap& region);

/// Style statistics over the style feature's valid positions (mask >= 0.5).
StyleStatistics style_statistics(const StyleNetwork& network, const MaskedFeature& style_feat);

/// Content statistics over the transform-stage mask binarized at 0.5, combined
/// with the style statistics. Throws EmptyRegionError if the binarized mask is empty.
StyleTransform compute_style_transform(const StyleNetwork& network, const MaskedFeature& content_feat,
                                       const StyleStatistics& style);
StyleTransform compute_style_transform(const StyleNetwork& network, const MaskedFeature& content_feat,
                                       const MaskedFeature& style_feat);

/// Applies `t` where mask > 0; other positions are 0. Mask is unchanged.
MaskedFeature apply_transform(const MaskedFeature& content_feat, const StyleTransform& t);

/// Decoder activations of the unstylized content, one per blend point, for content feathering.
std::vector<MaskedFeature> content_decoder_stages(const StyleNetwork& network, const ImageBuffer& content);

/// Decoder output in pixel units, before clamping.
FeatureMap decode_raw(const StyleNetwork& network, const MaskedFeature& feat, const MaskMap& original_mask,
                      const std::vector<MaskedFeature>* content_stages, const BlendConfig& blend);
/// decode_raw clamped to [0,1].
ImageBuffer decode(const StyleNetwork& network, const MaskedFeature& feat, const MaskMap& original_mask,
                   const std::vector<MaskedFeature>* content_stages, const BlendConfig& blend);

/// Intermediate products of one stylize_masked call.
struct StylizeTrace {
    ImageBuffer output;
    ImageBuffer decoded;      // clamped decoder output before compositing
    MaskMap composite_mask;   // possibly feathered pixel mask
    MaskedFeature transformed;
};

/// Precomputed inputs several stylizations of one (content, style) pair can share.
/// Null members are computed on demand. The results are identical either way.
struct StylizeShared {
    const MaskedFeature* style_feature = nullptr;                  // encode_style(style)
    const std::vector<MaskedFeature>* content_stages = nullptr;   // content_decoder_stages(content)
};

StylizeTrace stylize_masked_traced(const StyleNetwork& network, const StylizeRequest& request,
                                   const StylizeShared& shared = {});
ImageBuffer stylize_masked(const StyleNetwork& network, const StylizeRequest& request);

/// Stylizes the whole image, then composites with the mask.
ImageBuffer style_then_mask(const StyleNetwork& network, const ImageBuffer& content, const ImageBuffer& style,
                            const MaskMap& mask);
/// Blacks out the background, stylizes the whole image, then composites.
ImageBuffer mask_then_style(const StyleNetwork& network, const ImageBuffer& content, const ImageBuffer& style,
                            const MaskMap& mask);

// --- building blocks shared with the multi-mask pipeline -------------------------

/// Deepest-stage style encoding (all-ones mask).
MaskedFeature encode_style(const StyleNetwork& network, const ImageBuffer& style);
/// Whole-image stylization with an all-ones mask and no blending, clamped.
ImageBuffer stylize_unmasked(const StyleNetwork& network, const ImageBuffer& content, const ImageBuffer& style);

} // namespace pcstyle
