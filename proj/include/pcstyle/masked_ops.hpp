#pragma once

#include <vector>

#include "pcstyle/tensor.hpp"

namespace pcstyle {

/// Weights and geometry of one convolution layer.
///
/// `padding` is zero padding whose positions count as holes (mask 0): with
/// `renormalize` set, border windows are rescaled by their valid fraction
/// exactly like interior windows that straddle a mask boundary.
struct ConvSpec {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 1;
    int kernel_w = 1;
    std::vector<float> weights;  // [out][in][kh][kw]
    std::vector<float> bias;     // [out]
    int stride = 1;
    int padding = 0;
    bool renormalize = true;

    float weight(int o, int i, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + ky) * kernel_w + kx];
    }

    int output_height(int in_h) const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
    int output_width(int in_w) const { return (in_w + 2 * padding - kernel_w) / stride + 1; }

    /// Throws InvalidArgument on inconsistent sizes, non-positive geometry or non-finite weights.
    void validate() const;

    bool operator==(const ConvSpec&) const = default;
};

enum class PadMode { zero, reflect, replicate };

// --- partial convolution ------------------------------------------------------

/// Convolution over mask-valid inputs only.
///
/// Features are premultiplied by the mask; with `spec.renormalize` the window
/// sum is scaled by kh*kw / sum(mask under window) before the bias is added.
/// Output mask is 1 where any input mask value under the window is > 0.
/// Windows with no valid input produce 0 (no bias).
MaskedFeature partial_conv2d(const MaskedFeature& input, const ConvSpec& spec);

/// Partial convolution whose weighted sum uses expand_mask(input.mask) while
/// the returned mask is the update of the unexpanded input mask. Features are
/// kept wherever the expanded window saw valid input, so a following expanded
/// layer can read one more pixel around the stored mask.
MaskedFeature partial_conv2d_expanded(const MaskedFeature& input, const ConvSpec& spec);

/// Mask component of partial_conv2d, independent of features.
MaskMap update_mask_only(const MaskMap& mask, const ConvSpec& spec);
/// Geometry-only variant used when no ConvSpec is at hand.
MaskMap update_mask_only(const MaskMap& mask, int kernel_h, int kernel_w, int stride, int padding);

// --- mask geometry ----------------------------------------------------------------

/// Max pooling without padding; output dims floor((H-k)/s)+1, matching feature pooling.
MaskMap mask_pool(const MaskMap& mask, int kernel, int stride);

/// Adds a border of `padding` pixels. Zero mode writes 0; reflect mirrors like
/// the feature-side reflection pad (edge pixel not repeated); replicate repeats
/// the edge pixel.
MaskMap mask_pad(const MaskMap& mask, int padding, PadMode mode = PadMode::zero);

/// Bilinear resampling with half-pixel centers (no align-corners), clamped to [0,1].
MaskMap mask_resize_bilinear(const MaskMap& mask, int out_h, int out_w);

/// 3x3 max filter, stride 1, replicated border.
MaskMap expand_mask(const MaskMap& mask);

/// Binary mask -> normalized kernel_px x kernel_px box average (replicated
/// border), a linear ramp of width kernel_px centered on the boundary.
/// kernel_px must be odd and >= 1; non-binary input is rejected.
MaskMap feather_mask(const MaskMap& mask, int kernel_px);

/// out = mask*stylized + (1-mask)*original per pixel and channel.
ImageBuffer alpha_composite(const ImageBuffer& stylized, const ImageBuffer& original, const MaskMap& mask);

/// Mask with value 1 where `mask >= threshold`, else 0.
MaskMap binarize(const MaskMap& mask, float threshold);

// --- feature-side companions of the mask ops --------------------------------------

FeatureMap pad_features(const FeatureMap& input, int padding, PadMode mode);
FeatureMap max_pool_features(const FeatureMap& input, int kernel, int stride);
/// Nearest-neighbour resize; an exact 2x repeat when out dims are double the input.
FeatureMap resize_nearest(const FeatureMap& input, int out_h, int out_w);
void relu_inplace(FeatureMap& features);
/// Multiplies every channel by the mask.
void apply_mask_inplace(FeatureMap& features, const MaskMap& mask);

} // namespace pcstyle
