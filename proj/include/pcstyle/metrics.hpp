#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pcstyle/network.hpp"
#include "pcstyle/tensor.hpp"

namespace pcstyle {

/// Normalized histogram over [0,1]. Bin k is centred on level k/(bins-1); a
/// value v falls in bin round(v*(bins-1)), so the outer bins are half-width.
struct Histogram {
    int bin_count = 0;
    std::vector<double> edges;  // bins+1 entries, edges[0] = 0, edges[bins] = 1
    std::vector<double> mass;   // sums to 1

    /// Distance between neighbouring bin levels, 1/(bins-1).
    double level_spacing() const { return 1.0 / (bin_count - 1); }
};

/// Selection threshold: pixels with mask > 0.5 are counted.
inline constexpr float kMetricMaskThreshold = 0.5f;

/// Histogram of one channel over pixels with mask > 0.5. bins >= 2.
Histogram masked_histogram(const ImageBuffer& image, int channel, const MaskMap& mask, int bins);

/// sum_k |CDF_a(k) - CDF_b(k)| * level_spacing; the W1 distance between the
/// two distributions placed on the bin levels.
double emd_1d(const Histogram& a, const Histogram& b);

/// BT.601 luma (0.299, 0.587, 0.114); single-channel images pass through.
ImageBuffer to_grayscale(const ImageBuffer& image);

double gray_emd(const ImageBuffer& image_a, const MaskMap& mask_a, const ImageBuffer& image_b, const MaskMap& mask_b,
                int bins = 256);

using RgbSample = std::array<float, 3>;

/// RGB values of pixels with mask > 0.5, in row-major order. Gray pixels are replicated.
std::vector<RgbSample> masked_pixels(const ImageBuffer& image, const MaskMap& mask);

/// Exact W1 distance between two empirical 1D distributions with uniform weights.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// Unit directions from normalized 3D Gaussian draws of mt19937_64(seed).
std::vector<std::array<double, 3>> projection_directions(int n_projections, std::uint64_t seed);

/// Mean over the directions of the exact 1D W1 between the projected sample sets.
double sliced_emd(const std::vector<RgbSample>& a, const std::vector<RgbSample>& b, int n_projections = 64,
                  std::uint64_t seed = 0);

/// C x C Gram matrix over positions where region > 0, divided by C * |positions|.
std::vector<double> masked_gram(const FeatureMap& features, const MaskMap& region);

/// Squared Frobenius distance between two equally sized Gram matrices.
double gram_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Per-stage Gram matrices of a style image (all-ones mask), reusable across outputs.
struct StyleGrams {
    std::vector<std::vector<double>> stages;
};
StyleGrams style_grams(const StyleNetwork& network, const ImageBuffer& style);

/// scale * sum over encoder stages of ||G(output | mask) - G(style)||_F^2, where
/// the output's Grams come from encode_within over the binarized mask.
double perceptual_style_loss(const StyleNetwork& network, const ImageBuffer& output, const MaskMap& mask,
                             const StyleGrams& style);
double perceptual_style_loss(const StyleNetwork& network, const ImageBuffer& output, const MaskMap& mask,
                             const ImageBuffer& style);

/// 8-connected morphological gradient (3x3 dilation minus erosion) of the
/// mask binarized at 0.5, replicated border.
MaskMap boundary_band(const MaskMap& mask);

/// Mean over band pixels and channels of the 3x3 Sobel magnitude in 8-bit units.
double boundary_gradient_magnitude(const ImageBuffer& image, const MaskMap& mask);

/// Mean Euclidean RGB distance, in 8-bit units, over (inside pixel, 4-neighbour outside pixel) pairs.
double boundary_color_contrast(const ImageBuffer& image, const MaskMap& mask);

struct MetricOptions {
    int bins = 256;
    int n_projections = 64;
    std::uint64_t seed = 0;
};

struct MetricReport {
    double gray_emd = 0.0;
    double sliced_emd = 0.0;
    double style_loss = 0.0;
    double boundary_grad_magnitude = 0.0;
    double boundary_color_contrast = 0.0;
    std::map<std::string, std::string> metadata;

    bool all_finite() const;
};

/// Distribution metrics compare the output's masked region with the whole
/// style image; boundary metrics are taken on the output at the mask border.
MetricReport compute_metrics(const StyleNetwork& network, const ImageBuffer& output, const MaskMap& mask,
                             const ImageBuffer& style, const MetricOptions& options,
                             const StyleGrams* cached_style_grams = nullptr);

} // namespace pcstyle
