#include "pcstyle/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "pcstyle/errors.hpp"
#include "pcstyle/masked_ops.hpp"
#include "pcstyle/stylize.hpp"

namespace pcstyle {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kByteScale = 255.0;
// Margin around the mask's bounding box when encoding only the region; larger
// than the encoder's receptive-field growth, and a multiple of the pooling stride.
constexpr int kCropMargin = 32;
constexpr int kCropAlign = 4;

void check_mask_for(const ImageBuffer& image, const MaskMap& mask, const char* where) {
    image.validate(where);
    if (!image.same_dims(mask)) throw InvalidArgument(std::string(where) + ": mask dims must equal image dims");
    if (!mask.is_valid()) throw InvalidArgument(std::string(where) + ": mask values must be finite and in [0,1]");
}

/// Walks two ascending sequences and integrates |F_a - F_b|. Ties advance together.
template <typename T>
double w1_sorted(const std::vector<T>& a, const std::vector<T>& b) {
    const std::size_t na = a.size(), nb = b.size();
    std::size_t i = 0, j = 0;
    double prev = std::min<double>(a.front(), b.front());
    // |F_a - F_b| = |i*nb - j*na| / (na*nb); the numerator is an exact integer.
    double acc = 0.0;
    while (i < na || j < nb) {
        double t;
        if (j >= nb || (i < na && a[i] <= b[j]))
            t = a[i];
        else
            t = b[j];
        const auto diff = static_cast<std::int64_t>(i * nb) - static_cast<std::int64_t>(j * na);
        acc += static_cast<double>(diff < 0 ? -diff : diff) * (t - prev);
        while (i < na && static_cast<double>(a[i]) == t) ++i;
        while (j < nb && static_cast<double>(b[j]) == t) ++j;
        prev = t;
    }
    return acc / (static_cast<double>(na) * static_cast<double>(nb));
}

std::uint32_t sortable_bits(float v) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    return (u & 0x80000000u) ? ~u : (u | 0x80000000u);
}

float from_sortable_bits(std::uint32_t k) {
    return std::bit_cast<float>((k & 0x80000000u) ? (k & 0x7fffffffu) : ~k);
}

/// LSD radix sort on the order-preserving bit pattern; three 11-bit passes over
/// the keys alone, digit counts gathered in a single sweep.
void radix_sort(std::vector<float>& values, std::vector<std::uint32_t>& keys, std::vector<std::uint32_t>& tmp) {
    constexpr int kPasses = 3, kBits = 11, kRadix = 1 << kBits;
    const std::size_t n = values.size();
    keys.resize(n);
    tmp.resize(n);
    std::array<std::array<std::uint32_t, kRadix>, kPasses> offset{};
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t k = sortable_bits(values[i]);
        keys[i] = k;
        for (int p = 0; p < kPasses; ++p) ++offset[p][(k >> (p * kBits)) & (kRadix - 1)];
    }
    for (auto& o : offset) {
        std::uint32_t run = 0;
        for (auto& c : o) run += std::exchange(c, run);
    }
    for (int p = 0; p < kPasses; ++p) {
        auto& o = offset[p];
        for (std::size_t i = 0; i < n; ++i) tmp[o[(keys[i] >> (p * kBits)) & (kRadix - 1)]++] = keys[i];
        keys.swap(tmp);
    }
    for (std::size_t i = 0; i < n; ++i) values[i] = from_sortable_bits(keys[i]);
}

struct Box {
    int y0, x0, y1, x1;  // half-open
};

/// Bounding box of mask > 0, grown by the margin and snapped to the pooling grid.
Box region_crop(const MaskMap& mask) {
    int y0 = mask.height, x0 = mask.width, y1 = 0, x1 = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x) > 0.0f) {
                y0 = std::min(y0, y);
                x0 = std::min(x0, x);
                y1 = std::max(y1, y + 1);
                x1 = std::max(x1, x + 1);
            }
    if (y1 == 0) return {0, 0, mask.height, mask.width};
    auto lo = [](int v) { return std::max(0, (v - kCropMargin) / kCropAlign * kCropAlign); };
    Box b{lo(y0), lo(x0), std::min(mask.height, y1 + kCropMargin), std::min(mask.width, x1 + kCropMargin)};
    return b;
}

ImageBuffer crop(const ImageBuffer& img, const Box& b) {
    ImageBuffer out(b.y1 - b.y0, b.x1 - b.x0, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x) out.at(c, y - b.y0, x - b.x0) = img.at(c, y, x);
    return out;
}

MaskMap crop(const MaskMap& m, const Box& b) {
    MaskMap out(b.y1 - b.y0, b.x1 - b.x0);
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) out.at(y - b.y0, x - b.x0) = m.at(y, x);
    return out;
}

MaskMap binary_of(const MaskMap& mask) {
    MaskMap b(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) b.values[i] = mask.values[i] > kMetricMaskThreshold ? 1.0f : 0.0f;
    return b;
}

float replicate_at(const ImageBuffer& img, int c, int y, int x) {
    return img.at(c, std::clamp(y, 0, img.height - 1), std::clamp(x, 0, img.width - 1));
}

} // namespace

Histogram masked_histogram(const ImageBuffer& image, int channel, const MaskMap& mask, int bins) {
    check_mask_for(image, mask, "masked_histogram");
    if (bins < 2) throw InvalidArgument("masked_histogram: bins must be >= 2");
    if (channel < 0 || channel >= image.channels) throw InvalidArgument("masked_histogram: channel out of range");
    Histogram h;
    h.bin_count = bins;
    h.edges.resize(bins + 1);
    h.edges.front() = 0.0;
    h.edges.back() = 1.0;
    for (int k = 1; k < bins; ++k) h.edges[k] = (k - 0.5) / (bins - 1);
    std::vector<std::size_t> counts(bins, 0);
    std::size_t total = 0;
    const auto plane = image.plane(channel);
    for (std::size_t i = 0; i < plane.size(); ++i) {
        if (!(mask.values[i] > kMetricMaskThreshold)) continue;
        const auto k = static_cast<int>(std::lround(static_cast<double>(plane[i]) * (bins - 1)));
        ++counts[std::clamp(k, 0, bins - 1)];
        ++total;
    }
    if (total == 0) throw EmptyRegionError("masked_histogram: no pixel has mask > 0.5");
    h.mass.resize(bins);
    for (int k = 0; k < bins; ++k) h.mass[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    return h;
}

double emd_1d(const Histogram& a, const Histogram& b) {
    if (a.bin_count != b.bin_count || a.mass.size() != b.mass.size() || a.bin_count < 2)
        throw InvalidArgument("emd_1d: histograms must have the same number of bins (>= 2)");
    double cdf_a = 0.0, cdf_b = 0.0, acc = 0.0;
    for (int k = 0; k + 1 < a.bin_count; ++k) {
        cdf_a += a.mass[k];
        cdf_b += b.mass[k];
        acc += std::abs(cdf_a - cdf_b);
    }
    return acc * a.level_spacing();
}

ImageBuffer to_grayscale(const ImageBuffer& image) {
    if (image.channels == 1) return image;
    if (image.channels != 3) throw InvalidArgument("to_grayscale: image must have 1 or 3 channels");
    ImageBuffer out(image.height, image.width, 1);
    const auto r = image.plane(0), g = image.plane(1), b = image.plane(2);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = std::clamp(0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i], 0.0f, 1.0f);
    return out;
}

double gray_emd(const ImageBuffer& image_a, const MaskMap& mask_a, const ImageBuffer& image_b, const MaskMap& mask_b,
                int bins) {
    return emd_1d(masked_histogram(to_grayscale(image_a), 0, mask_a, bins),
                  masked_histogram(to_grayscale(image_b), 0, mask_b, bins));
}

std::vector<RgbSample> masked_pixels(const ImageBuffer& image, const MaskMap& mask) {
    check_mask_for(image, mask, "masked_pixels");
    std::vector<RgbSample> out;
    const std::size_t plane = image.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        if (!(mask.values[i] > kMetricMaskThreshold)) continue;
        if (image.channels == 3)
            out.push_back({image.values[i], image.values[plane + i], image.values[2 * plane + i]});
        else
            out.push_back({image.values[i], image.values[i], image.values[i]});
    }
    return out;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw EmptyRegionError("wasserstein_1d: empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return w1_sorted(a, b);
}

std::vector<std::array<double, 3>> projection_directions(int n_projections, std::uint64_t seed) {
    if (n_projections < 1) throw InvalidArgument("projection_directions: n_projections must be >= 1");
    std::mt19937_64 rng(seed);
    // Box-Muller on 53-bit uniforms keeps the draws identical across standard libraries.
    auto uniform = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
    auto gaussian_pair = [&] {
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double t = 2.0 * std::numbers::pi * uniform();
        return std::pair{r * std::cos(t), r * std::sin(t)};
    };
    std::vector<std::array<double, 3>> dirs;
    dirs.reserve(n_projections);
    while (static_cast<int>(dirs.size()) < n_projections) {
        const auto [g0, g1] = gaussian_pair();
        const auto [g2, unused] = gaussian_pair();
        (void)unused;
        const double norm = std::sqrt(g0 * g0 + g1 * g1 + g2 * g2);
        if (norm < 1e-12) continue;
        dirs.push_back({g0 / norm, g1 / norm, g2 / norm});
    }
    return dirs;
}

double sliced_emd(const std::vector<RgbSample>& a, const std::vector<RgbSample>& b, int n_projections,
                  std::uint64_t seed) {
    if (a.empty() || b.empty()) throw EmptyRegionError("sliced_emd: empty sample set");
    const auto dirs = projection_directions(n_projections, seed);
    std::vector<float> pa(a.size()), pb(b.size());
    std::vector<std::uint32_t> keys, tmp;
    double total = 0.0;
    for (const auto& d : dirs) {
        const float d0 = static_cast<float>(d[0]), d1 = static_cast<float>(d[1]), d2 = static_cast<float>(d[2]);
        for (std::size_t i = 0; i < a.size(); ++i) pa[i] = d0 * a[i][0] + d1 * a[i][1] + d2 * a[i][2];
        for (std::size_t i = 0; i < b.size(); ++i) pb[i] = d0 * b[i][0] + d1 * b[i][1] + d2 * b[i][2];
        radix_sort(pa, keys, tmp);
        radix_sort(pb, keys, tmp);
        total += w1_sorted(pa, pb);
    }
    return total / static_cast<double>(dirs.size());
}

std::vector<double> masked_gram(const FeatureMap& features, const MaskMap& region) {
    if (!features.same_dims(region)) throw InvalidArgument("masked_gram: feature and region dims differ");
    const int C = features.channels;
    const auto plane = static_cast<Eigen::Index>(features.plane_size());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (region.values[i] > 0.0f) idx.push_back(i);
    if (idx.empty()) throw EmptyRegionError("masked_gram: region is empty");
    RowMatrix g;
    if (static_cast<Eigen::Index>(idx.size()) == plane) {
        const Eigen::Map<const RowMatrix> x(features.values.data(), C, plane);
        g.noalias() = x * x.transpose();
    } else {
        RowMatrix x(C, static_cast<Eigen::Index>(idx.size()));
        for (int c = 0; c < C; ++c)
            for (std::size_t k = 0; k < idx.size(); ++k)
                x(c, static_cast<Eigen::Index>(k)) = features.values[c * plane + idx[k]];
        g.noalias() = x * x.transpose();
    }
    const double norm = static_cast<double>(C) * static_cast<double>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(C) * C);
    for (int r = 0; r < C; ++r)
        for (int c = 0; c < C; ++c) out[static_cast<std::size_t>(r) * C + c] = g(r, c) / norm;
    return out;
}

double gram_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidArgument("gram_distance: Gram matrices differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

StyleGrams style_grams(const StyleNetwork& network, const ImageBuffer& style) {
    const auto stages = encode(network, style, MaskMap::ones(style.height, style.width), BlendConfig{});
    StyleGrams g;
    for (const auto& s : stages) g.stages.push_back(masked_gram(s.features, s.mask));
    return g;
}

double perceptual_style_loss(const StyleNetwork& network, const ImageBuffer& output, const MaskMap& mask,
                             const StyleGrams& style) {
    check_mask_for(output, mask, "perceptual_style_loss");
    if (mask.count_above(kMetricMaskThreshold) == 0) throw EmptyRegionError("perceptual_style_loss: mask is empty");
    const MaskMap region = binary_of(mask);
    const Box box = region_crop(region);
    const auto stages = encode_within(network, crop(output, box), crop(region, box));
    if (stages.size() != style.stages.size())
        throw InvalidArgument("perceptual_style_loss: style Grams come from a different network");
    double loss = 0.0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        // a region can vanish under pooling; its deeper stages then carry no statistics
        if (stages[s].mask.count_above(0.5f) == 0) continue;
        loss += gram_distance(masked_gram(stages[s].features, stages[s].mask), style.stages[s]);
    }
    return loss * network.metadata.style_loss_scale;
}

double perceptual_style_loss(const StyleNetwork& network, const ImageBuffer& output, const MaskMap& mask,
                             const ImageBuffer& style) {
    return perceptual_style_loss(network, output, mask, style_grams(network, style));
}

MaskMap boundary_band(const MaskMap& mask) {
    const MaskMap b = binary_of(mask);
    MaskMap band(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            float lo = 1.0f, hi = 0.0f;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const float v = b.at(std::clamp(y + dy, 0, mask.height - 1), std::clamp(x + dx, 0, mask.width - 1));
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            band.at(y, x) = hi - lo;
        }
    return band;
}

double boundary_gradient_magnitude(const ImageBuffer& image, const MaskMap& mask) {
    check_mask_for(image, mask, "boundary_gradient_magnitude");
    const MaskMap band = boundary_band(mask);
    double total = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            if (band.at(y, x) == 0.0f) continue;
            for (int c = 0; c < image.channels; ++c) {
                auto p = [&](int dy, int dx) { return static_cast<double>(replicate_at(image, c, y + dy, x + dx)); };
                const double gx = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
                const double gy = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
                total += std::sqrt(gx * gx + gy * gy) * kByteScale;
                ++count;
            }
        }
    if (count == 0) throw EmptyRegionError("boundary_gradient_magnitude: mask has no boundary");
    return total / static_cast<double>(count);
}

double boundary_color_contrast(const ImageBuffer& image, const MaskMap& mask) {
    check_mask_for(image, mask, "boundary_color_contrast");
    const MaskMap b = binary_of(mask);
    constexpr int dy[4] = {-1, 1, 0, 0};
    constexpr int dx[4] = {0, 0, -1, 1};
    double total = 0.0;
    std::size_t pairs = 0;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            if (b.at(y, x) == 0.0f) continue;
            for (int k = 0; k < 4; ++k) {
                const int yy = y + dy[k], xx = x + dx[k];
                if (yy < 0 || xx < 0 || yy >= image.height || xx >= image.width || b.at(yy, xx) != 0.0f) continue;
                double s = 0.0;
                for (int c = 0; c < image.channels; ++c) {
                    const double d = static_cast<double>(image.at(c, y, x)) - image.at(c, yy, xx);
                    s += d * d;
                }
                total += std::sqrt(s) * kByteScale;
                ++pairs;
            }
        }
    if (pairs == 0) throw EmptyRegionError("boundary_color_contrast: mask has no boundary");
    return total / static_cast<double>(pairs);
}

bool MetricReport::all_finite() const {
    return std::isfinite(gray_emd) && std::isfinite(sliced_emd) && std::isfinite(style_loss) &&
           std::isfinite(boundary_grad_magnitude) && std::isfinite(boundary_color_contrast);
}

MetricReport compute_metrics(const StyleNetwork& network, const ImageBuffer& output, const MaskMap& mask,
                             const ImageBuffer& style, const MetricOptions& options,
                             const StyleGrams* cached_style_grams) {
    const MaskMap style_all = MaskMap::ones(style.height, style.width);
    MetricReport r;
    r.gray_emd = gray_emd(output, mask, style, style_all, options.bins);
    r.sliced_emd = sliced_emd(masked_pixels(output, mask), masked_pixels(style, style_all), options.n_projections,
                              options.seed);
    r.style_loss = cached_style_grams ? perceptual_style_loss(network, output, mask, *cached_style_grams)
                                      : perceptual_style_loss(network, output, mask, style);
    r.boundary_grad_magnitude = boundary_gradient_magnitude(output, mask);
    r.boundary_color_contrast = boundary_color_contrast(output, mask);
    return r;
}

} // namespace pcstyle
