#include "pcstyle/masked_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include <Eigen/Core>

#include "pcstyle/errors.hpp"

namespace pcstyle {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on the im2col scratch buffer, in floats (16 MiB).
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

void check_mask(const MaskMap& mask, const char* where) {
    if (mask.values.size() != static_cast<std::size_t>(mask.height) * mask.width)
        throw InvalidArgument(std::string(where) + ": mask buffer size does not match its dims");
    if (!mask.is_valid()) throw InvalidArgument(std::string(where) + ": mask values must be finite and in [0,1]");
}

// Sum of mask values under each output window; padding positions contribute 0.
std::vector<float> window_sums(const MaskMap& mask, int kh, int kw, int stride, int padding, int out_h, int out_w) {
    std::vector<float> sums(static_cast<std::size_t>(out_h) * out_w, 0.0f);
    for (int oy = 0; oy < out_h; ++oy) {
        const int y0 = oy * stride - padding;
        for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = ox * stride - padding;
            double s = 0.0;
            for (int ky = std::max(0, -y0); ky < kh && y0 + ky < mask.height; ++ky) {
                const float* row = &mask.values[static_cast<std::size_t>(y0 + ky) * mask.width];
                for (int kx = std::max(0, -x0); kx < kw && x0 + kx < mask.width; ++kx) s += row[x0 + kx];
            }
            sums[static_cast<std::size_t>(oy) * out_w + ox] = static_cast<float>(s);
        }
    }
    return sums;
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return -floor_div(-a, b); }

void fill_columns(const FeatureMap& x, const ConvSpec& spec, int out_w, int oy_begin, int oy_end, float* cols) {
    const int kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride, p = spec.padding;
    const std::size_t n = static_cast<std::size_t>(oy_end - oy_begin) * out_w;
    for (int c = 0; c < x.channels; ++c) {
        const float* plane = x.values.data() + c * x.plane_size();
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                float* dst = cols + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * n;
                // ox range whose input column lies inside the image
                const int ox_lo = std::clamp(ceil_div(p - kx, s), 0, out_w);
                const int ox_hi = std::clamp(floor_div(x.width - 1 + p - kx, s) + 1, ox_lo, out_w);
                for (int oy = oy_begin; oy < oy_end; ++oy, dst += out_w) {
                    const int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= x.height) {
                        std::fill(dst, dst + out_w, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * x.width;
                    std::fill(dst, dst + ox_lo, 0.0f);
                    if (s == 1) {
                        std::memcpy(dst + ox_lo, src + ox_lo - p + kx, sizeof(float) * (ox_hi - ox_lo));
                    } else {
                        for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = src[ox * s - p + kx];
                    }
                    std::fill(dst + ox_hi, dst + out_w, 0.0f);
                }
            }
        }
    }
}

// Writes raw * (window / sum) + bias into `out` for tile positions whose window sum is positive.
// `raw` holds row `r` of the tile at column r * raw_row_stride.
void finish_tile(FeatureMap& out, const ConvSpec& spec, const std::vector<float>& sums, const float* raw,
                 std::size_t raw_channel_stride, std::size_t raw_row_stride, int oy0, int oy1) {
    const float window = static_cast<float>(spec.kernel_h * spec.kernel_w);
    const int out_w = out.width;
    for (int o = 0; o < spec.out_channels; ++o) {
        const float b = spec.bias[o];
        for (int oy = oy0; oy < oy1; ++oy) {
            const std::size_t base = static_cast<std::size_t>(oy) * out_w;
            float* dst = out.values.data() + o * out.plane_size() + base;
            const float* src = raw + o * raw_channel_stride + (oy - oy0) * raw_row_stride;
            for (int ox = 0; ox < out_w; ++ox) {
                const float msum = sums[base + ox];
                if (msum > 0.0f) dst[ox] = src[ox] * (spec.renormalize ? window / msum : 1.0f) + b;
            }
        }
    }
}

bool tile_is_empty(const std::vector<float>& sums, std::size_t base, std::size_t n) {
    return std::none_of(sums.begin() + base, sums.begin() + base + n, [](float v) { return v > 0.0f; });
}

// Stride 1 without padding: output row oy, column ox of kernel tap (ky,kx) reads the flattened
// input plane at (oy + ky) * W + ox + kx, so each tap is one GEMM over a contiguous slice.
// Result rows are W wide; columns ox >= out_w are computed and discarded. The tile stops
// kw-1 columns short of its last full row, which keeps every slice inside its plane.
FeatureMap shifted_convolution(const FeatureMap& x, const ConvSpec& spec, const std::vector<float>& sums, int out_h,
                               int out_w) {
    using Stride2 = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
    FeatureMap out(spec.out_channels, out_h, out_w);
    const int kh = spec.kernel_h, kw = spec.kernel_w, C = spec.in_channels, W = x.width;
    const auto plane = static_cast<Eigen::Index>(x.plane_size());

    const int rows_per_tile = static_cast<int>(
        std::max<std::size_t>(1, kColumnBudget / (static_cast<std::size_t>(spec.out_channels) * W)));
    RowMatrix tile;
    for (int oy0 = 0; oy0 < out_h; oy0 += rows_per_tile) {
        const int oy1 = std::min(out_h, oy0 + rows_per_tile);
        if (tile_is_empty(sums, static_cast<std::size_t>(oy0) * out_w, static_cast<std::size_t>(oy1 - oy0) * out_w))
            continue;
        const Eigen::Index n = static_cast<Eigen::Index>(oy1 - oy0) * W - (kw - 1);
        tile.resize(spec.out_channels, n);
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const Eigen::Map<const RowMatrix, 0, Stride2> tap(spec.weights.data() + ky * kw + kx,
                                                                   spec.out_channels, C,
                                                                   Stride2(static_cast<Eigen::Index>(C) * kh * kw, kh * kw));
                const Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>> slice(
                    x.values.data() + static_cast<std::size_t>(oy0 + ky) * W + kx, C, n, Eigen::OuterStride<>(plane));
                if (ky == 0 && kx == 0)
                    tile.noalias() = tap * slice;
                else
                    tile.noalias() += tap * slice;
            }
        finish_tile(out, spec, sums, tile.data(), static_cast<std::size_t>(n), W, oy0, oy1);
    }
    return out;
}

// Raw convolution of `x` followed by per-window renormalization and bias,
// evaluated only where `sums` is positive.
FeatureMap masked_convolution(const FeatureMap& x, const ConvSpec& spec, const std::vector<float>& sums, int out_h,
                              int out_w) {
    if (spec.stride == 1 && spec.padding == 0 && spec.kernel_h * spec.kernel_w > 1)
        return shifted_convolution(x, spec, sums, out_h, out_w);
    FeatureMap out(spec.out_channels, out_h, out_w);
    const std::size_t k = static_cast<std::size_t>(spec.in_channels) * spec.kernel_h * spec.kernel_w;
    const Eigen::Map<const RowMatrix> w(spec.weights.data(), spec.out_channels, static_cast<Eigen::Index>(k));

    const int rows_per_tile =
        static_cast<int>(std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, k * out_w)));
    std::vector<float> cols;
    RowMatrix tile;
    for (int oy0 = 0; oy0 < out_h; oy0 += rows_per_tile) {
        const int oy1 = std::min(out_h, oy0 + rows_per_tile);
        const std::size_t base = static_cast<std::size_t>(oy0) * out_w;
        const std::size_t n = static_cast<std::size_t>(oy1 - oy0) * out_w;
        if (tile_is_empty(sums, base, n)) continue;

        cols.resize(k * n);
        fill_columns(x, spec, out_w, oy0, oy1, cols.data());
        const Eigen::Map<const RowMatrix> col(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        tile.noalias() = w * col;
        finish_tile(out, spec, sums, tile.data(), n, out_w, oy0, oy1);
    }
    return out;
}

void check_conv_input(const MaskedFeature& input, const ConvSpec& spec, const char* where) {
    spec.validate();
    input.check_consistent(where);
    check_mask(input.mask, where);
    if (input.features.channels != spec.in_channels) {
        throw InvalidArgument(std::string(where) + ": input has " + std::to_string(input.features.channels) +
                              " channels, spec expects " + std::to_string(spec.in_channels));
    }
    if (spec.output_height(input.features.height) < 1 || spec.output_width(input.features.width) < 1 ||
        input.features.height + 2 * spec.padding < spec.kernel_h ||
        input.features.width + 2 * spec.padding < spec.kernel_w) {
        throw InvalidArgument(std::string(where) + ": kernel larger than padded input");
    }
}

/// Masked copy of the features in `scratch`, or the features themselves when the mask is all ones.
const FeatureMap& premultiplied(const FeatureMap& features, const MaskMap& mask, FeatureMap& scratch) {
    if (std::all_of(mask.values.begin(), mask.values.end(), [](float v) { return v == 1.0f; })) return features;
    scratch = features;
    apply_mask_inplace(scratch, mask);
    return scratch;
}

MaskMap mask_from_sums(const std::vector<float>& sums, int out_h, int out_w) {
    MaskMap m(out_h, out_w);
    std::transform(sums.begin(), sums.end(), m.values.begin(), [](float s) { return s > 0.0f ? 1.0f : 0.0f; });
    return m;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

int border_index(int i, int n, PadMode mode) {
    return mode == PadMode::reflect ? reflect_index(i, n) : std::clamp(i, 0, n - 1);
}

} // namespace

void ConvSpec::validate() const {
    if (out_channels < 1 || in_channels < 1) throw InvalidArgument("ConvSpec: channel counts must be positive");
    if (kernel_h < 1 || kernel_w < 1) throw InvalidArgument("ConvSpec: kernel dims must be >= 1");
    if (stride < 1) throw InvalidArgument("ConvSpec: stride must be positive");
    if (padding < 0) throw InvalidArgument("ConvSpec: padding must be non-negative");
    if (weights.size() != static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w)
        throw InvalidArgument("ConvSpec: weight array size does not match [out x in x kh x kw]");
    if (bias.size() != static_cast<std::size_t>(out_channels))
        throw InvalidArgument("ConvSpec: bias array size does not match out_channels");
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(weights.begin(), weights.end(), finite) || !std::all_of(bias.begin(), bias.end(), finite))
        throw InvalidArgument("ConvSpec: weights must be finite");
}

MaskedFeature partial_conv2d(const MaskedFeature& input, const ConvSpec& spec) {
    check_conv_input(input, spec, "partial_conv2d");
    const int out_h = spec.output_height(input.features.height);
    const int out_w = spec.output_width(input.features.width);
    const auto sums = window_sums(input.mask, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding, out_h, out_w);
    MaskedFeature out;
    FeatureMap scratch;
    out.features = masked_convolution(premultiplied(input.features, input.mask, scratch), spec, sums, out_h, out_w);
    out.mask = mask_from_sums(sums, out_h, out_w);
    return out;
}

MaskedFeature partial_conv2d_expanded(const MaskedFeature& input, const ConvSpec& spec) {
    check_conv_input(input, spec, "partial_conv2d_expanded");
    MaskedFeature widened{input.features, expand_mask(input.mask)};
    MaskedFeature out = partial_conv2d(widened, spec);
    out.mask = update_mask_only(input.mask, spec);
    return out;
}

MaskMap update_mask_only(const MaskMap& mask, const ConvSpec& spec) {
    return update_mask_only(mask, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
}

MaskMap update_mask_only(const MaskMap& mask, int kernel_h, int kernel_w, int stride, int padding) {
    check_mask(mask, "update_mask_only");
    if (kernel_h < 1 || kernel_w < 1 || stride < 1 || padding < 0)
        throw InvalidArgument("update_mask_only: invalid kernel geometry");
    const int out_h = (mask.height + 2 * padding - kernel_h) / stride + 1;
    const int out_w = (mask.width + 2 * padding - kernel_w) / stride + 1;
    if (mask.height + 2 * padding < kernel_h || mask.width + 2 * padding < kernel_w)
        throw InvalidArgument("update_mask_only: kernel larger than padded mask");
    return mask_from_sums(window_sums(mask, kernel_h, kernel_w, stride, padding, out_h, out_w), out_h, out_w);
}

MaskMap mask_pool(const MaskMap& mask, int kernel, int stride) {
    if (kernel < 1 || stride < 1) throw InvalidArgument("mask_pool: kernel and stride must be >= 1");
    if (mask.height < kernel || mask.width < kernel) throw InvalidArgument("mask_pool: mask smaller than kernel");
    const int out_h = (mask.height - kernel) / stride + 1;
    const int out_w = (mask.width - kernel) / stride + 1;
    MaskMap out(out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            float m = 0.0f;
            for (int ky = 0; ky < kernel; ++ky)
                for (int kx = 0; kx < kernel; ++kx) m = std::max(m, mask.at(oy * stride + ky, ox * stride + kx));
            out.at(oy, ox) = m;
        }
    }
    return out;
}

MaskMap mask_pad(const MaskMap& mask, int padding, PadMode mode) {
    if (padding < 0) throw InvalidArgument("mask_pad: padding must be non-negative");
    if (padding == 0) return mask;
    MaskMap out(mask.height + 2 * padding, mask.width + 2 * padding, 0.0f);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const int sy = y - padding, sx = x - padding;
            const bool inside = sy >= 0 && sy < mask.height && sx >= 0 && sx < mask.width;
            if (inside) {
                out.at(y, x) = mask.at(sy, sx);
            } else if (mode != PadMode::zero) {
                out.at(y, x) = mask.at(border_index(sy, mask.height, mode), border_index(sx, mask.width, mode));
            }
        }
    }
    return out;
}

MaskMap mask_resize_bilinear(const MaskMap& mask, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("mask_resize_bilinear: output dims must be >= 1");
    if (mask.height < 1 || mask.width < 1) throw InvalidArgument("mask_resize_bilinear: empty input mask");
    if (out_h == mask.height && out_w == mask.width) return mask;

    struct Tap {
        int i0, i1;
        double t;
    };
    auto taps = [](int out_n, int in_n) {
        std::vector<Tap> v(out_n);
        const double scale = static_cast<double>(in_n) / out_n;
        for (int d = 0; d < out_n; ++d) {
            double src = (d + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in_n - 1);
            v[d] = {i0, i1, src - i0};
        }
        return v;
    };
    const auto ty = taps(out_h, mask.height);
    const auto tx = taps(out_w, mask.width);
    MaskMap out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double top = (1.0 - tx[x].t) * mask.at(ty[y].i0, tx[x].i0) + tx[x].t * mask.at(ty[y].i0, tx[x].i1);
            const double bot = (1.0 - tx[x].t) * mask.at(ty[y].i1, tx[x].i0) + tx[x].t * mask.at(ty[y].i1, tx[x].i1);
            out.at(y, x) = static_cast<float>(std::clamp((1.0 - ty[y].t) * top + ty[y].t * bot, 0.0, 1.0));
        }
    }
    return out;
}

MaskMap expand_mask(const MaskMap& mask) {
    MaskMap out(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            float m = 0.0f;
            for (int yy = std::max(0, y - 1); yy <= std::min(mask.height - 1, y + 1); ++yy)
                for (int xx = std::max(0, x - 1); xx <= std::min(mask.width - 1, x + 1); ++xx)
                    m = std::max(m, mask.at(yy, xx));
            out.at(y, x) = m;
        }
    }
    return out;
}

MaskMap feather_mask(const MaskMap& mask, int kernel_px) {
    if (kernel_px < 1 || kernel_px % 2 == 0) throw InvalidArgument("feather_mask: kernel_px must be odd and >= 1");
    if (!mask.is_binary()) throw InvalidArgument("feather_mask: input mask must be binary");
    if (kernel_px == 1) return mask;
    const int r = kernel_px / 2;
    const int h = mask.height, w = mask.width;

    // Separable box sum with replicated border; counts stay exact integers.
    std::vector<double> horiz(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += mask.at(y, std::clamp(x + d, 0, w - 1));
            horiz[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    const double norm = static_cast<double>(kernel_px) * kernel_px;
    MaskMap out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += horiz[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1)) * w + x];
            out.at(y, x) = static_cast<float>(s / norm);
        }
    }
    return out;
}

ImageBuffer alpha_composite(const ImageBuffer& stylized, const ImageBuffer& original, const MaskMap& mask) {
    stylized.validate("alpha_composite(stylized)");
    original.validate("alpha_composite(original)");
    check_mask(mask, "alpha_composite");
    if (stylized.height != original.height || stylized.width != original.width || !original.same_dims(mask))
        throw InvalidArgument("alpha_composite: stylized, original and mask must share spatial dims");
    if (stylized.channels != original.channels)
        throw InvalidArgument("alpha_composite: stylized and original must share channel count");

    ImageBuffer out(original.height, original.width, original.channels);
    const std::size_t plane = original.plane_size();
    for (int c = 0; c < original.channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const float m = mask.values[i];
            const std::size_t idx = c * plane + i;
            out.values[idx] = m * stylized.values[idx] + (1.0f - m) * original.values[idx];
        }
    }
    return out;
}

MaskMap binarize(const MaskMap& mask, float threshold) {
    MaskMap out(mask.height, mask.width);
    std::transform(mask.values.begin(), mask.values.end(), out.values.begin(),
                   [threshold](float v) { return v >= threshold ? 1.0f : 0.0f; });
    return out;
}

FeatureMap pad_features(const FeatureMap& input, int padding, PadMode mode) {
    if (padding < 0) throw InvalidArgument("pad_features: padding must be non-negative");
    if (padding == 0) return input;
    FeatureMap out(input.channels, input.height + 2 * padding, input.width + 2 * padding, 0.0f);
    for (int c = 0; c < input.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            const int sy = y - padding;
            const bool row_in = sy >= 0 && sy < input.height;
            if (!row_in && mode == PadMode::zero) continue;
            const int ry = row_in ? sy : border_index(sy, input.height, mode);
            for (int x = 0; x < out.width; ++x) {
                const int sx = x - padding;
                const bool col_in = sx >= 0 && sx < input.width;
                if (row_in && col_in) {
                    out.at(c, y, x) = input.at(c, sy, sx);
                } else if (mode != PadMode::zero) {
                    out.at(c, y, x) = input.at(c, ry, col_in ? sx : border_index(sx, input.width, mode));
                }
            }
        }
    }
    return out;
}

FeatureMap max_pool_features(const FeatureMap& input, int kernel, int stride) {
    if (kernel < 1 || stride < 1) throw InvalidArgument("max_pool_features: kernel and stride must be >= 1");
    if (input.height < kernel || input.width < kernel)
        throw InvalidArgument("max_pool_features: input smaller than kernel");
    const int out_h = (input.height - kernel) / stride + 1;
    const int out_w = (input.width - kernel) / stride + 1;
    FeatureMap out(input.channels, out_h, out_w);
    for (int c = 0; c < input.channels; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                float m = input.at(c, oy * stride, ox * stride);
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx) m = std::max(m, input.at(c, oy * stride + ky, ox * stride + kx));
                out.at(c, oy, ox) = m;
            }
        }
    }
    return out;
}

FeatureMap resize_nearest(const FeatureMap& input, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("resize_nearest: output dims must be >= 1");
    FeatureMap out(input.channels, out_h, out_w);
    std::vector<int> xs(out_w);
    for (int x = 0; x < out_w; ++x)
        xs[x] = std::min(input.width - 1, static_cast<int>(static_cast<long long>(x) * input.width / out_w));
    for (int c = 0; c < input.channels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            const int sy = std::min(input.height - 1, static_cast<int>(static_cast<long long>(y) * input.height / out_h));
            for (int x = 0; x < out_w; ++x) out.at(c, y, x) = input.at(c, sy, xs[x]);
        }
    }
    return out;
}

void relu_inplace(FeatureMap& features) {
    for (float& v : features.values) v = std::max(v, 0.0f);
}

void apply_mask_inplace(FeatureMap& features, const MaskMap& mask) {
    if (!features.same_dims(mask)) throw InvalidArgument("apply_mask_inplace: dims mismatch");
    const std::size_t plane = features.plane_size();
    for (int c = 0; c < features.channels; ++c) {
        float* p = features.values.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] *= mask.values[i];
    }
}

} // namespace pcstyle
