#include "pcstyle/stylize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "pcstyle/errors.hpp"
#include "pcstyle/masked_ops.hpp"

namespace pcstyle {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXf;
using Dims = std::pair<int, int>;

FeatureMap normalize_input(const StyleNetwork& net, const ImageBuffer& image) {
    const ImageBuffer rgb = to_rgb(image);
    FeatureMap f = to_features(rgb);
    for (int c = 0; c < 3; ++c) {
        const float mean = net.metadata.input_mean[c], scale = net.metadata.input_scale[c];
        for (auto& v : f.plane(c)) v = (v - mean) / scale;
    }
    return f;
}

FeatureMap denormalize_output(const StyleNetwork& net, FeatureMap f) {
    for (int c = 0; c < 3; ++c) {
        const float mean = net.metadata.input_mean[c], scale = net.metadata.input_scale[c];
        for (auto& v : f.plane(c)) v = v * scale + mean;
    }
    return f;
}

MaskedFeature run_conv(const NetworkLayer& layer, const MaskedFeature& x, bool expand) {
    MaskedFeature padded{pad_features(x.features, layer.pad, layer.feature_pad),
                         mask_pad(x.mask, layer.pad, layer.mask_pad)};
    MaskedFeature y = expand ? partial_conv2d_expanded(padded, layer.conv) : partial_conv2d(padded, layer.conv);
    if (layer.relu) relu_inplace(y.features);
    return y;
}

/// Spatial dims at each pooling level of the encoder, full resolution first.
std::vector<Dims> level_dims(const StyleNetwork& net, int h, int w) {
    std::vector<Dims> out{{h, w}};
    for (const auto& l : net.encoder) {
        if (l.kind != NetworkLayer::Kind::max_pool) continue;
        h = (h - l.factor) / l.factor + 1;
        w = (w - l.factor) / l.factor + 1;
        out.emplace_back(h, w);
    }
    return out;
}

struct Centered {
    FeatureMap features;  // x - mean inside the region, 0 outside
    std::vector<float> mean;
    std::size_t count = 0;
};

Centered center_over(const FeatureMap& f, const MaskMap& region) {
    Centered out{FeatureMap(f.channels, f.height, f.width), std::vector<float>(f.channels, 0.0f), 0};
    for (float v : region.values) out.count += v > 0.0f;
    if (out.count == 0) return out;
    for (int c = 0; c < f.channels; ++c) {
        const auto src = f.plane(c);
        double s = 0.0;
        for (std::size_t i = 0; i < src.size(); ++i)
            if (region.values[i] > 0.0f) s += src[i];
        const float mean = static_cast<float>(s / static_cast<double>(out.count));
        out.mean[c] = mean;
        auto dst = out.features.plane(c);
        for (std::size_t i = 0; i < src.size(); ++i)
            if (region.values[i] > 0.0f) dst[i] = src[i] - mean;
    }
    return out;
}

/// Conv stack, masked Gram over the region, then the fully connected layer.
RowMatrix branch_matrix(const StatisticsBranch& branch, int m, const FeatureMap& centered, const MaskMap& region,
                        std::size_t count) {
    MaskedFeature x{centered, region};
    for (const auto& layer : branch.convs) {
        x = run_conv(layer, x, false);
        apply_mask_inplace(x.features, region);
        x.mask = region;
    }
    const Eigen::Map<const RowMatrix> f(x.features.values.data(), x.features.channels,
                                        static_cast<Eigen::Index>(x.features.plane_size()));
    const RowMatrix gram = (f * f.transpose()) / static_cast<float>(count);
    const Eigen::Map<const RowMatrix> fc_w(branch.fc_weight.data(), m * m, m * m);
    const Eigen::Map<const Vector> fc_b(branch.fc_bias.data(), m * m);
    const Eigen::Map<const Vector> g(gram.data(), m * m);
    const Vector out = fc_w * g + fc_b;
    return Eigen::Map<const RowMatrix>(out.data(), m, m);
}

void check_transform_stage(const StyleNetwork& net, const MaskedFeature& feat, const char* where) {
    feat.check_consistent(where);
    if (feat.features.channels != net.feature_channels())
        throw InvalidArgument(std::string(where) + ": expected " + std::to_string(net.feature_channels()) +
                              " channels at the transform stage, got " + std::to_string(feat.features.channels));
}

/// Shared decoder loop. `record` receives the features at every blend point.
FeatureMap run_decoder(const StyleNetwork& net, const MaskedFeature& feat, const MaskMap& original_mask,
                       const std::vector<MaskedFeature>* content_stages, const BlendConfig& blend,
                       std::vector<MaskedFeature>* record) {
    const auto levels = level_dims(net, original_mask.height, original_mask.width);
    std::size_t level = levels.size() - 1;
    if (feat.features.height != levels[level].first || feat.features.width != levels[level].second)
        throw InvalidArgument("decode: feature dims do not match the encoder's deepest stage for this mask");

    const bool feather = blend.content_feather_decoder;
    MaskMap weight_source;
    if (feather) {
        if (!content_stages) throw InvalidArgument("decode: content feathering requires content_stages");
        weight_source = original_mask.is_binary() ? feather_mask(original_mask, blend.feather_kernel_px) : original_mask;
    }
    MaskedFeature x = feat;
    bool dense = false;  // after a content blend the map is valid everywhere
    std::size_t blend_index = 0;

    auto working_mask = [&](int h, int w) { return dense ? MaskMap::ones(h, w) : mask_resize_bilinear(original_mask, h, w); };
    auto blend_point = [&]() {
        x.mask = working_mask(x.features.height, x.features.width);
        if (feather) {
            if (blend_index >= content_stages->size()) throw InvalidArgument("decode: too few content_stages");
            const MaskedFeature& c = (*content_stages)[blend_index];
            if (!c.features.same_shape(x.features))
                throw InvalidArgument("decode: content stage " + std::to_string(blend_index) + " has the wrong shape");
            const MaskMap w = mask_resize_bilinear(weight_source, x.features.height, x.features.width);
            const std::size_t plane = x.features.plane_size();
            for (int ch = 0; ch < x.features.channels; ++ch) {
                float* s = x.features.values.data() + ch * plane;
                const float* cv = c.features.values.data() + ch * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const float a = x.mask.values[i] > 0.0f ? w.values[i] : 0.0f;
                    s[i] = a * s[i] + (1.0f - a) * cv[i];
                }
            }
            dense = true;
            x.mask = MaskMap::ones(x.features.height, x.features.width);
        }
        if (record) record->push_back(x);
        ++blend_index;
    };

    blend_point();
    for (const auto& layer : net.decoder) {
        switch (layer.kind) {
        case NetworkLayer::Kind::conv:
            x.mask = working_mask(x.features.height, x.features.width);
            x = run_conv(layer, x, blend.expand_during);
            x.check_consistent("decode");
            if (layer.blend_point) blend_point();
            break;
        case NetworkLayer::Kind::upsample:
            if (level == 0) throw InvalidArgument("decode: more upsampling steps than encoder poolings");
            --level;
            x.features = resize_nearest(x.features, levels[level].first, levels[level].second);
            x.mask = working_mask(levels[level].first, levels[level].second);
            break;
        case NetworkLayer::Kind::max_pool:
            throw InvalidArgument("decode: pooling layer in decoder");
        }
    }
    if (x.features.channels != 3) throw InvalidArgument("decode: decoder must end with 3 channels");
    return denormalize_output(net, std::move(x.features));
}

MaskMap checked_mask(const MaskMap& mask, const ImageBuffer& image, const char* where) {
    if (!image.same_dims(mask))
        throw InvalidArgument(std::string(where) + ": mask dims must equal image dims");
    if (!mask.is_valid()) throw InvalidArgument(std::string(where) + ": mask values must be finite and in [0,1]");
    return mask;
}

} // namespace

void BlendConfig::validate() const {
    if (feather_kernel_px < 1 || feather_kernel_px % 2 == 0)
        throw InvalidArgument("BlendConfig: feather_kernel_px must be odd and >= 1");
}

void StylizeRequest::validate() const {
    content.validate("StylizeRequest.content");
    style.validate("StylizeRequest.style");
    check_image_limits(content, "content");
    check_image_limits(style, "style");
    checked_mask(mask, content, "StylizeRequest");
    blend.validate();
}

StyleTransform StyleTransform::identity(int channels) {
    StyleTransform t;
    t.channels = channels;
    t.matrix.assign(static_cast<std::size_t>(channels) * channels, 0.0f);
    for (int i = 0; i < channels; ++i) t.matrix[static_cast<std::size_t>(i) * channels + i] = 1.0f;
    t.content_mean.assign(channels, 0.0f);
    t.style_mean.assign(channels, 0.0f);
    t.offset.assign(channels, 0.0f);
    return t;
}

bool StyleTransform::all_finite() const {
    auto finite = [](const std::vector<float>& v) {
        return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
    };
    return finite(matrix) && finite(content_mean) && finite(style_mean) && finite(offset);
}

void check_image_limits(const ImageBuffer& image, const char* what) {
    if (image.height > kMaxImageSide || image.width > kMaxImageSide ||
        static_cast<long long>(image.height) * image.width > kMaxImagePixels)
        throw ResourceError(std::string(what) + " image " + std::to_string(image.width) + "x" +
                            std::to_string(image.height) + " exceeds the limit of " + std::to_string(kMaxImageSide) +
                            " per side and " + std::to_string(kMaxImagePixels) + " pixels");
    if (image.height < kMinImageSide || image.width < kMinImageSide)
        throw InvalidArgument(std::string(what) + " image must be at least " + std::to_string(kMinImageSide) +
                              " pixels per side");
}

ImageBuffer to_rgb(const ImageBuffer& image) {
    if (image.channels == 3) return image;
    if (image.channels != 1) throw InvalidArgument("to_rgb: image must have 1 or 3 channels");
    ImageBuffer out(image.height, image.width, 3);
    for (int c = 0; c < 3; ++c) std::copy(image.values.begin(), image.values.end(), out.values.begin() + c * image.plane_size());
    return out;
}

namespace {

/// Shared encoder loop. With `confine`, every convolution's output mask is
/// reset to the input region pooled to that level instead of the grown update.
std::vector<MaskedFeature> run_encoder(const StyleNetwork& network, const ImageBuffer& image, const MaskMap& mask,
                                       const BlendConfig& blend, bool confine, const char* where) {
    image.validate(where);
    check_image_limits(image, where);
    checked_mask(mask, image, where);
    MaskedFeature x{normalize_input(network, image), mask};
    MaskMap region = confine ? binarize(mask, 0.5f) : MaskMap{};
    if (confine) x.mask = region;
    std::vector<MaskedFeature> stages;
    for (const auto& layer : network.encoder) {
        switch (layer.kind) {
        case NetworkLayer::Kind::conv:
            x = run_conv(layer, x, blend.expand_during);
            if (confine) {
                apply_mask_inplace(x.features, region);
                x.mask = region;
            }
            break;
        case NetworkLayer::Kind::max_pool:
            x.features = max_pool_features(x.features, layer.factor, layer.factor);
            x.mask = mask_pool(x.mask, layer.factor, layer.factor);
            if (confine) region = x.mask;
            break;
        case NetworkLayer::Kind::upsample:
            throw InvalidArgument(std::string(where) + ": upsampling layer in encoder");
        }
        x.check_consistent(where);
        if (!layer.stage.empty()) stages.push_back(x);
    }
    return stages;
}

} // namespace

std::vector<MaskedFeature> encode(const StyleNetwork& network, const ImageBuffer& image, const MaskMap& mask,
                                  const BlendConfig& blend) {
    return run_encoder(network, image, mask, blend, false, "encode");
}

std::vector<MaskedFeature> encode_within(const StyleNetwork& network, const ImageBuffer& image, const MaskMap& region) {
    return run_encoder(network, image, region, BlendConfig{}, true, "encode_within");
}

StyleStatistics style_statistics(const StyleNetwork& network, const MaskedFeature& style_feat) {
    check_transform_stage(network, style_feat, "style_statistics");
    const MaskMap region = binarize(style_feat.mask, kTransformMaskThreshold);
    const Centered c = center_over(style_feat.features, region);
    if (c.count == 0) throw EmptyRegionError("style region is empty at the transform stage");
    const int m = network.transform.matrix_size;
    const RowMatrix mat = branch_matrix(network.transform.style, m, c.features, region, c.count);
    return {c.mean, std::vector<float>(mat.data(), mat.data() + mat.size())};
}

StyleTransform compute_style_transform(const StyleNetwork& network, const MaskedFeature& content_feat,
                                       const StyleStatistics& style) {
    check_transform_stage(network, content_feat, "compute_style_transform");
    const int C = network.feature_channels(), m = network.transform.matrix_size;
    if (style.mean.size() != static_cast<std::size_t>(C) || style.matrix.size() != static_cast<std::size_t>(m) * m)
        throw InvalidArgument("compute_style_transform: style statistics have the wrong size");

    const MaskMap region = binarize(content_feat.mask, kTransformMaskThreshold);
    const Centered c = center_over(content_feat.features, region);
    if (c.count == 0)
        throw EmptyRegionError("content mask is empty at the transform stage (region vanished under downsampling)");

    const RowMatrix c_mat = branch_matrix(network.transform.content, m, c.features, region, c.count);
    const Eigen::Map<const RowMatrix> s_mat(style.matrix.data(), m, m);
    const RowMatrix t = s_mat * c_mat;

    const auto& K = network.transform.compress;
    const auto& U = network.transform.unzip;
    const Eigen::Map<const RowMatrix> k(K.weights.data(), m, C);
    const Eigen::Map<const RowMatrix> u(U.weights.data(), C, m);
    const RowMatrix full = u * t * k;
    const Vector offset = u * (t * Eigen::Map<const Vector>(K.bias.data(), m)) + Eigen::Map<const Vector>(U.bias.data(), C);

    StyleTransform out;
    out.channels = C;
    out.matrix.assign(full.data(), full.data() + full.size());
    out.content_mean = c.mean;
    out.style_mean = style.mean;
    out.offset.assign(offset.data(), offset.data() + C);
    return out;
}

StyleTransform compute_style_transform(const StyleNetwork& network, const MaskedFeature& content_feat,
                                       const MaskedFeature& style_feat) {
    return compute_style_transform(network, content_feat, style_statistics(network, style_feat));
}

MaskedFeature apply_transform(const MaskedFeature& content_feat, const StyleTransform& t) {
    content_feat.check_consistent("apply_transform");
    const int C = content_feat.features.channels;
    if (t.channels != C || t.matrix.size() != static_cast<std::size_t>(C) * C || t.content_mean.size() != static_cast<std::size_t>(C) ||
        t.style_mean.size() != static_cast<std::size_t>(C) || t.offset.size() != static_cast<std::size_t>(C))
        throw InvalidArgument("apply_transform: transform has " + std::to_string(t.channels) +
                              " channels, features have " + std::to_string(C));
    const std::size_t n = content_feat.features.plane_size();
    const Eigen::Map<const RowMatrix> x(content_feat.features.values.data(), C, static_cast<Eigen::Index>(n));
    const Eigen::Map<const RowMatrix> mat(t.matrix.data(), C, C);
    const Eigen::Map<const Vector> cmean(t.content_mean.data(), C);
    const Vector shift = Eigen::Map<const Vector>(t.offset.data(), C) + Eigen::Map<const Vector>(t.style_mean.data(), C);

    MaskedFeature out{FeatureMap(C, content_feat.features.height, content_feat.features.width), content_feat.mask};
    Eigen::Map<RowMatrix> y(out.features.values.data(), C, static_cast<Eigen::Index>(n));
    y.noalias() = mat * (x.colwise() - cmean);
    y.colwise() += shift;
    for (std::size_t i = 0; i < n; ++i)
        if (!(content_feat.mask.values[i] > 0.0f))
            for (int ch = 0; ch < C; ++ch) out.features.values[ch * n + i] = 0.0f;
    return out;
}

std::vector<MaskedFeature> content_decoder_stages(const StyleNetwork& network, const ImageBuffer& content) {
    const MaskMap ones = MaskMap::ones(content.height, content.width);
    const auto stages = encode(network, content, ones, BlendConfig{});
    std::vector<MaskedFeature> record;
    run_decoder(network, stages.back(), ones, nullptr, BlendConfig{}, &record);
    return record;
}

FeatureMap decode_raw(const StyleNetwork& network, const MaskedFeature& feat, const MaskMap& original_mask,
                      const std::vector<MaskedFeature>* content_stages, const BlendConfig& blend) {
    blend.validate();
    feat.check_consistent("decode");
    if (!original_mask.is_valid()) throw InvalidArgument("decode: mask values must be finite and in [0,1]");
    return run_decoder(network, feat, original_mask, content_stages, blend, nullptr);
}

ImageBuffer decode(const StyleNetwork& network, const MaskedFeature& feat, const MaskMap& original_mask,
                   const std::vector<MaskedFeature>* content_stages, const BlendConfig& blend) {
    return to_image(decode_raw(network, feat, original_mask, content_stages, blend));
}

StylizeTrace stylize_masked_traced(const StyleNetwork& network, const StylizeRequest& request,
                                   const StylizeShared& shared) {
    request.validate();
    const BlendConfig& blend = request.blend;
    const ImageBuffer content = to_rgb(request.content);
    StylizeTrace trace;
    trace.composite_mask = request.mask;
    if (blend.feather_before) trace.composite_mask = feather_mask(binarize(request.mask, 0.5f), blend.feather_kernel_px);

    if (trace.composite_mask.count_above(0.0f) == 0) {
        trace.output = content;
        trace.decoded = content;
        return trace;
    }

    const auto stages = encode(network, content, trace.composite_mask, blend);
    const StyleTransform t =
        shared.style_feature ? compute_style_transform(network, stages.back(), *shared.style_feature)
                             : compute_style_transform(network, stages.back(), encode_style(network, request.style));
    trace.transformed = apply_transform(stages.back(), t);

    std::vector<MaskedFeature> own_stages;
    const std::vector<MaskedFeature>* content_stages = nullptr;
    if (blend.content_feather_decoder) {
        if (shared.content_stages) {
            content_stages = shared.content_stages;
        } else {
            own_stages = content_decoder_stages(network, content);
            content_stages = &own_stages;
        }
    }
    trace.decoded = decode(network, trace.transformed, trace.composite_mask, content_stages, blend);
    trace.output = alpha_composite(trace.decoded, content, trace.composite_mask);
    return trace;
}

ImageBuffer stylize_masked(const StyleNetwork& network, const StylizeRequest& request) {
    return stylize_masked_traced(network, request).output;
}

MaskedFeature encode_style(const StyleNetwork& network, const ImageBuffer& style) {
    return encode(network, style, MaskMap::ones(style.height, style.width), BlendConfig{}).back();
}

ImageBuffer stylize_unmasked(const StyleNetwork& network, const ImageBuffer& content, const ImageBuffer& style) {
    const MaskMap ones = MaskMap::ones(content.height, content.width);
    const auto stages = encode(network, content, ones, BlendConfig{});
    const StyleTransform t = compute_style_transform(network, stages.back(), encode_style(network, style));
    return decode(network, apply_transform(stages.back(), t), ones, nullptr, BlendConfig{});
}

ImageBuffer style_then_mask(const StyleNetwork& network, const ImageBuffer& content, const ImageBuffer& style,
                            const MaskMap& mask) {
    StylizeRequest{content, style, mask, {}}.validate();
    const ImageBuffer rgb = to_rgb(content);
    return alpha_composite(stylize_unmasked(network, rgb, style), rgb, mask);
}

ImageBuffer mask_then_style(const StyleNetwork& network, const ImageBuffer& content, const ImageBuffer& style,
                            const MaskMap& mask) {
    StylizeRequest{content, style, mask, {}}.validate();
    const ImageBuffer rgb = to_rgb(content);
    ImageBuffer blacked = rgb;
    const std::size_t plane = rgb.plane_size();
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) blacked.values[c * plane + i] *= mask.values[i];
    return alpha_composite(stylize_unmasked(network, blacked, style), rgb, mask);
}

} // namespace pcstyle
