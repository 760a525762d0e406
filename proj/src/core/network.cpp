#include "pcstyle/network.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "pcstyle/errors.hpp"

namespace pcstyle {
namespace {

constexpr int kMatrixSize = 32;

NetworkLayer conv_layer(std::string name, int in_c, int out_c, int k, bool relu) {
    NetworkLayer l;
    l.kind = NetworkLayer::Kind::conv;
    l.name = std::move(name);
    l.conv.in_channels = in_c;
    l.conv.out_channels = out_c;
    l.conv.kernel_h = l.conv.kernel_w = k;
    l.pad = k / 2;
    l.relu = relu;
    return l;
}

NetworkLayer step(NetworkLayer::Kind kind) {
    NetworkLayer l;
    l.kind = kind;
    return l;
}

/// Transform-branch convs zero-pad their features like the original, and the
/// pad inherits the validity of the adjacent pixel, so a full mask is dense.
NetworkLayer branch_conv(std::string name, int in_c, int out_c, bool relu) {
    NetworkLayer l = conv_layer(std::move(name), in_c, out_c, 3, relu);
    l.feature_pad = PadMode::zero;
    l.mask_pad = PadMode::replicate;
    return l;
}

StatisticsBranch branch(const std::string& prefix) {
    StatisticsBranch b;
    b.convs.push_back(branch_conv(prefix + ".convs.0", 256, 128, true));
    b.convs.push_back(branch_conv(prefix + ".convs.2", 128, 64, true));
    b.convs.push_back(branch_conv(prefix + ".convs.4", 64, kMatrixSize, false));
    return b;
}

ConvSpec pointwise(int in_c, int out_c) {
    ConvSpec s;
    s.in_channels = in_c;
    s.out_channels = out_c;
    return s;
}

StyleNetwork skeleton() {
    using K = NetworkLayer::Kind;
    StyleNetwork n;
    n.metadata.source = "uninitialized";

    auto& e = n.encoder;
    e.push_back(conv_layer("encoder.conv1", 3, 3, 1, false));
    e.push_back(conv_layer("encoder.conv2", 3, 64, 3, true));
    e.back().stage = "r11";
    e.push_back(conv_layer("encoder.conv3", 64, 64, 3, true));
    e.push_back(step(K::max_pool));
    e.push_back(conv_layer("encoder.conv4", 64, 128, 3, true));
    e.back().stage = "r21";
    e.push_back(conv_layer("encoder.conv5", 128, 128, 3, true));
    e.push_back(step(K::max_pool));
    e.push_back(conv_layer("encoder.conv6", 128, 256, 3, true));
    e.back().stage = "r31";

    n.transform.matrix_size = kMatrixSize;
    n.transform.content = branch("transform.cnet");
    n.transform.style = branch("transform.snet");
    n.transform.compress = pointwise(256, kMatrixSize);
    n.transform.unzip = pointwise(kMatrixSize, 256);

    auto& d = n.decoder;
    d.push_back(conv_layer("decoder.conv7", 256, 128, 3, true));
    d.back().blend_point = true;
    d.push_back(step(K::upsample));
    d.push_back(conv_layer("decoder.conv8", 128, 128, 3, true));
    d.back().blend_point = true;
    d.push_back(conv_layer("decoder.conv9", 128, 64, 3, true));
    d.back().blend_point = true;
    d.push_back(step(K::upsample));
    d.push_back(conv_layer("decoder.conv10", 64, 64, 3, true));
    d.back().blend_point = true;
    d.push_back(conv_layer("decoder.conv11", 64, 3, 3, false));
    return n;
}

using ParamVisitor = std::function<void(const std::string& name, const std::vector<std::int64_t>& shape,
                                        std::vector<float>& data, std::int64_t fan_in)>;

void visit_conv(const std::string& name, ConvSpec& s, const ParamVisitor& fn) {
    const std::int64_t fan_in = static_cast<std::int64_t>(s.in_channels) * s.kernel_h * s.kernel_w;
    fn(name + ".weight", {s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, s.weights, fan_in);
    fn(name + ".bias", {s.out_channels}, s.bias, fan_in);
}

void visit_branch(const std::string& prefix, StatisticsBranch& b, int m, const ParamVisitor& fn) {
    for (auto& l : b.convs) visit_conv(l.name, l.conv, fn);
    fn(prefix + ".fc.weight", {m * m, m * m}, b.fc_weight, m * m);
    fn(prefix + ".fc.bias", {m * m}, b.fc_bias, m * m);
}

/// Canonical parameter order: encoder, transform module, decoder.
void visit_params(StyleNetwork& n, const ParamVisitor& fn) {
    for (auto& l : n.encoder)
        if (l.kind == NetworkLayer::Kind::conv) visit_conv(l.name, l.conv, fn);
    const int m = n.transform.matrix_size;
    visit_branch("transform.cnet", n.transform.content, m, fn);
    visit_branch("transform.snet", n.transform.style, m, fn);
    visit_conv("transform.compress", n.transform.compress, fn);
    visit_conv("transform.unzip", n.transform.unzip, fn);
    for (auto& l : n.decoder)
        if (l.kind == NetworkLayer::Kind::conv) visit_conv(l.name, l.conv, fn);
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

template <std::size_t N>
std::array<float, N> read_triplet(const nlohmann::json& meta, const char* key, float fallback) {
    std::array<float, N> out{};
    out.fill(fallback);
    if (!meta.contains(key)) return out;
    const auto v = meta.at(key).get<std::vector<float>>();
    if (v.size() != N) throw CheckpointFormatError(std::string("metadata.") + key + " must have 3 entries");
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

} // namespace

int StyleNetwork::feature_channels() const { return transform.compress.in_channels; }

std::size_t StyleNetwork::parameter_layer_count() const {
    std::size_t n = 0;
    for (const auto& l : encoder) n += l.kind == NetworkLayer::Kind::conv;
    for (const auto& l : decoder) n += l.kind == NetworkLayer::Kind::conv;
    n += transform.content.convs.size() + transform.style.convs.size() + 2;  // + two fc layers
    return n + 2;                                                          // compress, unzip
}

std::vector<std::string> StyleNetwork::stage_names() const {
    std::vector<std::string> out;
    for (const auto& l : encoder)
        if (!l.stage.empty()) out.push_back(l.stage);
    return out;
}

std::vector<ArraySchema> r31_schema() {
    StyleNetwork n = skeleton();
    std::vector<ArraySchema> out;
    visit_params(n, [&](const std::string& name, const std::vector<std::int64_t>& shape, std::vector<float>&,
                        std::int64_t) { out.push_back({name, shape}); });
    return out;
}

StyleNetwork build_network(const CheckpointContainer& container) {
    StyleNetwork n = skeleton();
    visit_params(n, [&](const std::string& name, const std::vector<std::int64_t>& shape, std::vector<float>& data,
                        std::int64_t) {
        const NamedArray* a = container.find(name);
        if (!a) throw CheckpointFormatError("checkpoint is missing layer array '" + name + "'");
        if (a->shape != shape)
            throw CheckpointFormatError("layer array '" + name + "' has shape " + shape_string(a->shape) +
                                        ", expected " + shape_string(shape));
        for (float v : a->data)
            if (!std::isfinite(v)) throw CheckpointFormatError("layer array '" + name + "' contains non-finite values");
        data = a->data;
    });

    const auto& meta = container.metadata;
    try {
        if (meta.contains("architecture") && meta.at("architecture").get<std::string>() != "linear-r31")
            throw CheckpointFormatError("unsupported architecture '" + meta.at("architecture").get<std::string>() + "'");
        n.metadata.source = meta.value("source", std::string("unknown"));
        n.metadata.input_mean = read_triplet<3>(meta, "input_mean", 0.0f);
        n.metadata.input_scale = read_triplet<3>(meta, "input_scale", 1.0f);
        n.metadata.style_loss_scale = meta.value("style_loss_scale", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError("checkpoint metadata malformed: " + std::string(e.what()));
    }
    for (float s : n.metadata.input_scale)
        if (!(s > 0.0f) || !std::isfinite(s)) throw CheckpointFormatError("metadata.input_scale must be positive");
    if (!(n.metadata.style_loss_scale > 0.0) || !std::isfinite(n.metadata.style_loss_scale))
        throw CheckpointFormatError("metadata.style_loss_scale must be positive");
    return n;
}

CheckpointContainer to_checkpoint(const StyleNetwork& network) {
    CheckpointContainer c;
    c.metadata = {{"architecture", "linear-r31"},
                  {"source", network.metadata.source},
                  {"input_mean", network.metadata.input_mean},
                  {"input_scale", network.metadata.input_scale},
                  {"style_loss_scale", network.metadata.style_loss_scale}};
    StyleNetwork copy = network;
    visit_params(copy, [&](const std::string& name, const std::vector<std::int64_t>& shape, std::vector<float>& data,
                           std::int64_t) { c.arrays.push_back({name, shape, data}); });
    return c;
}

StyleNetwork load_weights(const std::filesystem::path& checkpoint_path) {
    if (!std::filesystem::exists(checkpoint_path)) throw IoError("checkpoint not found: " + checkpoint_path.string());
    return build_network(read_checkpoint(checkpoint_path));
}

void save_weights(const StyleNetwork& network, const std::filesystem::path& checkpoint_path) {
    write_checkpoint(checkpoint_path, to_checkpoint(network));
}

StyleNetwork make_random_network(std::uint64_t seed) {
    StyleNetwork n = skeleton();
    n.metadata.source = "random:" + std::to_string(seed);
    n.metadata.style_loss_scale = kRandomNetworkStyleLossScale;
    std::mt19937_64 rng(seed);
    const int m = n.transform.matrix_size;
    visit_params(n, [&](const std::string& name, const std::vector<std::int64_t>& shape, std::vector<float>& data,
                        std::int64_t fan_in) {
        std::int64_t count = 1;
        for (auto d : shape) count *= d;
        data.assign(static_cast<std::size_t>(count), 0.0f);
        const bool is_bias = name.ends_with(".bias");
        if (name.find(".fc.") != std::string::npos) {
            if (is_bias) {
                for (int i = 0; i < m; ++i) data[static_cast<std::size_t>(i) * m + i] = 1.0f;
            } else {
                std::normal_distribution<float> dist(0.0f, 1e-3f);
                for (auto& v : data) v = dist(rng);
            }
            return;
        }
        if (is_bias) {
            if (name == "decoder.conv11.bias") std::fill(data.begin(), data.end(), 0.5f);
            return;
        }
        float gain = std::sqrt(2.0f / static_cast<float>(fan_in));
        if (name == "decoder.conv11.weight") gain *= 0.25f;
        if (name.starts_with("transform.")) gain = std::sqrt(1.0f / static_cast<float>(fan_in));
        std::normal_distribution<float> dist(0.0f, gain);
        for (auto& v : data) v = dist(rng);
    });
    return n;
}

StyleNetwork with_renormalize(StyleNetwork network, bool on) {
    auto set = [on](std::vector<NetworkLayer>& layers) {
        for (auto& l : layers) l.conv.renormalize = on;
    };
    set(network.encoder);
    set(network.decoder);
    set(network.transform.content.convs);
    set(network.transform.style.convs);
    network.transform.compress.renormalize = on;
    network.transform.unzip.renormalize = on;
    return network;
}

} // namespace pcstyle
