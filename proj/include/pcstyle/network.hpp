#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcstyle/checkpoint.hpp"
#include "pcstyle/masked_ops.hpp"

namespace pcstyle {

/// One step of the encoder or decoder.
struct NetworkLayer {
    enum class Kind { conv, max_pool, upsample };

    Kind kind = Kind::conv;
    /// Checkpoint prefix of the layer's arrays ("encoder.conv2"); empty for parameter-free steps.
    std::string name;
    ConvSpec conv;
    /// Border added before the convolution; ConvSpec::padding stays 0 in network layers.
    int pad = 0;
    PadMode feature_pad = PadMode::reflect;
    PadMode mask_pad = PadMode::reflect;
    bool relu = false;
    /// Pool kernel and stride, or upsampling factor.
    int factor = 2;
    /// Encoder: stage emitted after this layer ("r11", ...). Decoder: unused.
    std::string stage;
    /// Decoder: content features may be blended in after this layer.
    bool blend_point = false;

    bool operator==(const NetworkLayer&) const = default;
};

/// One statistics branch of the transform module: a small conv stack whose
/// masked Gram matrix is fed through a fully connected layer to an m x m matrix.
struct StatisticsBranch {
    std::vector<NetworkLayer> convs;
    std::vector<float> fc_weight;  // [m*m][m*m]
    std::vector<float> fc_bias;    // [m*m]

    bool operator==(const StatisticsBranch&) const = default;
};

struct TransformModule {
    int matrix_size = 32;
    StatisticsBranch content;
    StatisticsBranch style;
    ConvSpec compress;  // 1x1, C -> m
    ConvSpec unzip;     // 1x1, m -> C

    bool operator==(const TransformModule&) const = default;
};

struct NetworkMetadata {
    std::string source;
    /// Pixel values enter the encoder as (v - mean) / scale and leave the decoder as v * scale + mean.
    std::array<float, 3> input_mean{0.0f, 0.0f, 0.0f};
    std::array<float, 3> input_scale{1.0f, 1.0f, 1.0f};
    /// Multiplier applied to the summed Gram distances of perceptual_style_loss.
    double style_loss_scale = 1.0;

    bool operator==(const NetworkMetadata&) const = default;
};

/// Linear style-transfer autoencoder (relu3_1 variant). Immutable after construction.
struct StyleNetwork {
    NetworkMetadata metadata;
    std::vector<NetworkLayer> encoder;
    TransformModule transform;
    std::vector<NetworkLayer> decoder;

    /// Channel count at the transform stage.
    int feature_channels() const;
    /// Number of layers carrying weights (convolutions and fully connected layers).
    std::size_t parameter_layer_count() const;
    /// Names of the encoder stages in order, shallowest first.
    std::vector<std::string> stage_names() const;

    bool operator==(const StyleNetwork&) const = default;
};

struct ArraySchema {
    std::string name;
    std::vector<std::int64_t> shape;
};

/// Expected arrays of a relu3_1 checkpoint, in canonical order.
std::vector<ArraySchema> r31_schema();

/// Builds a network from a container. Throws CheckpointFormatError naming the
/// first missing or mis-shaped array.
StyleNetwork build_network(const CheckpointContainer& container);
CheckpointContainer to_checkpoint(const StyleNetwork& network);

/// read_checkpoint + build_network.
StyleNetwork load_weights(const std::filesystem::path& checkpoint_path);
void save_weights(const StyleNetwork& network, const std::filesystem::path& checkpoint_path);

/// Same architecture with seeded random weights, for running without the
/// pretrained checkpoint. Statistics branches start near the identity transform.
StyleNetwork make_random_network(std::uint64_t seed);

/// Style-loss multiplier stored in random networks. Puts the reference fixture pair
/// (fx_000 with its seed-0 style, partialconv, default settings, random:7) in 10^2..10^3.
inline constexpr double kRandomNetworkStyleLossScale = 1000.0;

/// Copy of the network with the window renormalization of every convolution set to `on`.
StyleNetwork with_renormalize(StyleNetwork network, bool on);

} // namespace pcstyle
