#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pcstyle {

/// Single-channel validity map in [0,1], row-major.
struct MaskMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    MaskMap() = default;
    MaskMap(int h, int w, float fill = 0.0f);

    static MaskMap ones(int h, int w) { return MaskMap(h, w, 1.0f); }
    static MaskMap zeros(int h, int w) { return MaskMap(h, w, 0.0f); }

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    bool same_dims(const MaskMap& other) const { return height == other.height && width == other.width; }

    /// Every value is exactly 0 or 1.
    bool is_binary() const;
    /// Every value is finite and within [0,1].
    bool is_valid() const;
    /// Number of pixels whose value exceeds `threshold`.
    std::size_t count_above(float threshold) const;

    bool operator==(const MaskMap&) const = default;
};

/// Channel-planar (C x H x W) float array.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, float fill = 0.0f);

    float& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::span<float> plane(int c) { return {values.data() + c * plane_size(), plane_size()}; }
    std::span<const float> plane(int c) const { return {values.data() + c * plane_size(), plane_size()}; }

    bool same_dims(const MaskMap& m) const { return height == m.height && width == m.width; }
    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const;

    bool operator==(const FeatureMap&) const = default;
};

/// A feature map paired with its same-resolution validity mask.
struct MaskedFeature {
    FeatureMap features;
    MaskMap mask;

    /// Throws InvalidArgument if the spatial dims disagree.
    void check_consistent(const char* where) const;
};

/// Image with 1 or 3 channels, values in [0,1], channel-planar like FeatureMap.
struct ImageBuffer {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> values;

    ImageBuffer() = default;
    ImageBuffer(int h, int w, int c, float fill = 0.0f);

    float& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::span<const float> plane(int c) const { return {values.data() + c * plane_size(), plane_size()}; }

    bool same_dims(const MaskMap& m) const { return height == m.height && width == m.width; }

    /// Throws InvalidArgument unless dims >= 1, channels in {1,3} and values finite in [0,1].
    void validate(const char* where) const;

    bool operator==(const ImageBuffer&) const = default;
};

FeatureMap to_features(const ImageBuffer& image);
/// Clamps to [0,1]. Throws if the channel count is not 1 or 3.
ImageBuffer to_image(const FeatureMap& features);

} // namespace pcstyle
