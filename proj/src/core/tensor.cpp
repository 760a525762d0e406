#include "pcstyle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcstyle/errors.hpp"

namespace pcstyle {

MaskMap::MaskMap(int h, int w, float fill) : height(h), width(w) {
    if (h < 0 || w < 0) throw InvalidArgument("MaskMap: negative dimensions");
    values.assign(static_cast<std::size_t>(h) * w, fill);
}

bool MaskMap::is_binary() const {
    return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

bool MaskMap::is_valid() const {
    return std::all_of(values.begin(), values.end(),
                       [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

std::size_t MaskMap::count_above(float threshold) const {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [threshold](float v) { return v > threshold; }));
}

FeatureMap::FeatureMap(int c, int h, int w, float fill) : channels(c), height(h), width(w) {
    if (c < 0 || h < 0 || w < 0) throw InvalidArgument("FeatureMap: negative dimensions");
    values.assign(static_cast<std::size_t>(c) * h * w, fill);
}

bool FeatureMap::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

void MaskedFeature::check_consistent(const char* where) const {
    if (!features.same_dims(mask)) {
        throw InvalidArgument(std::string(where) + ": feature dims " + std::to_string(features.height) + "x" +
                              std::to_string(features.width) + " do not match mask dims " +
                              std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
}

ImageBuffer::ImageBuffer(int h, int w, int c, float fill) : height(h), width(w), channels(c) {
    if (c < 0 || h < 0 || w < 0) throw InvalidArgument("ImageBuffer: negative dimensions");
    values.assign(static_cast<std::size_t>(c) * h * w, fill);
}

void ImageBuffer::validate(const char* where) const {
    if (height < 1 || width < 1) throw InvalidArgument(std::string(where) + ": image must be at least 1x1");
    if (channels != 1 && channels != 3) throw InvalidArgument(std::string(where) + ": image must have 1 or 3 channels");
    if (values.size() != static_cast<std::size_t>(channels) * height * width)
        throw InvalidArgument(std::string(where) + ": image buffer size does not match its dims");
    for (float v : values) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw InvalidArgument(std::string(where) + ": image values must be finite and within [0,1]");
    }
}

FeatureMap to_features(const ImageBuffer& image) {
    FeatureMap f(image.channels, image.height, image.width);
    f.values = image.values;
    return f;
}

ImageBuffer to_image(const FeatureMap& features) {
    if (features.channels != 1 && features.channels != 3)
        throw InvalidArgument("to_image: feature map must have 1 or 3 channels");
    ImageBuffer img(features.height, features.width, features.channels);
    std::transform(features.values.begin(), features.values.end(), img.values.begin(), [](float v) {
        if (std::isnan(v)) return 0.0f;
        return std::clamp(v, 0.0f, 1.0f);
    });
    return img;
}

} // namespace pcstyle
