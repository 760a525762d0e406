#pragma once

#include <filesystem>

#include "pcstyle/tensor.hpp"

namespace pcstyle {

/// PNG or JPEG (8 or 16 bit) to [0,1] floats; gray stays one channel, colour becomes RGB,
/// alpha is dropped. Throws IoError when the file is missing or undecodable.
ImageBuffer read_image(const std::filesystem::path& path);

/// Single-channel 8-bit mask file: values > 127 are inside (1), others 0.
/// Colour files are converted to gray first.
MaskMap read_mask(const std::filesystem::path& path);

/// Lossless 8-bit PNG, round(v * 255) after clamping to [0,1].
void write_png(const std::filesystem::path& path, const ImageBuffer& image);
void write_mask_png(const std::filesystem::path& path, const MaskMap& mask);

/// Area-averaging resize for images, nearest-neighbour for masks (stays binary).
ImageBuffer resize_image_area(const ImageBuffer& image, int height, int width);
MaskMap resize_mask_nearest(const MaskMap& mask, int height, int width);

/// Dims with the longer side capped at `max_side` (aspect kept, each side >= 1);
/// unchanged when already within the cap or when max_side <= 0.
std::pair<int, int> capped_dims(int height, int width, int max_side);

} // namespace pcstyle
