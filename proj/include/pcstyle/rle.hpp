#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pcstyle/tensor.hpp"

namespace pcstyle {

/// Column-major run lengths, first run counting zeros (COCO convention).
struct RleMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> counts;

    /// Sum of the runs of ones.
    std::uint64_t area() const;
    bool operator==(const RleMask&) const = default;
};

/// Compressed COCO string form: per run, 5-bit groups with a continuation bit,
/// offset by 48; runs after the second are stored as deltas to the run two back.
/// Throws InvalidArgument on malformed strings or runs not summing to height * width.
RleMask rle_from_string(std::string_view counts, int height, int width);
std::string rle_to_string(const RleMask& rle);

/// Uncompressed form (explicit run list). Same validation as the string form.
RleMask rle_from_counts(std::vector<std::uint32_t> counts, int height, int width);

MaskMap rle_decode(const RleMask& rle);
/// Pixels with mask > 0.5 are ones.
RleMask rle_encode(const MaskMap& mask);

} // namespace pcstyle
