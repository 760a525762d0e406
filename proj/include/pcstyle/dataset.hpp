#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcstyle/rle.hpp"

namespace pcstyle {

/// One annotation of an image. The run-length record is decoded on demand.
struct MaskRecord {
    std::int64_t id = 0;
    std::uint64_t area = 0;  // pixels, from the runs
    RleMask rle;
};

struct DatasetEntry {
    std::string id;  // file stem
    std::filesystem::path image_path;
    std::filesystem::path annotation_path;
    int height = 0;
    int width = 0;
    std::vector<MaskRecord> masks;
};

struct DatasetIndex {
    std::filesystem::path root;
    std::vector<DatasetEntry> entries;  // sorted by id
    /// FNV-1a over the relative names and bytes of every indexed file.
    std::string integrity_hash;
    std::vector<std::string> warnings;
};

/// Pairs `<stem>.json` annotation files (image.height/width and per-annotation
/// segmentation {size, counts}) with `<stem>.{jpg,jpeg,png}` images in `root`.
/// Unreadable or corrupt annotations are skipped with a warning. Throws IoError
/// when root is unreadable or yields no entries.
DatasetIndex index_dataset(const std::filesystem::path& root);

/// Uniform choice among masks with area / (H * W) >= min_area_fraction,
/// deterministic in (entry id, seed). Empty when none qualifies.
std::optional<MaskMap> select_random_mask(const DatasetEntry& entry, double min_area_fraction, std::uint64_t seed);

/// Image files (jpg, jpeg, png) directly inside `dir`, sorted by name. Throws IoError if none.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Uniform integer in [0, n) from a 64-bit generator without modulo bias.
std::uint64_t uniform_index(std::uint64_t n, std::uint64_t seed, std::string_view salt);

} // namespace pcstyle
