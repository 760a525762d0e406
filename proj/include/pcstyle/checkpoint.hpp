#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace pcstyle {

/// One float32 array stored in a checkpoint container.
struct NamedArray {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t element_count() const;
};

/// In-memory image of a checkpoint container file.
///
/// On-disk layout (all integers little-endian):
///   8 bytes   magic "PCSTCKP1"
///   8 bytes   uint64 header length N
///   N bytes   UTF-8 JSON header:
///             {"format": "pcstyle-checkpoint", "version": 1,
///              "metadata": {...},
///              "arrays": [{"name", "shape", "dtype": "float32", "offset", "count"}, ...]}
///   payload   float32 data; each array's `offset` is in bytes from the payload start
struct CheckpointContainer {
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[8] = {'P', 'C', 'S', 'T', 'C', 'K', 'P', '1'};

/// Throws IoError if the file cannot be opened, CheckpointFormatError if it is malformed or truncated.
CheckpointContainer read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const CheckpointContainer& container);

} // namespace pcstyle
