#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pcstyle/stylize.hpp"

namespace pcstyle {

enum class Method { partialconv, style_then_mask, mask_then_style };

std::string_view method_name(Method m);
/// Throws ConfigError on an unknown name.
Method parse_method(std::string_view name);

/// Environment variable that overrides the `weights` key.
inline constexpr const char* kWeightsEnv = "PCSTYLE_WEIGHTS";

struct RunConfig {
    std::filesystem::path dataset_root;
    std::filesystem::path style_dir;
    /// Checkpoint path, or "random:<seed>" for the seeded random network.
    std::string weights;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    double min_mask_area_fraction = 0.02;
    int bins = 256;
    int n_projections = 64;
    BlendConfig blend;
    bool renormalize = true;
    std::vector<Method> methods{Method::partialconv, Method::style_then_mask};
    /// 0 means every indexed image.
    int max_images = 0;
    /// Longer image side after loading; 0 keeps the original size.
    int max_side = 512;
    int workers = 1;

    /// Throws ConfigError on out-of-range values or an empty method list.
    void validate() const;
    /// Canonical `key = value` text of every key that affects results
    /// (output_dir and workers excluded).
    std::string canonical() const;
    /// FNV-1a of canonical(), 16 hex digits.
    std::string hash() const;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown or repeated keys and
/// unparsable values raise ConfigError. Relative paths resolve against `base_dir`.
/// The weights environment variable, when set and non-empty, replaces `weights`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
/// Reads the file (IoError when unreadable) and parses it relative to its directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Every accepted key, in canonical order.
const std::vector<std::string>& run_config_keys();

} // namespace pcstyle
