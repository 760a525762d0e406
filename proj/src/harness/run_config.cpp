#include "pcstyle/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "pcstyle/errors.hpp"
#include "pcstyle/hash.hpp"

namespace pcstyle {
namespace {

namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const char* expected) {
    throw ConfigError("config key '" + key + "': cannot parse '" + std::string(value) + "' as " + expected);
}

template <typename T>
T parse_number(const std::string& key, std::string_view v, const char* expected) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, expected);
    return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

fs::path resolve(std::string_view v, const fs::path& base) {
    fs::path p{std::string(v)};
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return (base / p).lexically_normal();
}

std::string real_text(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string_view method_name(Method m) {
    switch (m) {
    case Method::partialconv: return "partialconv";
    case Method::style_then_mask: return "style-then-mask";
    case Method::mask_then_style: return "mask-then-style";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : {Method::partialconv, Method::style_then_mask, Method::mask_then_style})
        if (method_name(m) == name) return m;
    throw ConfigError("unknown method '" + std::string(name) +
                      "' (expected partialconv, style-then-mask or mask-then-style)");
}

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys{
        "dataset_root", "style_dir",     "weights",         "output_dir",      "seed",
        "min_mask_area_fraction",        "bins",            "n_projections",   "feather_before",
        "expand_during", "content_feather_decoder",         "feather_kernel_px", "renormalize",
        "methods",      "max_images",    "max_side",        "workers"};
    return keys;
}

void RunConfig::validate() const {
    if (!(min_mask_area_fraction > 0.0 && min_mask_area_fraction < 1.0))
        throw ConfigError("min_mask_area_fraction must be in (0,1)");
    if (bins < 2) throw ConfigError("bins must be >= 2");
    if (n_projections < 1) throw ConfigError("n_projections must be >= 1");
    if (blend.feather_kernel_px < 1 || blend.feather_kernel_px % 2 == 0)
        throw ConfigError("feather_kernel_px must be odd and >= 1");
    if (methods.empty()) throw ConfigError("methods must name at least one method");
    if (max_images < 0) throw ConfigError("max_images must be >= 0");
    if (max_side != 0 && max_side < kMinImageSide)
        throw ConfigError("max_side must be 0 or >= " + std::to_string(kMinImageSide));
    if (workers < 1) throw ConfigError("workers must be >= 1");
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "dataset_root = " << dataset_root.generic_string() << '\n'
       << "style_dir = " << style_dir.generic_string() << '\n'
       << "weights = " << weights << '\n'
       << "seed = " << seed << '\n'
       << "min_mask_area_fraction = " << real_text(min_mask_area_fraction) << '\n'
       << "bins = " << bins << '\n'
       << "n_projections = " << n_projections << '\n'
       << "feather_before = " << b(blend.feather_before) << '\n'
       << "expand_during = " << b(blend.expand_during) << '\n'
       << "content_feather_decoder = " << b(blend.content_feather_decoder) << '\n'
       << "feather_kernel_px = " << blend.feather_kernel_px << '\n'
       << "renormalize = " << b(renormalize) << '\n'
       << "methods = ";
    for (std::size_t i = 0; i < methods.size(); ++i) os << (i ? "," : "") << method_name(methods[i]);
    os << '\n' << "max_images = " << max_images << '\n' << "max_side = " << max_side << '\n';
    return os.str();
}

std::string RunConfig::hash() const {
    Fnv1a h;
    h.update(canonical());
    return h.hex();
}

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
    RunConfig cfg;
    std::map<std::string, int> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view v = trim(line.substr(eq + 1));
        const auto& keys = run_config_keys();
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (seen.count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' repeats line " +
                              std::to_string(seen[key]));
        seen[key] = line_no;

        if (key == "dataset_root") cfg.dataset_root = resolve(v, base_dir);
        else if (key == "style_dir") cfg.style_dir = resolve(v, base_dir);
        else if (key == "output_dir") cfg.output_dir = resolve(v, base_dir);
        else if (key == "weights") cfg.weights = v.starts_with("random:") ? std::string(v) : resolve(v, base_dir).string();
        else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, v, "an unsigned integer");
        else if (key == "min_mask_area_fraction") cfg.min_mask_area_fraction = parse_number<double>(key, v, "a real");
        else if (key == "bins") cfg.bins = parse_number<int>(key, v, "an integer");
        else if (key == "n_projections") cfg.n_projections = parse_number<int>(key, v, "an integer");
        else if (key == "feather_before") cfg.blend.feather_before = parse_bool(key, v);
        else if (key == "expand_during") cfg.blend.expand_during = parse_bool(key, v);
        else if (key == "content_feather_decoder") cfg.blend.content_feather_decoder = parse_bool(key, v);
        else if (key == "feather_kernel_px") cfg.blend.feather_kernel_px = parse_number<int>(key, v, "an integer");
        else if (key == "renormalize") cfg.renormalize = parse_bool(key, v);
        else if (key == "max_images") cfg.max_images = parse_number<int>(key, v, "an integer");
        else if (key == "max_side") cfg.max_side = parse_number<int>(key, v, "an integer");
        else if (key == "workers") cfg.workers = parse_number<int>(key, v, "an integer");
        else if (key == "methods") {
            cfg.methods.clear();
            std::size_t p = 0;
            while (p <= v.size()) {
                const auto comma = v.find(',', p);
                const auto item = trim(v.substr(p, comma == std::string_view::npos ? std::string_view::npos : comma - p));
                if (!item.empty()) {
                    const Method m = parse_method(item);
                    if (std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end())
                        throw ConfigError("methods: '" + std::string(item) + "' listed twice");
                    cfg.methods.push_back(m);
                }
                p = comma == std::string_view::npos ? v.size() + 1 : comma + 1;
            }
        }
    }
    if (const char* env = std::getenv(kWeightsEnv); env && *env) cfg.weights = env;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), fs::absolute(path).parent_path());
}

} // namespace pcstyle
