#include "pcstyle/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "pcstyle/errors.hpp"
#include "pcstyle/hash.hpp"

namespace pcstyle {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::array<const char*, 3> kImageExtensions{".jpg", ".jpeg", ".png"};

bool is_image(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::find(kImageExtensions.begin(), kImageExtensions.end(), ext) != kImageExtensions.end();
}

void hash_file(Fnv1a& h, const fs::path& path, const fs::path& root) {
    h.update(fs::relative(path, root).generic_string());
    h.update(std::string_view("\0", 1));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
}

MaskRecord parse_annotation(const json& a, int height, int width) {
    const json& seg = a.at("segmentation");
    const auto size = seg.at("size").get<std::vector<int>>();
    if (size.size() != 2 || size[0] != height || size[1] != width)
        throw InvalidArgument("segmentation size does not match the image size");
    MaskRecord r;
    r.id = a.value("id", std::int64_t{0});
    const json& counts = seg.at("counts");
    r.rle = counts.is_string() ? rle_from_string(counts.get<std::string>(), height, width)
                               : rle_from_counts(counts.get<std::vector<std::uint32_t>>(), height, width);
    r.area = r.rle.area();
    return r;
}

DatasetEntry parse_entry(const fs::path& annotation, const fs::path& image) {
    std::ifstream in(annotation);
    if (!in) throw IoError("cannot read");
    const json doc = json::parse(in);
    DatasetEntry e;
    e.id = annotation.stem().string();
    e.image_path = image;
    e.annotation_path = annotation;
    const json& info = doc.at("image");
    e.height = info.at("height").get<int>();
    e.width = info.at("width").get<int>();
    if (e.height < 1 || e.width < 1) throw InvalidArgument("image size must be positive");
    for (const json& a : doc.at("annotations")) e.masks.push_back(parse_annotation(a, e.height, e.width));
    return e;
}

} // namespace

DatasetIndex index_dataset(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw IoError("dataset root '" + root.string() + "' is not a readable directory");
    std::vector<fs::path> annotations;
    std::set<fs::path> images;
    for (const auto& de : fs::directory_iterator(root, ec)) {
        if (!de.is_regular_file()) continue;
        if (de.path().extension() == ".json") annotations.push_back(de.path());
        else if (is_image(de.path())) images.insert(de.path());
    }
    if (ec) throw IoError("cannot list '" + root.string() + "': " + ec.message());
    std::sort(annotations.begin(), annotations.end());

    DatasetIndex index;
    index.root = root;
    Fnv1a h;
    for (const auto& ann : annotations) {
        fs::path image;
        for (const char* ext : kImageExtensions) {
            fs::path candidate = ann;
            candidate.replace_extension(ext);
            if (images.count(candidate)) {
                image = candidate;
                break;
            }
        }
        if (image.empty()) {
            index.warnings.push_back(ann.filename().string() + ": no matching image, skipped");
            continue;
        }
        try {
            index.entries.push_back(parse_entry(ann, image));
        } catch (const std::exception& e) {
            index.warnings.push_back(ann.filename().string() + ": " + e.what() + ", skipped");
            continue;
        }
        hash_file(h, ann, root);
        hash_file(h, image, root);
    }
    if (index.entries.empty()) throw IoError("dataset root '" + root.string() + "' has no image/annotation pairs");
    index.integrity_hash = h.hex();
    return index;
}

std::uint64_t uniform_index(std::uint64_t n, std::uint64_t seed, std::string_view salt) {
    if (n == 0) throw InvalidArgument("uniform_index: empty range");
    Fnv1a h;
    h.update_value(seed);
    h.update(salt);
    std::mt19937_64 rng(h.digest());
    // Rejection keeps every residue equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

std::optional<MaskMap> select_random_mask(const DatasetEntry& entry, double min_area_fraction, std::uint64_t seed) {
    if (!(min_area_fraction > 0.0 && min_area_fraction < 1.0))
        throw InvalidArgument("select_random_mask: min_area_fraction must be in (0,1)");
    const double pixels = static_cast<double>(entry.height) * entry.width;
    std::vector<const MaskRecord*> qualifying;
    for (const auto& m : entry.masks)
        if (static_cast<double>(m.area) / pixels >= min_area_fraction) qualifying.push_back(&m);
    if (qualifying.empty()) return std::nullopt;
    return rle_decode(qualifying[uniform_index(qualifying.size(), seed, "mask:" + entry.id)]->rle);
}

std::vector<fs::path> list_images(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("image directory '" + dir.string() + "' is not readable");
    std::vector<fs::path> out;
    for (const auto& de : fs::directory_iterator(dir, ec))
        if (de.is_regular_file() && is_image(de.path())) out.push_back(de.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("image directory '" + dir.string() + "' has no jpg/png files");
    return out;
}

} // namespace pcstyle
