#include "pcstyle/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "pcstyle/errors.hpp"

namespace pcstyle {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t read_u64(const std::string& bytes, std::size_t pos) {
    std::uint64_t v = 0;
    std::memcpy(&v, bytes.data() + pos, sizeof(v));
    return v;
}

} // namespace

std::int64_t NamedArray::element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

const NamedArray* CheckpointContainer::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

CheckpointContainer read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw CheckpointFormatError("not a pcstyle checkpoint (bad magic): " + path.string());
    const std::uint64_t header_len = read_u64(bytes, 8);
    if (header_len > bytes.size() - 16) throw CheckpointFormatError("checkpoint header truncated: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    if (header.value("format", "") != "pcstyle-checkpoint" || header.value("version", 0) != 1)
        throw CheckpointFormatError("unsupported checkpoint format/version in " + path.string());

    const std::size_t payload = 16 + header_len;
    CheckpointContainer out;
    out.metadata = header.value("metadata", nlohmann::json::object());
    try {
        for (const auto& entry : header.at("arrays")) {
            NamedArray a;
            a.name = entry.at("name").get<std::string>();
            a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            if (entry.value("dtype", "") != "float32")
                throw CheckpointFormatError("array '" + a.name + "' has unsupported dtype");
            for (auto d : a.shape)
                if (d < 0) throw CheckpointFormatError("array '" + a.name + "' has a negative dimension");
            const auto count = entry.at("count").get<std::uint64_t>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            if (count != static_cast<std::uint64_t>(a.element_count()))
                throw CheckpointFormatError("array '" + a.name + "' count does not match its shape");
            if (offset % 4 != 0 || offset > bytes.size() - payload || count > (bytes.size() - payload - offset) / 4)
                throw CheckpointFormatError("array '" + a.name + "' data truncated");
            a.data.resize(count);
            std::memcpy(a.data.data(), bytes.data() + payload + offset, count * sizeof(float));
            out.arrays.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError("checkpoint array table malformed: " + std::string(e.what()));
    }
    return out;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointContainer& container) {
    nlohmann::json header;
    header["format"] = "pcstyle-checkpoint";
    header["version"] = 1;
    header["metadata"] = container.metadata;
    header["arrays"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& a : container.arrays) {
        if (static_cast<std::int64_t>(a.data.size()) != a.element_count())
            throw InvalidArgument("write_checkpoint: array '" + a.name + "' data size does not match its shape");
        header["arrays"].push_back(
            {{"name", a.name}, {"shape", a.shape}, {"dtype", "float32"}, {"offset", offset}, {"count", a.data.size()}});
        offset += a.data.size() * sizeof(float);
    }
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : container.arrays)
        out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

} // namespace pcstyle
