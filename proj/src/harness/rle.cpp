#include "pcstyle/rle.hpp"

#include <numeric>

#include "pcstyle/errors.hpp"

namespace pcstyle {
namespace {

void check_total(const RleMask& r) {
    if (r.height < 0 || r.width < 0) throw InvalidArgument("rle: negative size");
    const std::uint64_t total = std::accumulate(r.counts.begin(), r.counts.end(), std::uint64_t{0});
    if (total != static_cast<std::uint64_t>(r.height) * static_cast<std::uint64_t>(r.width))
        throw InvalidArgument("rle: runs cover " + std::to_string(total) + " pixels, expected " +
                              std::to_string(static_cast<std::uint64_t>(r.height) * r.width));
}

} // namespace

std::uint64_t RleMask::area() const {
    std::uint64_t a = 0;
    for (std::size_t i = 1; i < counts.size(); i += 2) a += counts[i];
    return a;
}

RleMask rle_from_string(std::string_view s, int height, int width) {
    RleMask r{height, width, {}};
    std::size_t p = 0;
    while (p < s.size()) {
        std::int64_t x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= s.size()) throw InvalidArgument("rle: truncated run at offset " + std::to_string(p));
            const int c = static_cast<int>(static_cast<unsigned char>(s[p])) - 48;
            if (c < 0 || c > 63) throw InvalidArgument("rle: invalid character at offset " + std::to_string(p));
            if (k >= 12) throw InvalidArgument("rle: run value too long at offset " + std::to_string(p));
            x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10)) x |= -(std::int64_t{1} << (5 * k));  // sign extension
        }
        if (r.counts.size() > 2) x += r.counts[r.counts.size() - 2];
        if (x < 0 || x > 0xffffffffLL) throw InvalidArgument("rle: run length out of range");
        r.counts.push_back(static_cast<std::uint32_t>(x));
    }
    check_total(r);
    return r;
}

std::string rle_to_string(const RleMask& rle) {
    std::string s;
    for (std::size_t i = 0; i < rle.counts.size(); ++i) {
        std::int64_t x = rle.counts[i];
        if (i > 2) x -= rle.counts[i - 2];
        bool more = true;
        while (more) {
            int c = static_cast<int>(x & 0x1f);
            x >>= 5;  // arithmetic shift keeps the sign
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more) c |= 0x20;
            s.push_back(static_cast<char>(c + 48));
        }
    }
    return s;
}

RleMask rle_from_counts(std::vector<std::uint32_t> counts, int height, int width) {
    RleMask r{height, width, std::move(counts)};
    check_total(r);
    return r;
}

MaskMap rle_decode(const RleMask& rle) {
    check_total(rle);
    MaskMap m(rle.height, rle.width);
    std::uint64_t pos = 0;
    float v = 0.0f;
    for (const auto run : rle.counts) {
        for (std::uint32_t k = 0; k < run; ++k, ++pos) {
            const auto y = static_cast<int>(pos % static_cast<std::uint64_t>(rle.height));
            const auto x = static_cast<int>(pos / static_cast<std::uint64_t>(rle.height));
            m.at(y, x) = v;
        }
        v = 1.0f - v;
    }
    return m;
}

RleMask rle_encode(const MaskMap& mask) {
    RleMask r{mask.height, mask.width, {}};
    bool current = false;
    std::uint32_t run = 0;
    for (int x = 0; x < mask.width; ++x)
        for (int y = 0; y < mask.height; ++y) {
            const bool v = mask.at(y, x) > 0.5f;
            if (v != current) {
                r.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    r.counts.push_back(run);
    return r;
}

} // namespace pcstyle
