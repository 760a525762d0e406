#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace pcstyle {

/// 64-bit FNV-1a, incremental.
class Fnv1a {
public:
    void update(std::span<const std::byte> bytes) {
        for (std::byte b : bytes) {
            state_ ^= static_cast<std::uint64_t>(b);
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }
    template <typename T>
    void update_value(const T& v) {
        update(std::as_bytes(std::span(&v, 1)));
    }

    std::uint64_t digest() const { return state_; }
    /// 16 lowercase hex digits.
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string Fnv1a::hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
    return out;
}

} // namespace pcstyle
