#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fewsel {

// FNV-1a, 64-bit. Used for request digests, artifact checksums and the
// counter-based draws of the synthetic oracle. Not cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::uint64_t value, std::uint64_t seed) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    return fnv1a64(std::string_view(buf, 8), seed);
}

// splitmix64 finalizer; whitens fnv output before deriving uniform draws.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Uniform double in [0, 1) from 64 bits.
inline double unit_from_bits(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// Incremental digest over heterogeneous fields; a field separator keeps
// ("ab","c") and ("a","bc") distinct.
class Digest {
public:
    Digest& field(std::string_view bytes) {
        h_ = fnv1a64(bytes, h_);
        h_ = fnv1a64(std::string_view("\x1f", 1), h_);
        return *this;
    }
    Digest& field(std::uint64_t v) {
        h_ = fnv1a64(v, h_);
        h_ = fnv1a64(std::string_view("\x1f", 1), h_);
        return *this;
    }
    std::uint64_t value() const { return h_; }
    std::string hex() const { return to_hex(h_); }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

} // namespace fewsel
