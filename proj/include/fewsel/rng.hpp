#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace fewsel {

// Seeded RNG with explicit bounded-integer sampling. std::mt19937_64 output
// is standardized, but std::uniform_int_distribution is not; run outputs are
// part of the determinism contract, so the distribution step is spelled out.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Unbiased integer in [0, n) via rejection sampling.
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t span = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % span);
    }

    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace fewsel
