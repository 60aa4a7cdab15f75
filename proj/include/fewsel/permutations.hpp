#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "fewsel/error.hpp"
#include "fewsel/rng.hpp"

namespace fewsel {

// n!, saturating at SIZE_MAX so comparisons against a budget stay safe.
inline std::size_t saturating_factorial(std::size_t n) {
    std::size_t f = 1;
    for (std::size_t i = 2; i <= n; ++i) {
        if (f > std::numeric_limits<std::size_t>::max() / i) return std::numeric_limits<std::size_t>::max();
        f *= i;
    }
    return f;
}

struct PermutationPlan {
    enum class Mode { Exhaustive, Balanced };

    std::size_t n = 0;
    Mode mode = Mode::Exhaustive;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::uint32_t>> orderings;

    std::size_t size() const { return orderings.size(); }
};

// If n! fits the budget, every ordering (lexicographic). Otherwise a
// position-balanced sample: budget/n Latin-square-style blocks, each the n
// cyclic rotations of a random permutation (rows shuffled within the
// block), so every example occupies every position exactly budget/n times.
// A block that repeats an already-used rotation class is resampled whole,
// which keeps the balance exact.
inline PermutationPlan plan_permutations(std::size_t n, std::size_t budget, std::uint64_t seed) {
    if (n == 0) throw ConfigError("plan_permutations: n must be positive");
    if (budget < n) throw ConfigError("plan_permutations: budget must be at least n");

    PermutationPlan plan;
    plan.n = n;
    plan.seed = seed;

    const std::size_t total = saturating_factorial(n);
    if (total <= budget) {
        plan.mode = PermutationPlan::Mode::Exhaustive;
        std::vector<std::uint32_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            plan.orderings.push_back(perm);
        } while (std::next_permutation(perm.begin(), perm.end()));
        return plan;
    }

    if (budget % n != 0)
        throw ConfigError("plan_permutations: budget " + std::to_string(budget) +
                          " not divisible by n=" + std::to_string(n) + " in balanced mode");
    plan.mode = PermutationPlan::Mode::Balanced;
    Rng rng(seed);
    const std::size_t blocks = budget / n;
    std::set<std::vector<std::uint32_t>> used_classes;  // canonical rotation of each block's base
    for (std::size_t b = 0; b < blocks; ++b) {
        std::vector<std::uint32_t> base(n);
        for (;;) {
            std::iota(base.begin(), base.end(), 0);
            rng.shuffle(base);
            // canonical representative: the rotation starting at value 0
            std::vector<std::uint32_t> canon(n);
            std::size_t zero_at = static_cast<std::size_t>(
                std::find(base.begin(), base.end(), 0u) - base.begin());
            for (std::size_t i = 0; i < n; ++i) canon[i] = base[(zero_at + i) % n];
            if (used_classes.insert(canon).second) break;
        }
        std::vector<std::size_t> row_order(n);
        std::iota(row_order.begin(), row_order.end(), 0);
        rng.shuffle(row_order);
        for (std::size_t r : row_order) {
            std::vector<std::uint32_t> row(n);
            for (std::size_t i = 0; i < n; ++i) row[i] = base[(i + r) % n];
            plan.orderings.push_back(std::move(row));
        }
    }
    return plan;
}

} // namespace fewsel
