#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewsel/error.hpp"
#include "fewsel/rng.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

// Partition of the train set into K near-equal folds. K=N gives singleton
// folds (leave-one-out).
struct FoldPlan {
    std::size_t k = 0;
    std::map<std::string, std::size_t> assignment;  // example id -> fold index
    std::uint64_t seed = 0;

    std::size_t fold_of(const std::string& example_id) const {
        auto it = assignment.find(example_id);
        if (it == assignment.end()) throw DataError("fold plan: unknown example id " + example_id);
        return it->second;
    }
};

inline FoldPlan make_folds(const TrainSet& train, std::size_t k, std::uint64_t seed) {
    const std::size_t n = train.size();
    if (k < 2 || k > n)
        throw ConfigError("make_folds: k=" + std::to_string(k) + " out of range [2, " + std::to_string(n) + "]");
    std::vector<std::string> ids = train.ids();
    Rng rng(seed);
    rng.shuffle(ids);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    for (std::size_t i = 0; i < ids.size(); ++i) plan.assignment[ids[i]] = i % k;
    return plan;
}

// Singleton folds in train-set order; the implicit plan of the paper's
// shared-pass protocol.
inline FoldPlan singleton_folds(const TrainSet& train) {
    FoldPlan plan;
    plan.k = train.size();
    for (std::size_t i = 0; i < train.size(); ++i) plan.assignment[train.examples[i].id] = i;
    return plan;
}

} // namespace fewsel
