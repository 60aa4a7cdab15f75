#include <catch_amalgamated.hpp>

#include <map>
#include <set>

#include "fewsel/folds.hpp"
#include "fewsel/permutations.hpp"
#include "support/helpers.hpp"

using namespace fewsel;

namespace {

TrainSet fake_train(std::size_t n) {
    TrainSet t;
    for (std::size_t i = 0; i < n; ++i) {
        Example ex;
        ex.id = "e" + std::to_string(i);
        ex.gold_labels.push_back("y");
        t.examples.push_back(ex);
    }
    return t;
}

} // namespace

TEST_CASE("make_folds: singletons at k = N") {
    auto train = fake_train(5);
    FoldPlan plan = make_folds(train, 5, 1);
    std::set<std::size_t> folds;
    for (const auto& [id, f] : plan.assignment) folds.insert(f);
    CHECK(folds.size() == 5);
}

TEST_CASE("make_folds: 32 examples in 8 folds of 4") {
    auto train = fake_train(32);
    FoldPlan plan = make_folds(train, 8, 9);
    std::map<std::size_t, std::size_t> sizes;
    for (const auto& [id, f] : plan.assignment) sizes[f]++;
    REQUIRE(sizes.size() == 8);
    for (const auto& [f, count] : sizes) CHECK(count == 4);
}

TEST_CASE("make_folds: k out of range") {
    auto train = fake_train(5);
    CHECK_THROWS_AS(make_folds(train, 1, 1), ConfigError);
    CHECK_THROWS_AS(make_folds(train, 6, 1), ConfigError);
}

TEST_CASE("make_folds: balanced and deterministic for random shapes") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t n = 2 + rng.below(30);
        std::size_t k = 2 + rng.below(n - 1);
        auto train = fake_train(n);
        FoldPlan a = make_folds(train, k, trial);
        FoldPlan b = make_folds(train, k, trial);
        CHECK(a.assignment == b.assignment);
        std::map<std::size_t, std::size_t> sizes;
        for (const auto& [id, f] : a.assignment) sizes[f]++;
        std::size_t lo = n, hi = 0;
        for (const auto& [f, count] : sizes) {
            lo = std::min(lo, count);
            hi = std::max(hi, count);
        }
        REQUIRE(hi - lo <= 1);
        REQUIRE(sizes.size() == k);
    }
}

TEST_CASE("plan_permutations: n=5 within budget 120 is exhaustive") {
    PermutationPlan plan = plan_permutations(5, 120, 3);
    CHECK(plan.mode == PermutationPlan::Mode::Exhaustive);
    REQUIRE(plan.size() == 120);
    std::set<std::vector<std::uint32_t>> distinct(plan.orderings.begin(), plan.orderings.end());
    CHECK(distinct.size() == 120);
}

TEST_CASE("plan_permutations: n=3 with budget 100 is exhaustive (6)") {
    PermutationPlan plan = plan_permutations(3, 100, 3);
    CHECK(plan.size() == 6);
}

TEST_CASE("plan_permutations: n=10 budget=120 is balanced") {
    PermutationPlan plan = plan_permutations(10, 120, 17);
    CHECK(plan.mode == PermutationPlan::Mode::Balanced);
    REQUIRE(plan.size() == 120);

    std::set<std::vector<std::uint32_t>> distinct(plan.orderings.begin(), plan.orderings.end());
    CHECK(distinct.size() == 120);

    // every example occupies every position exactly 120/10 = 12 times
    for (std::size_t pos = 0; pos < 10; ++pos) {
        std::map<std::uint32_t, std::size_t> counts;
        for (const auto& ordering : plan.orderings) counts[ordering[pos]]++;
        REQUIRE(counts.size() == 10);
        for (const auto& [example, count] : counts) REQUIRE(count == 12);
    }
}

TEST_CASE("plan_permutations: balance property across shapes") {
    Rng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t n = 6 + rng.below(8);
        std::size_t blocks = 2 + rng.below(6);
        std::size_t budget = n * blocks;
        if (saturating_factorial(n) <= budget) continue;
        PermutationPlan plan = plan_permutations(n, budget, rng.next());
        REQUIRE(plan.size() == budget);
        for (std::size_t pos = 0; pos < n; ++pos) {
            std::map<std::uint32_t, std::size_t> counts;
            for (const auto& ordering : plan.orderings) counts[ordering[pos]]++;
            for (const auto& [example, count] : counts) REQUIRE(count == blocks);
        }
        std::set<std::vector<std::uint32_t>> distinct(plan.orderings.begin(), plan.orderings.end());
        REQUIRE(distinct.size() == plan.size());
    }
}

TEST_CASE("plan_permutations: preconditions") {
    CHECK_THROWS_AS(plan_permutations(5, 4, 1), ConfigError);    // budget < n
    CHECK_THROWS_AS(plan_permutations(10, 125, 1), ConfigError); // balanced, 10 does not divide 125
    CHECK_NOTHROW(plan_permutations(3, 100, 1));                 // divisibility only matters when balanced
}

TEST_CASE("plan_permutations: deterministic in seed") {
    PermutationPlan a = plan_permutations(10, 120, 4);
    PermutationPlan b = plan_permutations(10, 120, 4);
    CHECK(a.orderings == b.orderings);
    PermutationPlan c = plan_permutations(10, 120, 5);
    CHECK(a.orderings != c.orderings);
}
