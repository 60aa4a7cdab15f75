#include <catch_amalgamated.hpp>

#include <cmath>

#include "fewsel/synthetic.hpp"
#include "support/helpers.hpp"

using namespace fewsel;
using testsupport::make_instance;

TEST_CASE("smooth_probability") {
    CHECK(smooth_probability(0.0) == 1e-6);
    CHECK(smooth_probability(0.5) == 0.5);
    CHECK(smooth_probability(1.0) == 1.0 - 1e-6);
    CHECK_THROWS_AS(smooth_probability(-0.1), DataError);
    CHECK_THROWS_AS(smooth_probability(1.1), DataError);

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        double p = rng.unit();
        double once = smooth_probability(p);
        CHECK(smooth_probability(once) == once);  // idempotent
    }
}

TEST_CASE("make_label_score: softmax, argmax, tie-break") {
    // equal raw NLLs: uniform probabilities, first label wins the tie
    auto tie = make_label_score({"a", "b"}, {1.5, 1.5});
    CHECK(tie.predicted == "a");
    CHECK(std::exp(tie.log_probs[0]) == Catch::Approx(0.5).margin(1e-12));

    // raw NLLs (1.0, 2.0) nats: softmax of (-1, -2) = logistic(1)
    auto skewed = make_label_score({"a", "b"}, {1.0, 2.0});
    CHECK(std::exp(skewed.log_probs[0]) == Catch::Approx(0.7310585786300049).margin(1e-12));
    CHECK(std::exp(skewed.log_probs[1]) == Catch::Approx(0.26894142136999512).margin(1e-12));
    CHECK(skewed.predicted == "a");

    CHECK_THROWS_AS(make_label_score({}, {}), BackendError);

    // normalization over random vectors
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t k = 2 + rng.below(6);
        std::vector<std::string> ids;
        std::vector<double> raw;
        for (std::size_t i = 0; i < k; ++i) {
            ids.push_back("l" + std::to_string(i));
            raw.push_back(rng.unit() * 20.0);
        }
        auto score = make_label_score(ids, raw);
        double sum = 0.0;
        for (double lp : score.log_probs) sum += std::exp(lp);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("synthetic: zero noise forces the gold probability") {
    auto perfect = make_instance(5, 1, {1.0}, /*noise=*/0.0);
    auto even = make_instance(5, 1, {0.5}, /*noise=*/0.0);
    for (std::size_t i = 0; i < 20; ++i) {
        const std::string target = perfect.dataset.examples[i].id;
        auto lp = perfect.backend->label_log_probs("cand-00", {}, target);
        const Example* ex = perfect.dataset.find(target);
        std::size_t gold = ex->gold_labels.front() == "L0" ? 0 : 1;
        CHECK(std::exp(lp[gold]) == Catch::Approx(1.0 - 1e-6).margin(1e-12));

        auto lp2 = even.backend->label_log_probs("cand-00", {}, target);
        CHECK(std::exp(lp2[0]) == Catch::Approx(0.5).margin(1e-12));
        CHECK(std::exp(lp2[1]) == Catch::Approx(0.5).margin(1e-12));
    }
}

TEST_CASE("synthetic: top-1 rate converges to theta (Monte Carlo)") {
    auto inst = make_instance(17, 1, {0.8}, /*noise=*/0.1, /*labels=*/2, /*examples=*/200);
    std::size_t correct = 0, total = 0;
    Rng rng(23);
    for (int draw = 0; draw < 10000; ++draw) {
        const Example& target = inst.dataset.examples[rng.below(inst.dataset.examples.size())];
        // vary the conditioning to sample fresh order-draws
        std::vector<std::string> conditioning{inst.dataset.examples[rng.below(200)].id,
                                              inst.dataset.examples[rng.below(200)].id,
                                              "salt" + std::to_string(draw)};
        auto lp = inst.backend->label_log_probs("cand-00", conditioning, target.id);
        std::size_t argmax = lp[0] >= lp[1] ? 0 : 1;
        std::size_t gold = target.gold_labels.front() == "L0" ? 0 : 1;
        correct += argmax == gold ? 1 : 0;
        ++total;
    }
    const double rate = static_cast<double>(correct) / static_cast<double>(total);
    CHECK(rate == Catch::Approx(0.8).margin(0.02));
}

TEST_CASE("synthetic: scoring is deterministic and additive") {
    auto inst = make_instance(7, 2, 0.2);
    auto [train, pool] = sample_train_set(inst.dataset, 3, 1);
    (void)pool;
    RenderedSequence seq =
        render_sequence(inst.candidates[0], inst.dataset.label_space,
                        std::span<const Example>(train.examples.data(), train.examples.size()));
    SequenceScore a = inst.backend->score_sequence(seq);
    SequenceScore b = inst.backend->score_sequence(seq);
    REQUIRE(a.blocks.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.blocks[i].label_nll == b.blocks[i].label_nll);
        CHECK(a.blocks[i].full_nll == b.blocks[i].full_nll);
    }
    double total = 0.0;
    for (const auto& block : a.blocks) total += block.full_nll;
    CHECK(a.total_nll == Catch::Approx(total).margin(1e-9));
}

TEST_CASE("synthetic: conditioning order matters") {
    auto inst = make_instance(7, 1, 0.2);
    const std::string t = inst.dataset.examples[10].id;
    auto fwd = inst.backend->label_log_probs("cand-00", std::vector<std::string>{"ex0001", "ex0002"}, t);
    auto rev = inst.backend->label_log_probs("cand-00", std::vector<std::string>{"ex0002", "ex0001"}, t);
    CHECK(fwd[0] != rev[0]);  // order is a random factor
}

TEST_CASE("synthetic: unknown ids are rejected") {
    auto inst = make_instance(7, 1);
    CHECK_THROWS_AS(inst.backend->label_log_probs("nope", {}, "ex0000"), BackendError);
    CHECK_THROWS_AS(inst.backend->label_log_probs("cand-00", {}, "nope"), BackendError);
}

TEST_CASE("pass accounting: purposes and budget") {
    auto inst = make_instance(7, 1);
    auto [train, pool] = sample_train_set(inst.dataset, 3, 1);
    RenderedSequence seq =
        render_sequence(inst.candidates[0], inst.dataset.label_space,
                        std::span<const Example>(train.examples.data(), train.examples.size()));
    inst.backend->score_sequence(seq, PassPurpose::Criterion);
    CHECK(inst.backend->passes().upstream(PassPurpose::Criterion) == 1);
    CHECK(inst.backend->passes().upstream(PassPurpose::TestEval) == 0);

    RenderedSequence context =
        render_sequence(inst.candidates[0], inst.dataset.label_space,
                        std::span<const Example>(train.examples.data(), 2), &pool[0]);
    auto labels = effective_labels(inst.dataset.label_space, pool[0], inst.candidates[0]);
    inst.backend->score_labels(context, pool[0], labels, PassPurpose::TestEval);
    CHECK(inst.backend->passes().upstream(PassPurpose::TestEval) == labels.size());
    CHECK(inst.backend->passes().upstream_total() == 1 + labels.size());

    inst.backend->set_pass_budget(inst.backend->passes().upstream_total() + 1);
    CHECK_NOTHROW(inst.backend->score_sequence(seq));
    CHECK_THROWS_AS(inst.backend->score_sequence(seq), BudgetExhausted);
}

TEST_CASE("nats to bits conversion factor") {
    CHECK(std::log(2.0) * kNatsToBits == Catch::Approx(1.0).margin(1e-12));
}
