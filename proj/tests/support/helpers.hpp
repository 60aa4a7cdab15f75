#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "fewsel/fewsel.hpp"

namespace testsupport {

using namespace fewsel;

// A ready-to-score synthetic instance.
struct Instance {
    SyntheticTaskSpec spec;
    Dataset dataset;
    std::vector<PromptCandidate> candidates;
    std::shared_ptr<SyntheticBackend> backend;
};

inline Instance make_instance(std::uint64_t seed, std::size_t candidate_count, std::vector<double> qualities,
                              double noise = 0.15, std::size_t labels = 2, std::size_t examples = 60) {
    Instance inst;
    inst.spec.candidate_count = candidate_count;
    inst.spec.qualities = std::move(qualities);
    inst.spec.difficulty_noise = noise;
    inst.spec.seed = seed;
    inst.spec.label_count = labels;
    inst.spec.example_count = examples;
    inst.dataset = make_synthetic_dataset(inst.spec);
    inst.candidates = make_synthetic_candidates(inst.spec);
    inst.backend = std::make_shared<SyntheticBackend>(inst.spec, inst.dataset, inst.candidates);
    return inst;
}

inline Instance make_instance(std::uint64_t seed, std::size_t candidate_count, double noise = 0.15,
                              std::size_t labels = 2, std::size_t examples = 60) {
    std::vector<double> qualities;
    for (std::size_t a = 0; a < candidate_count; ++a)
        qualities.push_back(0.35 + 0.3 * static_cast<double>(a + 1) / static_cast<double>(candidate_count));
    return make_instance(seed, candidate_count, std::move(qualities), noise, labels, examples);
}

// Backend whose every label distribution puts probability q on the gold
// label; handy for constant-table fixtures.
class ConstantBackend : public ScoringBackend {
public:
    explicit ConstantBackend(double gold_prob, double input_nll = 0.0)
        : gold_prob_(gold_prob), input_nll_(input_nll) {}

    std::string id() const override { return "constant"; }
    std::string model_id() const override { return "constant"; }

    SequenceScore score_sequence(const RenderedSequence& rendered, PassPurpose purpose) override {
        consume(purpose, 1);
        SequenceScore s;
        for (std::size_t i = 0; i < rendered.blocks.size(); ++i) {
            BlockScore b;
            b.label_nll = -std::log(gold_prob_);
            b.full_nll = b.label_nll + input_nll_;
            s.total_nll += b.full_nll;
            s.blocks.push_back(b);
        }
        return s;
    }

    LabelScore score_labels(const RenderedSequence&, const Example& query,
                            const std::vector<LabelEntry>& labels, PassPurpose purpose) override {
        consume(purpose, labels.size());
        std::vector<std::string> ids;
        std::vector<double> raw;
        for (const auto& l : labels) {
            ids.push_back(l.id);
            raw.push_back(query.is_gold(l.id) ? -std::log(gold_prob_)
                                              : -std::log((1.0 - gold_prob_) /
                                                          static_cast<double>(labels.size() - 1)));
        }
        return make_label_score(std::move(ids), std::move(raw));
    }

private:
    double gold_prob_;
    double input_nll_;
};

inline double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double variance_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

// ---- Independent oracles (never touch ScoreTable internals) ----

// Gold-label NLL of `target` after `conditioning`, straight from the
// synthetic primitive, with the same probability floor the table applies.
inline double oracle_gold_nll(const Instance& inst, const std::string& candidate_id,
                              const std::vector<std::string>& conditioning, const std::string& target,
                              double eps = kDefaultEpsilon) {
    auto lp = inst.backend->label_log_probs(candidate_id, conditioning, target);
    const Example* ex = inst.dataset.find(target);
    std::size_t gold = 0;
    for (std::size_t l = 0; l < inst.dataset.label_space.labels.size(); ++l)
        if (inst.dataset.label_space.labels[l].id == ex->gold_labels.front()) gold = l;
    return std::min(-lp[gold], -std::log(eps));
}

// Brute-force LOOCV: for every ordering, rescore the final example against
// the other n-1 in that order; mean/variance over orderings.
inline std::pair<double, double> oracle_loocv(const Instance& inst, const std::string& candidate_id,
                                              const TrainSet& train, const PermutationPlan& plan) {
    std::vector<double> samples;
    for (const auto& ordering : plan.orderings) {
        std::vector<std::string> conditioning;
        for (std::size_t pos = 0; pos + 1 < ordering.size(); ++pos)
            conditioning.push_back(train.examples[ordering[pos]].id);
        samples.push_back(
            oracle_gold_nll(inst, candidate_id, conditioning, train.examples[ordering.back()].id));
    }
    return {mean_of(samples), variance_of(samples)};
}

// Independent prequential (left-to-right) re-scoring for MDL.
inline double oracle_mdl_mean(const Instance& inst, const std::string& candidate_id, const TrainSet& train,
                              const PermutationPlan& plan, bool first_fold_uniform = false,
                              std::size_t label_count = 0) {
    std::vector<double> samples;
    for (const auto& ordering : plan.orderings) {
        double sum = 0.0;
        std::vector<std::string> prefix;
        for (std::size_t pos = 0; pos < ordering.size(); ++pos) {
            const std::string& target = train.examples[ordering[pos]].id;
            if (pos == 0 && first_fold_uniform)
                sum += std::log(static_cast<double>(label_count));
            else
                sum += oracle_gold_nll(inst, candidate_id, prefix, target);
            prefix.push_back(target);
        }
        samples.push_back(sum / static_cast<double>(ordering.size()));
    }
    return mean_of(samples);
}

// Direct implementation of the posterior-mixture formula (plain exp
// arithmetic; fine for small instances).
inline double oracle_bayes_mean(const Instance& inst, const std::string& candidate_id, const TrainSet& train,
                                const PermutationPlan& plan) {
    const std::size_t n = train.size();
    std::vector<double> samples;
    for (std::size_t held = 0; held < n; ++held) {
        std::vector<double> weights, gold_probs;
        for (const auto& ordering : plan.orderings) {
            if (ordering.back() != held) continue;
            std::vector<std::string> prefix;
            double prefix_nll = 0.0;
            for (std::size_t pos = 0; pos + 1 < n; ++pos) {
                const std::string& target = train.examples[ordering[pos]].id;
                prefix_nll += oracle_gold_nll(inst, candidate_id, prefix, target);
                prefix.push_back(target);
            }
            weights.push_back(std::exp(-prefix_nll));
            gold_probs.push_back(
                std::exp(-oracle_gold_nll(inst, candidate_id, prefix, train.examples[ordering.back()].id)));
        }
        double z = std::accumulate(weights.begin(), weights.end(), 0.0);
        double mixture = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) mixture += weights[i] / z * gold_probs[i];
        samples.push_back(-std::log(mixture));
    }
    return mean_of(samples);
}

} // namespace testsupport
