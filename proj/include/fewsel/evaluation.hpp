#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewsel/backend.hpp"
#include "fewsel/error.hpp"
#include "fewsel/permutations.hpp"
#include "fewsel/render.hpp"
#include "fewsel/rng.hpp"
#include "fewsel/score_table.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

struct AccuracyEstimate {
    std::string candidate;
    std::vector<TestRecord> outcomes;  // one per ordering
    double mean_accuracy = 0.0;
    double std_error = 0.0;
};

// Appends one test example to each ordering and scores the label candidates
// at the appended query. Test examples are drawn from the pool without
// replacement until it runs dry, then with replacement; deterministic in
// `seed`. Correct means the argmax label is one of the example's golds.
inline AccuracyEstimate estimate_test_accuracy(const PromptCandidate& candidate, const LabelSpace& space,
                                               const TrainSet& train, const PermutationPlan& plan,
                                               const std::vector<Example>& test_pool, ScoringBackend& backend,
                                               std::uint64_t seed) {
    if (test_pool.empty()) throw ConfigError("estimate_test_accuracy: empty test pool");
    if (plan.n != train.size()) throw ConfigError("estimate_test_accuracy: plan does not match train set");

    // Assignment of test examples to orderings: without replacement while
    // the pool lasts, with replacement afterwards.
    Rng rng(seed);
    std::vector<std::size_t> assignment;
    assignment.reserve(plan.size());
    std::vector<std::size_t> bag(test_pool.size());
    for (std::size_t j = 0; j < bag.size(); ++j) bag[j] = j;
    rng.shuffle(bag);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (i < bag.size())
            assignment.push_back(bag[i]);
        else
            assignment.push_back(rng.below(test_pool.size()));
    }

    AccuracyEstimate est;
    est.candidate = candidate.id;
    std::size_t correct_count = 0;
    for (std::size_t row = 0; row < plan.size(); ++row) {
        std::vector<Example> ordered;
        ordered.reserve(train.size());
        for (std::uint32_t idx : plan.orderings[row]) ordered.push_back(train.examples[idx]);
        const Example& test_example = test_pool[assignment[row]];
        RenderedSequence context = render_sequence(candidate, space, ordered, &test_example);
        auto labels = effective_labels(space, test_example, candidate);
        LabelScore score = backend.score_labels(context, test_example, labels, PassPurpose::TestEval);

        TestRecord record;
        record.test_example_id = test_example.id;
        record.predicted = score.predicted;
        record.correct = test_example.is_gold(score.predicted);
        double gold_prob = 0.0;
        for (const auto& g : test_example.gold_labels) gold_prob += score.prob_of(g);
        record.gold_nll = -std::log(smooth_probability(std::min(gold_prob, 1.0)));
        correct_count += record.correct ? 1 : 0;
        est.outcomes.push_back(std::move(record));
    }
    const double n = static_cast<double>(est.outcomes.size());
    est.mean_accuracy = static_cast<double>(correct_count) / n;
    est.std_error = std::sqrt(est.mean_accuracy * (1.0 - est.mean_accuracy) / n);
    return est;
}

struct GainStats {
    double raw = 0.0;                  // selected - mean over candidates
    std::optional<double> normalized;  // 100 * raw / (best - mean); absent when best == mean
};

inline GainStats gain_statistics(double selected_accuracy, const std::vector<double>& all_accuracies) {
    if (all_accuracies.size() < 2) throw ConfigError("gain_statistics: need at least two candidates");
    double sum = 0.0, best = all_accuracies.front();
    for (double a : all_accuracies) {
        sum += a;
        best = std::max(best, a);
    }
    const double mean = sum / static_cast<double>(all_accuracies.size());
    GainStats g;
    g.raw = selected_accuracy - mean;
    if (best > mean) g.normalized = 100.0 * g.raw / (best - mean);
    return g;
}

// Outcome of one selection rule within a run.
struct RuleOutcome {
    std::string chosen;
    double accuracy = 0.0;
    GainStats gain;
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::string train_set_id;
    std::map<std::string, double> candidate_accuracy;
    std::map<std::string, RuleOutcome> rules;
    double best_accuracy = 0.0;
    double worst_accuracy = 0.0;
    double mean_accuracy = 0.0;
    bool valid = true;
    std::string invalid_reason;
};

struct RateEstimate {
    double rate = 0.0;
    double std_error = 0.0;
};

// Fraction of runs whose chosen candidate attains the maximum test accuracy
// (any argmax counts); binomial standard error.
inline RateEstimate best_selection_rate(const std::vector<RunRecord>& runs, const std::string& rule) {
    std::size_t total = 0, hits = 0;
    for (const auto& run : runs) {
        if (!run.valid) continue;
        auto it = run.rules.find(rule);
        if (it == run.rules.end()) continue;
        ++total;
        if (it->second.accuracy >= run.best_accuracy) ++hits;
    }
    if (total == 0) throw ConfigError("best_selection_rate: no runs carry rule '" + rule + "'");
    RateEstimate est;
    est.rate = static_cast<double>(hits) / static_cast<double>(total);
    est.std_error = std::sqrt(est.rate * (1.0 - est.rate) / static_cast<double>(total));
    return est;
}

// Empirical CDF of raw gains across runs: sorted (gain, cumulative prob.)
// points, one per run, ending at probability 1.
inline std::vector<std::pair<double, double>> gain_cdf(const std::vector<RunRecord>& runs,
                                                       const std::string& rule) {
    std::vector<double> gains;
    for (const auto& run : runs) {
        if (!run.valid) continue;
        auto it = run.rules.find(rule);
        if (it != run.rules.end()) gains.push_back(it->second.gain.raw);
    }
    if (gains.empty()) throw ConfigError("gain_cdf: no runs carry rule '" + rule + "'");
    std::sort(gains.begin(), gains.end());
    std::vector<std::pair<double, double>> points;
    points.reserve(gains.size());
    for (std::size_t i = 0; i < gains.size(); ++i)
        points.emplace_back(gains[i], static_cast<double>(i + 1) / static_cast<double>(gains.size()));
    return points;
}

// Input for prompt-transfer analysis: per-model candidate accuracies plus
// the candidate each (chooser) model's rule picked.
struct TransferInput {
    std::vector<std::string> models;
    std::map<std::string, std::map<std::string, double>> accuracy;  // model -> candidate -> acc
    std::map<std::string, std::string> chosen;                      // chooser model -> candidate
};

// entry (i, j): normalized gain on target model j of the candidate chosen
// for chooser model i; the target's mean candidate maps to 0 and its best
// to 100. Absent when the target's best equals its mean.
inline std::vector<std::vector<std::optional<double>>> transfer_matrix(const TransferInput& input) {
    const std::size_t m = input.models.size();
    if (m == 0) throw ConfigError("transfer_matrix: no models");
    std::vector<std::string> candidate_set;
    for (const auto& [cand, acc] : input.accuracy.at(input.models.front())) {
        (void)acc;
        candidate_set.push_back(cand);
    }
    for (const auto& model : input.models) {
        const auto& accs = input.accuracy.at(model);
        if (accs.size() != candidate_set.size())
            throw ConfigError("transfer_matrix: candidate sets differ across models");
        for (const auto& cand : candidate_set)
            if (!accs.count(cand))
                throw ConfigError("transfer_matrix: model " + model + " lacks candidate " + cand);
    }

    std::vector<std::vector<std::optional<double>>> matrix(m, std::vector<std::optional<double>>(m));
    for (std::size_t j = 0; j < m; ++j) {
        const auto& accs = input.accuracy.at(input.models[j]);
        double sum = 0.0, best = accs.begin()->second;
        for (const auto& [cand, a] : accs) {
            (void)cand;
            sum += a;
            best = std::max(best, a);
        }
        const double mean = sum / static_cast<double>(accs.size());
        for (std::size_t i = 0; i < m; ++i) {
            const std::string& chosen = input.chosen.at(input.models[i]);
            if (best > mean) matrix[i][j] = 100.0 * (accs.at(chosen) - mean) / (best - mean);
        }
    }
    return matrix;
}

struct MetricSummary {
    double mean = 0.0;
    double std_error = 0.0;  // sample std / sqrt(runs)
};

// Per-metric mean and standard error over >= 2 runs. Rows are maps of
// metric name -> value; metrics present in every row are aggregated.
inline std::map<std::string, MetricSummary> aggregate_runs(
    const std::vector<std::map<std::string, double>>& rows) {
    if (rows.size() < 2) throw ConfigError("aggregate_runs: need at least two runs");
    std::map<std::string, MetricSummary> out;
    for (const auto& [name, first_value] : rows.front()) {
        (void)first_value;
        bool everywhere = true;
        for (const auto& row : rows)
            if (!row.count(name)) everywhere = false;
        if (!everywhere) continue;
        double sum = 0.0;
        for (const auto& row : rows) sum += row.at(name);
        const double mean = sum / static_cast<double>(rows.size());
        double ss = 0.0;
        for (const auto& row : rows) {
            const double d = row.at(name) - mean;
            ss += d * d;
        }
        const double sample_var = ss / static_cast<double>(rows.size() - 1);
        out[name] = {mean, std::sqrt(sample_var / static_cast<double>(rows.size()))};
    }
    return out;
}

} // namespace fewsel
