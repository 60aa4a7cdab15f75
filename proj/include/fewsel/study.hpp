#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewsel/backend.hpp"
#include "fewsel/criteria.hpp"
#include "fewsel/evaluation.hpp"
#include "fewsel/hash.hpp"
#include "fewsel/permutations.hpp"
#include "fewsel/score_table.hpp"
#include "fewsel/selection.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

inline const std::vector<std::string>& criterion_vocabulary() {
    static const std::vector<std::string> names{"cv",       "mdl",      "mdl_beta", "bayes_cv",
                                                "cv_joint", "mdl_joint", "cv_alpha"};
    return names;
}

struct StudyProtocol {
    std::size_t n = 5;
    std::size_t k = 0;  // 0 means k = n (LOOCV)
    std::size_t permutation_budget = 120;
    ScoringMode mode = ScoringMode::Sequence;
    std::vector<std::string> criteria{"cv", "mdl"};
    std::vector<double> alphas;  // conservative-rule sweep (cv_alpha)
    double beta = 1.0;
    bool first_fold_uniform = false;
    double epsilon = kDefaultEpsilon;
    bool require_class_coverage = false;
    std::size_t concurrency = 1;
    bool include_oracle_rule = true;
    bool include_random_rule = true;

    bool wants(const std::string& criterion) const {
        return std::find(criteria.begin(), criteria.end(), criterion) != criteria.end();
    }
    bool needs_joint() const { return wants("cv_joint") || wants("mdl_joint"); }
    void validate() const {
        if (n < 1) throw ConfigError("protocol.n must be positive");
        if (permutation_budget < n) throw ConfigError("protocol.permutation_budget must be at least n");
        if (criteria.empty()) throw ConfigError("protocol.criteria must not be empty");
        for (const auto& c : criteria) {
            const auto& vocab = criterion_vocabulary();
            if (std::find(vocab.begin(), vocab.end(), c) == vocab.end())
                throw ConfigError("protocol.criteria: unknown criterion '" + c + "'");
        }
        if (wants("cv_alpha") && alphas.empty())
            throw ConfigError("protocol.alpha: cv_alpha requested but no alpha values given");
        if (beta < 0.0) throw ConfigError("protocol.beta must be non-negative");
        if (!(epsilon > 0.0) || epsilon >= 0.5) throw ConfigError("protocol.epsilon must lie in (0, 0.5)");
    }
};

// Everything one (train set, seed) unit produces: tables, estimates,
// accuracies, selections, and the summary record.
struct RunArtifacts {
    TrainSet train;
    PermutationPlan plan;
    std::map<std::string, ScoreTable> tables;                                  // candidate ->
    std::map<std::string, std::map<std::string, CriterionEstimate>> estimates;  // criterion -> candidate ->
    std::map<std::string, SelectionReport> selections;                         // rule ->
    std::map<std::string, AccuracyEstimate> accuracy;                          // candidate ->
    RunRecord record;
    bool budget_exhausted = false;
};

namespace detail {

inline CriterionEstimate compute_named_criterion(const std::string& name, const ScoreTable& table,
                                                 const StudyProtocol& protocol,
                                                 const FoldPlan* folds = nullptr) {
    if (name == "cv") return folds ? compute_cv(table, *folds) : compute_cv(table);
    if (name == "mdl") return compute_mdl(table, protocol.first_fold_uniform);
    if (name == "mdl_beta") return compute_mdl_beta(table, protocol.beta);
    if (name == "bayes_cv") return compute_bayes_cv(table);
    if (name == "cv_joint")
        return folds ? compute_cv(joint_channel(table), *folds) : compute_cv(joint_channel(table));
    if (name == "mdl_joint") return compute_mdl(joint_channel(table));
    throw ConfigError("unknown criterion '" + name + "'");
}

inline GainStats run_gains(double accuracy, const std::map<std::string, double>& all) {
    if (all.size() < 2) return GainStats{0.0, std::nullopt};
    std::vector<double> accs;
    accs.reserve(all.size());
    for (const auto& [cand, a] : all) {
        (void)cand;
        accs.push_back(a);
    }
    return gain_statistics(accuracy, accs);
}

// Rules derived from estimates + accuracies; shared by fresh runs and
// subsampled re-analyses.
inline void apply_rules(RunArtifacts& run, const StudyProtocol& protocol, std::uint64_t seed,
                        const std::vector<std::pair<std::string, std::string>>& excluded) {
    auto& record = run.record;
    record.rules.clear();
    run.selections.clear();

    auto outcome_for = [&](const SelectionReport& report) {
        RuleOutcome out;
        out.chosen = report.chosen;
        out.accuracy = record.candidate_accuracy.at(report.chosen);
        out.gain = run_gains(out.accuracy, record.candidate_accuracy);
        return out;
    };

    for (const auto& name : protocol.criteria) {
        if (name == "cv_alpha") continue;
        const auto& ests = run.estimates.at(name);
        if (ests.empty()) {
            record.valid = false;
            record.invalid_reason = "no candidate has a complete table";
            continue;
        }
        SelectionReport report = select_argmin(ests, excluded);
        record.rules[name] = outcome_for(report);
        run.selections[name] = std::move(report);
    }
    if (protocol.wants("cv_alpha")) {
        const auto& ests = run.estimates.at("cv");
        for (double alpha : protocol.alphas) {
            if (ests.empty()) break;
            char rule[32];
            std::snprintf(rule, sizeof(rule), "cv_alpha=%g", alpha);
            SelectionReport report = select_conservative(ests, alpha, excluded);
            record.rules[rule] = outcome_for(report);
            run.selections[rule] = std::move(report);
        }
    }
    if (protocol.include_oracle_rule && !record.candidate_accuracy.empty()) {
        RuleOutcome oracle;
        for (const auto& [cand, acc] : record.candidate_accuracy)
            if (oracle.chosen.empty() || acc > oracle.accuracy) {
                oracle.chosen = cand;
                oracle.accuracy = acc;
            }
        oracle.gain = run_gains(oracle.accuracy, record.candidate_accuracy);
        record.rules["oracle"] = oracle;
    }
    if (protocol.include_random_rule && !record.candidate_accuracy.empty()) {
        std::vector<std::string> ids;
        for (const auto& [cand, acc] : record.candidate_accuracy) {
            (void)acc;
            ids.push_back(cand);
        }
        Rng rng(mix64(Digest().field(seed).field("random-rule").value()));
        RuleOutcome random_pick;
        random_pick.chosen = ids[rng.below(ids.size())];
        random_pick.accuracy = record.candidate_accuracy.at(random_pick.chosen);
        random_pick.gain = run_gains(random_pick.accuracy, record.candidate_accuracy);
        record.rules["random"] = random_pick;
    }
}

} // namespace detail

// One full unit: sample a train set, plan permutations, build one score
// table per candidate, compute the requested criteria, measure ground-truth
// test accuracy, and apply every selection rule.
inline RunArtifacts run_single(const Dataset& dataset, const std::vector<PromptCandidate>& candidates,
                               ScoringBackend& backend, const StudyProtocol& protocol, std::uint64_t seed) {
    protocol.validate();
    if (candidates.empty()) throw ConfigError("run_single: no candidates");

    RunArtifacts run;
    auto [train, pool] = sample_train_set(dataset, protocol.n, seed, protocol.require_class_coverage);
    run.train = std::move(train);
    run.plan = plan_permutations(protocol.n, protocol.permutation_budget,
                                 mix64(Digest().field(seed).field("permutations").value()));

    run.record.seed = seed;
    run.record.train_set_id = dataset.id + "@seed" + std::to_string(seed);

    TableBuildOptions options;
    options.mode = protocol.mode;
    options.want_joint = protocol.needs_joint();
    options.epsilon = protocol.epsilon;
    options.concurrency = protocol.concurrency;

    std::vector<std::pair<std::string, std::string>> excluded;
    const std::uint64_t test_seed = mix64(Digest().field(seed).field("test-assignment").value());
    for (const auto& candidate : candidates) {
        if (run.budget_exhausted) {
            excluded.emplace_back(candidate.id, "pass budget exhausted");
            continue;
        }
        ScoreTable table = build_score_table(candidate, dataset.label_space, run.train, run.plan, backend, options);
        if (!table.complete) {
            excluded.emplace_back(candidate.id, table.abort_reason.empty() ? "incomplete table" : table.abort_reason);
            if (table.abort_reason == "pass budget exhausted") run.budget_exhausted = true;
            run.tables.emplace(candidate.id, std::move(table));
            continue;
        }
        try {
            AccuracyEstimate acc = estimate_test_accuracy(candidate, dataset.label_space, run.train, run.plan,
                                                          pool, backend, test_seed);
            table.test_records = acc.outcomes;
            run.record.candidate_accuracy[candidate.id] = acc.mean_accuracy;
            run.accuracy.emplace(candidate.id, std::move(acc));
        } catch (const BudgetExhausted&) {
            run.budget_exhausted = true;
            excluded.emplace_back(candidate.id, "pass budget exhausted during test evaluation");
        }
        run.tables.emplace(candidate.id, std::move(table));
    }

    for (const auto& name : protocol.criteria) {
        if (name == "cv_alpha") continue;
        run.estimates[name] = {};
    }
    if (protocol.wants("cv_alpha") && !run.estimates.count("cv")) run.estimates["cv"] = {};
    std::optional<FoldPlan> folds;
    if (protocol.k != 0 && protocol.k != protocol.n)
        folds = make_folds(run.train, protocol.k, mix64(Digest().field(seed).field("folds").value()));
    for (const auto& [cand, table] : run.tables) {
        // only candidates with both a complete table and a test accuracy participate
        if (!table.complete || !run.record.candidate_accuracy.count(cand)) continue;
        for (auto& [name, per_candidate] : run.estimates)
            per_candidate.emplace(cand,
                                  detail::compute_named_criterion(name, table, protocol, folds ? &*folds : nullptr));
    }

    if (run.record.candidate_accuracy.empty()) {
        run.record.valid = false;
        run.record.invalid_reason = "no candidate completed";
        return run;
    }
    double best = -1.0, worst = 2.0, sum = 0.0;
    for (const auto& [cand, acc] : run.record.candidate_accuracy) {
        (void)cand;
        best = std::max(best, acc);
        worst = std::min(worst, acc);
        sum += acc;
    }
    run.record.best_accuracy = best;
    run.record.worst_accuracy = worst;
    run.record.mean_accuracy = sum / static_cast<double>(run.record.candidate_accuracy.size());

    detail::apply_rules(run, protocol, seed, excluded);
    return run;
}

struct RuleReport {
    MetricSummary accuracy;
    MetricSummary raw_gain;
    std::optional<double> normalized_gain;  // 100 * mean raw gain / mean (best - mean) over runs
    RateEstimate best_rate;
    std::vector<std::pair<double, double>> cdf;
};

struct ReliabilityReport {
    std::size_t runs = 0;
    std::size_t invalid_runs = 0;
    MetricSummary best;
    MetricSummary worst;
    MetricSummary mean_candidate;
    std::map<std::string, RuleReport> rules;
};

// Aggregates run records; runs are re-sorted by seed first so the report is
// identical under any input ordering.
inline ReliabilityReport summarize_runs(std::vector<RunRecord> runs) {
    std::sort(runs.begin(), runs.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    ReliabilityReport report;
    report.runs = runs.size();
    std::vector<RunRecord> valid;
    for (auto& r : runs) {
        if (r.valid)
            valid.push_back(std::move(r));
        else
            ++report.invalid_runs;
    }
    if (valid.size() < 2) throw ConfigError("summarize_runs: need at least two valid runs");

    std::vector<std::map<std::string, double>> base_rows;
    for (const auto& r : valid)
        base_rows.push_back({{"best", r.best_accuracy}, {"worst", r.worst_accuracy}, {"mean", r.mean_accuracy}});
    auto base = aggregate_runs(base_rows);
    report.best = base.at("best");
    report.worst = base.at("worst");
    report.mean_candidate = base.at("mean");

    std::vector<std::string> rule_names;
    for (const auto& [name, outcome] : valid.front().rules) {
        (void)outcome;
        rule_names.push_back(name);
    }
    for (const auto& rule : rule_names) {
        bool everywhere = true;
        for (const auto& r : valid)
            if (!r.rules.count(rule)) everywhere = false;
        if (!everywhere) continue;

        std::vector<std::map<std::string, double>> rows;
        double gain_sum = 0.0, headroom_sum = 0.0;
        for (const auto& r : valid) {
            const auto& outcome = r.rules.at(rule);
            rows.push_back({{"accuracy", outcome.accuracy}, {"raw_gain", outcome.gain.raw}});
            gain_sum += outcome.gain.raw;
            headroom_sum += r.best_accuracy - r.mean_accuracy;
        }
        auto agg = aggregate_runs(rows);
        RuleReport rr;
        rr.accuracy = agg.at("accuracy");
        rr.raw_gain = agg.at("raw_gain");
        if (headroom_sum > 0.0) rr.normalized_gain = 100.0 * gain_sum / headroom_sum;
        rr.best_rate = best_selection_rate(valid, rule);
        rr.cdf = gain_cdf(valid, rule);
        report.rules[rule] = std::move(rr);
    }
    return report;
}

struct StudyResult {
    std::vector<RunRecord> runs;
    ReliabilityReport report;
};

inline StudyResult run_study(const Dataset& dataset, const std::vector<PromptCandidate>& candidates,
                             ScoringBackend& backend, const StudyProtocol& protocol,
                             const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("run_study: no seeds");
    StudyResult result;
    for (std::uint64_t seed : seeds)
        result.runs.push_back(run_single(dataset, candidates, backend, protocol, seed).record);
    result.report = summarize_runs(result.runs);
    return result;
}

// Compute-budget sweep (shared tables, criteria recomputed on subsamples).
// For each value v, each candidate's table is subsampled to v orderings and
// every rule re-applied; test outcomes are reused, matching the protocol of
// varying only the samples of R used for the criteria.
inline std::map<std::size_t, StudyResult> run_passes_sweep(const Dataset& dataset,
                                                           const std::vector<PromptCandidate>& candidates,
                                                           ScoringBackend& backend, const StudyProtocol& protocol,
                                                           const std::vector<std::uint64_t>& seeds,
                                                           const std::vector<std::size_t>& passes_values) {
    std::map<std::size_t, StudyResult> out;
    std::map<std::size_t, std::vector<RunRecord>> records;
    for (std::uint64_t seed : seeds) {
        RunArtifacts full = run_single(dataset, candidates, backend, protocol, seed);
        for (std::size_t passes : passes_values) {
            RunArtifacts view = full;
            view.estimates.clear();
            for (const auto& name : protocol.criteria) {
                if (name == "cv_alpha") continue;
                view.estimates[name] = {};
            }
            if (protocol.wants("cv_alpha") && !view.estimates.count("cv")) view.estimates["cv"] = {};
            std::vector<std::pair<std::string, std::string>> excluded;
            const std::uint64_t sub_seed = mix64(Digest().field(seed).field("subsample").field(passes).value());
            for (const auto& [cand, table] : full.tables) {
                if (!table.complete) {
                    excluded.emplace_back(cand, "incomplete table");
                    continue;
                }
                ScoreTable sub = subsample_table(table, std::min(passes, table.rows()), sub_seed);
                for (auto& [name, per_candidate] : view.estimates) {
                    try {
                        per_candidate.emplace(cand, detail::compute_named_criterion(name, sub, protocol));
                    } catch (const DataError&) {
                        // e.g. Bayes-CV with an empty held-out group on a tiny subsample
                    }
                }
            }
            detail::apply_rules(view, protocol, seed, excluded);
            records[passes].push_back(view.record);
        }
    }
    for (auto& [passes, runs] : records) {
        StudyResult r;
        r.runs = std::move(runs);
        r.report = summarize_runs(r.runs);
        out.emplace(passes, std::move(r));
    }
    return out;
}

// Train-set-size sweep: the full pipeline per value with shared seeds.
inline std::map<std::size_t, StudyResult> run_num_examples_sweep(
    const Dataset& dataset, const std::vector<PromptCandidate>& candidates, ScoringBackend& backend,
    const StudyProtocol& protocol, const std::vector<std::uint64_t>& seeds,
    const std::vector<std::size_t>& n_values) {
    std::map<std::size_t, StudyResult> out;
    for (std::size_t n : n_values) {
        StudyProtocol p = protocol;
        p.n = n;
        if (n > dataset.examples.size())
            throw ConfigError("num_examples sweep: n=" + std::to_string(n) + " exceeds dataset size");
        out.emplace(n, run_study(dataset, candidates, backend, p, seeds));
    }
    return out;
}

// Alpha sweep: one pipeline run; the conservative rule is re-applied per
// alpha (alpha=0 coincides with plain argmin-CV).
inline std::map<double, StudyResult> run_alpha_sweep(const Dataset& dataset,
                                                     const std::vector<PromptCandidate>& candidates,
                                                     ScoringBackend& backend, const StudyProtocol& protocol,
                                                     const std::vector<std::uint64_t>& seeds,
                                                     const std::vector<double>& alpha_values) {
    std::map<double, StudyResult> out;
    for (double alpha : alpha_values) {
        StudyProtocol p = protocol;
        if (!p.wants("cv")) p.criteria.push_back("cv");
        if (!p.wants("cv_alpha")) p.criteria.push_back("cv_alpha");
        p.alphas = {alpha};
        out.emplace(alpha, run_study(dataset, candidates, backend, p, seeds));
    }
    return out;
}

} // namespace fewsel
