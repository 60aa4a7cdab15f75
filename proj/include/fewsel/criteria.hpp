#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewsel/error.hpp"
#include "fewsel/folds.hpp"
#include "fewsel/score_table.hpp"

namespace fewsel {

enum class CriterionKind { CV, MDL, MDLBeta, BayesCV, CVJoint, MDLJoint };

inline const char* to_string(CriterionKind k) {
    switch (k) {
        case CriterionKind::CV: return "cv";
        case CriterionKind::MDL: return "mdl";
        case CriterionKind::MDLBeta: return "mdl_beta";
        case CriterionKind::BayesCV: return "bayes_cv";
        case CriterionKind::CVJoint: return "cv_joint";
        case CriterionKind::MDLJoint: return "mdl_joint";
    }
    return "?";
}

// Mean/variance of one criterion over samples of (R, F). One sample is one
// ordering (for Bayes-CV, one held-out example). Variance is the unbiased
// estimator and is absent with fewer than two samples.
struct CriterionEstimate {
    CriterionKind kind = CriterionKind::CV;
    double mean = 0.0;
    std::optional<double> variance;
    std::vector<double> samples;  // aligned with the accumulation units below
    std::size_t sample_count = 0;
    std::optional<double> beta;  // MDL_beta only

    double std_dev() const { return variance ? std::sqrt(*variance) : 0.0; }
};

namespace detail {

inline void require_complete(const ScoreTable& table) {
    if (!table.complete)
        throw DataError("criterion on incomplete table for candidate " + table.candidate_id +
                        (table.abort_reason.empty() ? "" : " (" + table.abort_reason + ")"));
}

// Accumulates in the given canonical order so the result is bitwise
// independent of row enumeration order.
inline CriterionEstimate finalize(CriterionKind kind, std::vector<double> samples,
                                  const std::vector<std::size_t>& canonical) {
    CriterionEstimate est;
    est.kind = kind;
    est.samples = std::move(samples);
    est.sample_count = est.samples.size();
    double sum = 0.0;
    for (std::size_t i : canonical) sum += est.samples[i];
    est.mean = sum / static_cast<double>(est.sample_count);
    if (est.sample_count >= 2) {
        double ss = 0.0;
        for (std::size_t i : canonical) {
            const double d = est.samples[i] - est.mean;
            ss += d * d;
        }
        est.variance = ss / static_cast<double>(est.sample_count - 1);
    }
    return est;
}

inline double log_sum_exp(const std::vector<double>& values) {
    double mx = values.front();
    for (double v : values) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : values) z += std::exp(v - mx);
    return mx + std::log(z);
}

} // namespace detail

// Number of distinct examples appearing in the final (held-out) position.
// CV touches every fold only when this equals n.
inline std::size_t distinct_final_examples(const ScoreTable& table) {
    std::vector<std::uint32_t> finals;
    for (const auto& ordering : table.orderings) finals.push_back(ordering.back());
    std::sort(finals.begin(), finals.end());
    finals.erase(std::unique(finals.begin(), finals.end()), finals.end());
    return finals.size();
}

// Leave-one-out CV from the shared table: each ordering contributes the
// label NLL of its final position (that example conditioned on the other
// N-1 in that order).
inline CriterionEstimate compute_cv(const ScoreTable& table) {
    detail::require_complete(table);
    const std::size_t n = table.n();
    if (n < 2) throw ConfigError("compute_cv: undefined for n=1 (no held-out conditioning)");
    std::vector<double> samples(table.rows());
    for (std::size_t row = 0; row < table.rows(); ++row) samples[row] = table.at(row, n - 1);
    return detail::finalize(table.channel == "joint" ? CriterionKind::CVJoint : CriterionKind::CV,
                            std::move(samples), canonical_row_order(table));
}

// General-fold variant: per ordering, the held-out fold is the fold that
// contains the final-position example and the fold loss is the sum of that
// fold's per-position NLLs. Reduces exactly to LOOCV when folds are
// singletons.
inline CriterionEstimate compute_cv(const ScoreTable& table, const FoldPlan& folds) {
    detail::require_complete(table);
    const std::size_t n = table.n();
    if (n < 2) throw ConfigError("compute_cv: undefined for n=1 (no held-out conditioning)");
    std::vector<double> samples(table.rows());
    for (std::size_t row = 0; row < table.rows(); ++row) {
        const std::size_t held_out = folds.fold_of(table.example_at(row, n - 1));
        double loss = 0.0;
        for (std::size_t pos = 0; pos < n; ++pos)
            if (folds.fold_of(table.example_at(row, pos)) == held_out) loss += table.at(row, pos);
        samples[row] = loss;
    }
    return detail::finalize(table.channel == "joint" ? CriterionKind::CVJoint : CriterionKind::CV,
                            std::move(samples), canonical_row_order(table));
}

namespace detail {

inline std::vector<double> mdl_samples(const ScoreTable& table, bool first_fold_uniform,
                                       std::size_t label_count) {
    const std::size_t n = table.n();
    std::vector<double> samples(table.rows());
    const double uniform_nll = first_fold_uniform ? std::log(static_cast<double>(label_count)) : 0.0;
    for (std::size_t row = 0; row < table.rows(); ++row) {
        double sum = first_fold_uniform ? uniform_nll : table.at(row, 0);
        for (std::size_t pos = 1; pos < n; ++pos) sum += table.at(row, pos);
        samples[row] = sum / static_cast<double>(n);
    }
    return samples;
}

} // namespace detail

// Online coding: per ordering, the mean over positions k of the label NLL
// at k given the prefix 1..k-1. With first_fold_uniform the first position
// is coded by the uniform distribution over labels, -ln(1/label_count).
inline CriterionEstimate compute_mdl(const ScoreTable& table, bool first_fold_uniform = false,
                                     std::size_t label_count = 0) {
    detail::require_complete(table);
    if (first_fold_uniform) {
        if (label_count == 0 && table.label_count) label_count = *table.label_count;
        if (label_count == 0)
            throw ConfigError("compute_mdl: first_fold_uniform requires a known label count");
    }
    return detail::finalize(table.channel == "joint" ? CriterionKind::MDLJoint : CriterionKind::MDL,
                            detail::mdl_samples(table, first_fold_uniform, label_count),
                            canonical_row_order(table));
}

// CV/MDL interpolation: positions are weighted by how much training data
// precedes them, weight(pos) proportional to exp(-beta * (n-1-pos)). beta=0
// recovers MDL's uniform weights; as beta grows the mass concentrates on
// the final position (the largest train prefix) and the samples converge to
// CV's.
inline CriterionEstimate compute_mdl_beta(const ScoreTable& table, double beta) {
    detail::require_complete(table);
    if (beta < 0.0) throw ConfigError("compute_mdl_beta: beta must be non-negative");
    const std::size_t n = table.n();
    std::vector<double> samples;
    if (beta == 0.0) {
        samples = detail::mdl_samples(table, false, 0);  // bitwise identical to MDL
    } else {
        std::vector<double> weights(n);
        double z = 0.0;
        for (std::size_t pos = 0; pos < n; ++pos) {
            weights[pos] = std::exp(-beta * static_cast<double>(n - 1 - pos));
            z += weights[pos];
        }
        for (auto& w : weights) w /= z;
        samples.resize(table.rows());
        for (std::size_t row = 0; row < table.rows(); ++row) {
            double acc = 0.0;
            for (std::size_t pos = 0; pos < n; ++pos) acc += weights[pos] * table.at(row, pos);
            samples[row] = acc;
        }
    }
    auto est = detail::finalize(CriterionKind::MDLBeta, std::move(samples), canonical_row_order(table));
    est.beta = beta;
    return est;
}

// Bayesian CV: orderings are grouped by their final (held-out) example.
// Within a group, each ordering R of the remaining N-1 examples gets
// posterior weight proportional to exp(-sum of its prefix label NLLs), and
// the group's sample is -ln of the posterior mixture of the held-out gold
// probability. One sample per held-out example.
inline CriterionEstimate compute_bayes_cv(const ScoreTable& table) {
    detail::require_complete(table);
    const std::size_t n = table.n();
    std::map<std::uint32_t, std::vector<std::size_t>> groups;  // final example index -> rows
    for (std::size_t row : canonical_row_order(table)) groups[table.orderings[row].back()].push_back(row);
    for (std::uint32_t idx = 0; idx < n; ++idx)
        if (!groups.count(idx))
            throw DataError("compute_bayes_cv: example " + table.example_ids[idx] +
                            " never appears in the held-out position (empty group)");

    std::vector<double> samples;
    samples.reserve(groups.size());
    for (const auto& [held_out, rows] : groups) {
        (void)held_out;
        if (rows.size() == 1) {
            samples.push_back(table.at(rows.front(), n - 1));  // one-point posterior == CV sample
            continue;
        }
        std::vector<double> log_weights(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double prefix = 0.0;
            for (std::size_t pos = 0; pos + 1 < n; ++pos) prefix += table.at(rows[i], pos);
            log_weights[i] = -prefix;
        }
        const double lse = detail::log_sum_exp(log_weights);
        std::vector<double> mix_terms(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            mix_terms[i] = log_weights[i] - lse - table.at(rows[i], n - 1);
        samples.push_back(-detail::log_sum_exp(mix_terms));
    }
    std::vector<std::size_t> canonical(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) canonical[i] = i;  // groups already in index order
    return detail::finalize(CriterionKind::BayesCV, std::move(samples), canonical);
}

// Posterior weights of one held-out group; exposed for invariant checks
// (they must sum to 1 within 1e-9).
inline std::vector<double> bayes_posterior_weights(const ScoreTable& table, std::uint32_t held_out_index) {
    const std::size_t n = table.n();
    std::vector<std::size_t> rows;
    for (std::size_t row : canonical_row_order(table))
        if (table.orderings[row].back() == held_out_index) rows.push_back(row);
    if (rows.empty()) throw DataError("bayes_posterior_weights: empty group");
    std::vector<double> log_weights(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double prefix = 0.0;
        for (std::size_t pos = 0; pos + 1 < n; ++pos) prefix += table.at(rows[i], pos);
        log_weights[i] = -prefix;
    }
    const double lse = detail::log_sum_exp(log_weights);
    std::vector<double> weights(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) weights[i] = std::exp(log_weights[i] - lse);
    return weights;
}

} // namespace fewsel
