#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fewsel/criteria.hpp"
#include "fewsel/error.hpp"

namespace fewsel {

// Absolute tie tolerance on criterion scores (nats): below any meaningful
// NLL resolution, above accumulation noise.
inline constexpr double kTieTolerance = 1e-12;

struct CandidateScore {
    std::string candidate;
    double mean = 0.0;
    std::optional<double> variance;
    double score = 0.0;  // what the rule minimized
};

struct SelectionReport {
    std::string rule;  // "argmin-mean" or "conservative(alpha=...)"
    CriterionKind kind = CriterionKind::CV;
    std::string chosen;
    std::vector<CandidateScore> scores;                        // ascending candidate id
    std::vector<std::string> tied;                             // within tolerance of the chosen score
    std::vector<std::pair<std::string, std::string>> excluded;  // (candidate, reason)
};

namespace detail {

inline SelectionReport select_by_score(const std::map<std::string, CriterionEstimate>& estimates,
                                       const std::string& rule, double alpha,
                                       std::vector<std::pair<std::string, std::string>> excluded) {
    if (estimates.empty()) throw ConfigError("selection: no candidates");
    SelectionReport report;
    report.rule = rule;
    report.kind = estimates.begin()->second.kind;
    report.excluded = std::move(excluded);

    for (const auto& [candidate, est] : estimates) {
        if (est.kind != report.kind)
            throw ConfigError("selection: mixed criterion kinds (" + std::string(to_string(est.kind)) + " vs " +
                              to_string(report.kind) + ")");
        CandidateScore cs;
        cs.candidate = candidate;
        cs.mean = est.mean;
        cs.variance = est.variance;
        if (alpha > 0.0) {
            if (!est.variance)
                throw ConfigError("selection: candidate " + candidate + " has no variance (needed for alpha>0)");
            cs.score = est.mean + alpha * std::sqrt(*est.variance);
        } else {
            cs.score = est.mean;
        }
        report.scores.push_back(cs);  // std::map iteration: ascending candidate id
    }

    double best = report.scores.front().score;
    for (const auto& cs : report.scores) best = std::min(best, cs.score);
    for (const auto& cs : report.scores) {
        if (cs.score <= best + kTieTolerance) {
            if (report.chosen.empty())
                report.chosen = cs.candidate;  // first in id order wins ties
            else
                report.tied.push_back(cs.candidate);
        }
    }
    return report;
}

} // namespace detail

// argmin of the criterion mean; ties within 1e-12 resolved by ascending
// candidate id and recorded in the trace.
inline SelectionReport select_argmin(const std::map<std::string, CriterionEstimate>& estimates,
                                     std::vector<std::pair<std::string, std::string>> excluded = {}) {
    return detail::select_by_score(estimates, "argmin-mean", 0.0, std::move(excluded));
}

// Conservative rule: minimize mean + alpha * std. alpha=0 reduces exactly
// to select_argmin.
inline SelectionReport select_conservative(const std::map<std::string, CriterionEstimate>& estimates,
                                           double alpha,
                                           std::vector<std::pair<std::string, std::string>> excluded = {}) {
    if (alpha < 0.0) throw ConfigError("select_conservative: alpha must be non-negative");
    char rule[48];
    std::snprintf(rule, sizeof(rule), "conservative(alpha=%g)", alpha);
    return detail::select_by_score(estimates, rule, alpha, std::move(excluded));
}

} // namespace fewsel
