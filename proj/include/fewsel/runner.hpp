#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewsel/config.hpp"
#include "fewsel/study.hpp"

namespace fewsel {

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Shortest round-trip decimal rendering (what the JSON writer emits), so
// CSVs are byte-deterministic too.
inline std::string num(double v) { return json(v).dump(); }

inline json selection_to_json(const SelectionReport& report) {
    json scores = json::array();
    for (const auto& s : report.scores)
        scores.push_back({{"candidate", s.candidate},
                          {"mean", s.mean},
                          {"variance", s.variance ? json(*s.variance) : json()},
                          {"score", s.score}});
    json excluded = json::array();
    for (const auto& [cand, reason] : report.excluded) excluded.push_back({cand, reason});
    return json{{"rule", report.rule},       {"criterion", to_string(report.kind)},
                {"chosen", report.chosen},   {"scores", scores},
                {"tied", report.tied},       {"excluded", excluded}};
}

inline json gain_to_json(const GainStats& g) {
    return json{{"raw", g.raw}, {"normalized", g.normalized ? json(*g.normalized) : json()}};
}

inline json run_record_to_json(const RunRecord& record) {
    json rules;
    for (const auto& [rule, outcome] : record.rules)
        rules[rule] = {{"chosen", outcome.chosen},
                       {"accuracy", outcome.accuracy},
                       {"gain", gain_to_json(outcome.gain)}};
    return json{{"seed", record.seed},
                {"train_set", record.train_set_id},
                {"candidate_accuracy", record.candidate_accuracy},
                {"baselines",
                 {{"best", record.best_accuracy},
                  {"worst", record.worst_accuracy},
                  {"mean", record.mean_accuracy}}},
                {"rules", rules},
                {"valid", record.valid},
                {"invalid_reason", record.invalid_reason}};
}

inline json summary_to_json(const MetricSummary& m) {
    return json{{"mean", m.mean}, {"std_error", m.std_error}};
}

inline json report_to_json(const ReliabilityReport& report) {
    json rules;
    for (const auto& [rule, rr] : report.rules) {
        json cdf = json::array();
        for (const auto& [gain, p] : rr.cdf) cdf.push_back({gain, p});
        rules[rule] = {{"accuracy", summary_to_json(rr.accuracy)},
                       {"raw_gain", summary_to_json(rr.raw_gain)},
                       {"normalized_gain", rr.normalized_gain ? json(*rr.normalized_gain) : json()},
                       {"best_selection_rate", {{"rate", rr.best_rate.rate}, {"std_error", rr.best_rate.std_error}}},
                       {"gain_cdf", cdf}};
    }
    return json{{"runs", report.runs},
                {"invalid_runs", report.invalid_runs},
                {"baselines",
                 {{"best", summary_to_json(report.best)},
                  {"worst", summary_to_json(report.worst)},
                  {"mean", summary_to_json(report.mean_candidate)}}},
                {"rules", rules}};
}

inline void write_run_reports(const std::filesystem::path& dir, const std::string& task_id,
                              const std::string& axis, const std::string& axis_value,
                              const StudyResult& result) {
    for (const auto& record : result.runs)
        write_json_file(dir / ("run-seed" + std::to_string(record.seed) + ".json"),
                        run_record_to_json(record));
    write_json_file(dir / "aggregate.json", report_to_json(result.report));

    std::ostringstream gains;
    gains << "task,rule,axis,axis_value,seed,chosen,accuracy,raw_gain,normalized_gain\n";
    for (const auto& record : result.runs) {
        if (!record.valid) continue;
        for (const auto& [rule, outcome] : record.rules) {
            gains << task_id << "," << rule << "," << axis << "," << axis_value << "," << record.seed << ","
                  << outcome.chosen << "," << num(outcome.accuracy) << "," << num(outcome.gain.raw) << ","
                  << (outcome.gain.normalized ? num(*outcome.gain.normalized) : "") << "\n";
        }
    }
    write_text(dir / "gains.csv", gains.str());

    for (const auto& [rule, rr] : result.report.rules) {
        std::ostringstream cdf;
        cdf << "gain,cumulative_probability\n";
        for (const auto& [gain, p] : rr.cdf) cdf << num(gain) << "," << num(p) << "\n";
        write_text(dir / ("cdf-" + rule + ".csv"), cdf.str());
    }

    // Single-model self-transfer row (mean -> 0, best -> 100 scaling).
    for (const auto& [rule, rr] : result.report.rules) {
        (void)rr;
        TransferInput input;
        input.models = {"self"};
        bool usable = true;
        std::map<std::string, double> mean_acc;
        for (const auto& record : result.runs) {
            if (!record.valid || !record.rules.count(rule)) {
                usable = false;
                break;
            }
            for (const auto& [cand, acc] : record.candidate_accuracy) mean_acc[cand] += acc;
        }
        if (!usable || mean_acc.empty()) continue;
        for (auto& [cand, acc] : mean_acc) acc /= static_cast<double>(result.runs.size());
        // chosen per rule: majority vote across runs, ties by id order
        std::map<std::string, std::size_t> votes;
        for (const auto& record : result.runs) votes[record.rules.at(rule).chosen]++;
        std::string chosen;
        std::size_t best_votes = 0;
        for (const auto& [cand, v] : votes)
            if (v > best_votes) {
                chosen = cand;
                best_votes = v;
            }
        input.accuracy["self"] = mean_acc;
        input.chosen["self"] = chosen;
        auto matrix = transfer_matrix(input);
        std::ostringstream tm;
        tm << "chooser,target,normalized_gain\n";
        tm << "self,self," << (matrix[0][0] ? num(*matrix[0][0]) : "") << "\n";
        write_text(dir / ("transfer-" + rule + ".csv"), tm.str());
    }
}

inline std::string axis_value_label(const std::string& axis, double value) {
    if (axis == "alpha") return num(value);
    return std::to_string(static_cast<std::size_t>(value));
}

} // namespace detail

// select: one train set (first study seed), one table per candidate, one
// selection report per requested rule. Exit code 4 when the pass budget ran
// out (partial artifacts are still written, flagged incomplete).
inline int cmd_select(const RunConfig& config) {
    MaterializedRun run = materialize(config);
    const std::filesystem::path out(config.output_dir);
    std::filesystem::create_directories(out);
    detail::write_json_file(out / "config.json", config.to_json());

    RunArtifacts artifacts = run_single(run.dataset, run.candidates, *run.backend, config.protocol,
                                        config.study.seeds.front());
    bool budget_exhausted = artifacts.budget_exhausted;

    for (const auto& [cand, table] : artifacts.tables)
        save_table(table, out / "tables" / (cand + ".table.json"));
    for (const auto& [rule, report] : artifacts.selections)
        detail::write_json_file(out / "reports" / ("selection-" + rule + ".json"),
                                detail::selection_to_json(report));
    detail::write_json_file(out / "reports" / "run.json", detail::run_record_to_json(artifacts.record));

    const PassCounter& passes = run.backend->passes();
    detail::write_json_file(out / "passes.json",
                            json{{"upstream_criterion", passes.upstream(PassPurpose::Criterion)},
                                 {"upstream_test", passes.upstream(PassPurpose::TestEval)},
                                 {"cache_hits", passes.cache_hits()},
                                 {"upstream_inner",
                                  run.upstream ? json(run.upstream->passes().upstream_total()) : json()}});
    return budget_exhausted ? kExitBudget : kExitOk;
}

// study: all seeds (x sweep values), per-run records, aggregates, CDF and
// transfer files.
inline int cmd_study(const RunConfig& config) {
    MaterializedRun run = materialize(config);
    const std::filesystem::path out(config.output_dir);
    std::filesystem::create_directories(out / "reports");
    detail::write_json_file(out / "config.json", config.to_json());

    const std::string task_id = run.dataset.id;
    if (!config.study.sweep) {
        StudyResult result = run_study(run.dataset, run.candidates, *run.backend, config.protocol,
                                       config.study.seeds);
        detail::write_run_reports(out / "reports", task_id, "none", "", result);
    } else {
        const auto& sweep = *config.study.sweep;
        std::map<std::string, StudyResult> results;  // label -> result
        if (sweep.axis == "num_examples") {
            std::vector<std::size_t> values;
            for (double v : sweep.values) values.push_back(static_cast<std::size_t>(v));
            for (auto& [v, r] : run_num_examples_sweep(run.dataset, run.candidates, *run.backend,
                                                       config.protocol, config.study.seeds, values))
                results.emplace(std::to_string(v), std::move(r));
        } else if (sweep.axis == "passes") {
            std::vector<std::size_t> values;
            for (double v : sweep.values) values.push_back(static_cast<std::size_t>(v));
            for (auto& [v, r] : run_passes_sweep(run.dataset, run.candidates, *run.backend, config.protocol,
                                                 config.study.seeds, values))
                results.emplace(std::to_string(v), std::move(r));
        } else {  // alpha
            for (auto& [v, r] : run_alpha_sweep(run.dataset, run.candidates, *run.backend, config.protocol,
                                                config.study.seeds, sweep.values))
                results.emplace(detail::num(v), std::move(r));
        }
        std::map<std::string, std::vector<RunRecord>> pooled_by_rule_source;
        for (const auto& [label, result] : results)
            detail::write_run_reports(out / "reports" / (sweep.axis + "-" + label), task_id, sweep.axis, label,
                                      result);
        // pooled CDFs across sweep values, per rule
        std::map<std::string, std::vector<RunRecord>> pooled;
        for (const auto& [label, result] : results) {
            (void)label;
            for (const auto& r : result.runs) pooled["all"].push_back(r);
        }
        if (!pooled["all"].empty()) {
            std::set<std::string> rules;
            for (const auto& r : pooled["all"])
                for (const auto& [rule, outcome] : r.rules) {
                    (void)outcome;
                    rules.insert(rule);
                }
            for (const auto& rule : rules) {
                std::vector<RunRecord> carrying;
                for (const auto& r : pooled["all"])
                    if (r.valid && r.rules.count(rule)) carrying.push_back(r);
                if (carrying.empty()) continue;
                auto cdf = gain_cdf(carrying, rule);
                std::ostringstream text;
                text << "gain,cumulative_probability\n";
                for (const auto& [gain, p] : cdf) text << detail::num(gain) << "," << detail::num(p) << "\n";
                detail::write_text(out / "reports" / ("cdf-" + rule + "-pooled.csv"), text.str());
            }
        }
    }

    const PassCounter& passes = run.backend->passes();
    detail::write_json_file(out / "passes.json",
                            json{{"upstream_criterion", passes.upstream(PassPurpose::Criterion)},
                                 {"upstream_test", passes.upstream(PassPurpose::TestEval)},
                                 {"cache_hits", passes.cache_hits()},
                                 {"upstream_inner",
                                  run.upstream ? json(run.upstream->passes().upstream_total()) : json()}});
    return kExitOk;
}

// inspect: artifact summary without touching any backend. Accepts table
// artifacts and report files.
inline int cmd_inspect(const std::filesystem::path& path, std::ostream& os = std::cout) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open artifact: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("artifact " + path.string() + ": digest check impossible, parse error: " + e.what());
    }

    if (doc.contains("payload") && doc.contains("digest")) {
        ScoreTable table = table_from_json(doc);  // digest verified inside
        os << "score table: candidate " << table.candidate_id << "\n";
        os << "  dimensions: " << table.rows() << " orderings x " << table.n() << " positions\n";
        os << "  mode: " << to_string(table.mode) << ", channel: " << table.channel << "\n";
        os << "  passes: " << table.passes << ", complete: " << (table.complete ? "yes" : "no");
        if (!table.abort_reason.empty()) os << " (" << table.abort_reason << ")";
        os << "\n";
        os << "  backend: " << table.backend_digest << "\n";
        if (!table.test_records.empty()) {
            std::size_t correct = 0;
            for (const auto& r : table.test_records) correct += r.correct ? 1 : 0;
            os << "  test accuracy: "
               << static_cast<double>(correct) / static_cast<double>(table.test_records.size()) << " over "
               << table.test_records.size() << " appended examples\n";
        }
        if (table.complete) {
            if (table.n() >= 2) os << "  cv: " << compute_cv(table).mean << "\n";
            os << "  mdl: " << compute_mdl(table).mean << "\n";
        }
        return kExitOk;
    }
    if (doc.contains("rule") && doc.contains("scores")) {
        os << "selection report: rule " << doc["rule"].get<std::string>() << " (criterion "
           << doc.value("criterion", "?") << ")\n";
        os << "  chosen: " << doc["chosen"].get<std::string>() << "\n";
        for (const auto& s : doc["scores"])
            os << "  " << s["candidate"].get<std::string>() << ": mean " << s["mean"].dump() << ", score "
               << s["score"].dump() << "\n";
        return kExitOk;
    }
    if (doc.contains("rules") && doc.contains("runs")) {
        os << "reliability report over " << doc["runs"] << " runs (" << doc["invalid_runs"]
           << " invalid)\n";
        for (const auto& [rule, rr] : doc["rules"].items())
            os << "  " << rule << ": accuracy " << rr["accuracy"]["mean"].dump() << ", best-rate "
               << rr["best_selection_rate"]["rate"].dump() << "\n";
        return kExitOk;
    }
    if (doc.contains("rules") && doc.contains("seed")) {
        os << "run record: seed " << doc["seed"] << ", train set " << doc.value("train_set", "?") << "\n";
        for (const auto& [rule, r] : doc["rules"].items())
            os << "  " << rule << ": chose " << r["chosen"].get<std::string>() << " (accuracy "
               << r["accuracy"].dump() << ")\n";
        return kExitOk;
    }
    throw DataError("artifact " + path.string() + ": unrecognized artifact type");
}

} // namespace fewsel
