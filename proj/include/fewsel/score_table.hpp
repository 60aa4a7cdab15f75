#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fewsel/backend.hpp"
#include "fewsel/hash.hpp"
#include "fewsel/permutations.hpp"
#include "fewsel/render.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

struct TestRecord {
    std::string test_example_id;
    std::string predicted;
    bool correct = false;
    double gold_nll = 0.0;
};

// Per-candidate cache of per-ordering, per-position label NLLs (nats); the
// single source every criterion is computed from. label_nll[row*n + pos] is
// the NLL of the gold label of the example at position pos of ordering row,
// conditioned on the preceding blocks.
struct ScoreTable {
    std::string candidate_id;
    std::vector<std::string> example_ids;  // position-index basis (train order)
    std::vector<std::vector<std::uint32_t>> orderings;
    ScoringMode mode = ScoringMode::Sequence;
    std::string channel = "label";  // "label" or "joint" (see joint_channel)
    std::vector<double> label_nll;
    std::optional<std::vector<double>> full_nll;  // incl. input tokens; sequence mode only
    std::optional<std::size_t> label_count;       // closed-class size, for uniform first folds
    std::vector<TestRecord> test_records;         // empty, or one per ordering
    std::uint64_t passes = 0;                     // logical scoring passes to build
    bool complete = false;
    std::string abort_reason;
    std::uint64_t plan_seed = 0;
    std::string backend_digest;
    double smoothing_eps = kDefaultEpsilon;

    std::size_t rows() const { return orderings.size(); }
    std::size_t n() const { return example_ids.size(); }
    double at(std::size_t row, std::size_t pos) const { return label_nll[row * n() + pos]; }
    double full_at(std::size_t row, std::size_t pos) const { return (*full_nll)[row * n() + pos]; }

    const std::string& example_at(std::size_t row, std::size_t pos) const {
        return example_ids[orderings[row][pos]];
    }
};

// Row indices sorted by ordering, lexicographically. Criteria accumulate in
// this order so their means do not depend on row enumeration order.
inline std::vector<std::size_t> canonical_row_order(const ScoreTable& table) {
    std::vector<std::size_t> idx(table.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return table.orderings[a] < table.orderings[b]; });
    return idx;
}

struct TableBuildOptions {
    ScoringMode mode = ScoringMode::Sequence;
    bool want_joint = false;
    double epsilon = kDefaultEpsilon;
    std::size_t concurrency = 1;
};

// Fills a score table from the backend. Sequence mode: one pass per
// ordering scores every position (label NLLs are raw gold-surface NLLs,
// clamped at -ln(eps)). Class-normalized mode: one score_labels call per
// (ordering, position); the entry is -ln of the smoothed gold probability.
inline ScoreTable build_score_table(const PromptCandidate& candidate, const LabelSpace& space,
                                    const TrainSet& train, const PermutationPlan& plan,
                                    ScoringBackend& backend, const TableBuildOptions& options = {}) {
    const std::size_t n = train.size();
    if (plan.n != n) throw ConfigError("build_score_table: plan is for n=" + std::to_string(plan.n) +
                                       " but train set has " + std::to_string(n) + " examples");
    if (options.want_joint && options.mode != ScoringMode::Sequence)
        throw ConfigError("build_score_table: joint channel requires sequence mode");

    ScoreTable table;
    table.candidate_id = candidate.id;
    table.example_ids = train.ids();
    table.orderings = plan.orderings;
    table.mode = options.mode;
    table.plan_seed = plan.seed;
    table.backend_digest = backend.id() + "/" + backend.model_id();
    table.smoothing_eps = options.epsilon;
    if (space.kind == LabelSpaceKind::ClosedClass) table.label_count = space.size();

    const std::size_t rows = table.rows();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    table.label_nll.assign(rows * n, nan);
    if (options.want_joint) table.full_nll = std::vector<double>(rows * n, nan);

    const double nll_cap = -std::log(options.epsilon);
    std::atomic<std::uint64_t> logical_passes{0};
    std::atomic<std::size_t> next_row{0};
    std::atomic<bool> budget_hit{false};
    std::exception_ptr first_error;
    std::mutex error_mu;

    auto fill_row = [&](std::size_t row) {
        std::vector<Example> ordered;
        ordered.reserve(n);
        for (std::uint32_t idx : table.orderings[row]) ordered.push_back(train.examples[idx]);
        if (options.mode == ScoringMode::Sequence) {
            RenderedSequence rendered = render_sequence(candidate, space, ordered);
            SequenceScore score = backend.score_sequence(rendered, PassPurpose::Criterion);
            logical_passes.fetch_add(1);
            if (score.blocks.size() != n) throw BackendError("backend returned wrong block count");
            for (std::size_t pos = 0; pos < n; ++pos) {
                table.label_nll[row * n + pos] = std::min(score.blocks[pos].label_nll, nll_cap);
                if (options.want_joint) (*table.full_nll)[row * n + pos] = score.blocks[pos].full_nll;
            }
        } else {
            for (std::size_t pos = 0; pos < n; ++pos) {
                std::span<const Example> prefix(ordered.data(), pos);
                const Example& target = ordered[pos];
                RenderedSequence context = render_sequence(candidate, space, prefix, &target);
                auto labels = effective_labels(space, target, candidate);
                LabelScore ls = backend.score_labels(context, target, labels, PassPurpose::Criterion);
                logical_passes.fetch_add(labels.size());
                double gold_prob = 0.0;
                for (const auto& gold : target.gold_labels) gold_prob += ls.prob_of(gold);
                gold_prob = std::min(gold_prob, 1.0);
                table.label_nll[row * n + pos] = -std::log(smooth_probability(gold_prob, options.epsilon));
            }
        }
    };

    auto worker = [&] {
        for (;;) {
            if (budget_hit.load(std::memory_order_relaxed)) return;
            {
                std::lock_guard<std::mutex> lock(error_mu);
                if (first_error) return;
            }
            const std::size_t row = next_row.fetch_add(1);
            if (row >= rows) return;
            try {
                fill_row(row);
            } catch (const BudgetExhausted&) {
                budget_hit.store(true);
                return;
            } catch (const BackendError& e) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error)
                    first_error = std::make_exception_ptr(BackendError(
                        "candidate " + candidate.id + ", ordering " + std::to_string(row) + ": " + e.what(),
                        e.retryable));
                return;
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t pool = std::max<std::size_t>(1, std::min(options.concurrency, rows));
    if (pool == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(pool);
        for (std::size_t i = 0; i < pool; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    table.passes = logical_passes.load();
    bool all_filled = std::none_of(table.label_nll.begin(), table.label_nll.end(),
                                   [](double v) { return std::isnan(v); });
    table.complete = all_filled && !budget_hit.load();
    if (budget_hit.load()) table.abort_reason = "pass budget exhausted";
    return table;
}

// View with the label channel replaced by the full-block (joint) NLLs, so
// the usual CV/MDL computations realize the joint-log-probability variants.
inline ScoreTable joint_channel(const ScoreTable& table) {
    if (!table.full_nll) throw DataError("joint_channel: table has no full-block NLLs");
    ScoreTable view = table;
    view.label_nll = *table.full_nll;
    view.channel = "joint";
    return view;
}

// Uniform subset of orderings (without replacement, deterministic in seed),
// emulating a reduced pass budget. Kept rows stay in original order.
inline ScoreTable subsample_table(const ScoreTable& table, std::size_t passes, std::uint64_t seed) {
    const std::size_t rows = table.rows();
    if (passes < 1 || passes > rows)
        throw ConfigError("subsample_table: passes=" + std::to_string(passes) + " out of range [1, " +
                          std::to_string(rows) + "]");
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(passes);
    std::sort(idx.begin(), idx.end());

    ScoreTable out = table;
    out.orderings.clear();
    out.label_nll.clear();
    if (out.full_nll) out.full_nll->clear();
    out.test_records.clear();
    const std::size_t n = table.n();
    for (std::size_t row : idx) {
        out.orderings.push_back(table.orderings[row]);
        for (std::size_t pos = 0; pos < n; ++pos) {
            out.label_nll.push_back(table.at(row, pos));
            if (out.full_nll) out.full_nll->push_back(table.full_at(row, pos));
        }
        if (!table.test_records.empty()) out.test_records.push_back(table.test_records[row]);
    }
    out.passes = rows == 0 ? 0 : table.passes * passes / rows;
    return out;
}

namespace detail {

inline json nll_array_to_json(const std::vector<double>& values) {
    json out = json::array();
    for (double v : values) {
        if (std::isnan(v))
            out.push_back(nullptr);
        else
            out.push_back(v);
    }
    return out;
}

inline std::vector<double> nll_array_from_json(const json& j) {
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j)
        out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    return out;
}

} // namespace detail

inline json table_to_json(const ScoreTable& table) {
    json records = json::array();
    for (const auto& r : table.test_records)
        records.push_back({{"test_example", r.test_example_id},
                           {"predicted", r.predicted},
                           {"correct", r.correct},
                           {"gold_nll", r.gold_nll}});
    json payload{{"format", "fewsel-table"},
                 {"version", 1},
                 {"candidate", table.candidate_id},
                 {"example_ids", table.example_ids},
                 {"orderings", table.orderings},
                 {"mode", to_string(table.mode)},
                 {"channel", table.channel},
                 {"label_nll", detail::nll_array_to_json(table.label_nll)},
                 {"full_nll", table.full_nll ? detail::nll_array_to_json(*table.full_nll) : json()},
                 {"label_count", table.label_count ? json(*table.label_count) : json()},
                 {"test_records", records},
                 {"passes", table.passes},
                 {"complete", table.complete},
                 {"abort_reason", table.abort_reason},
                 {"plan_seed", table.plan_seed},
                 {"backend", table.backend_digest},
                 {"smoothing_eps", table.smoothing_eps}};
    return json{{"digest", to_hex(fnv1a64(payload.dump()))}, {"payload", payload}};
}

inline ScoreTable table_from_json(const json& doc) {
    if (!doc.contains("digest") || !doc.contains("payload"))
        throw DataError("table artifact: missing digest or payload");
    const json& payload = doc["payload"];
    if (doc["digest"].get<std::string>() != to_hex(fnv1a64(payload.dump())))
        throw DataError("table artifact: digest mismatch (damaged or edited artifact)");
    if (payload.value("format", "") != "fewsel-table")
        throw DataError("table artifact: unrecognized format");

    ScoreTable t;
    t.candidate_id = payload.at("candidate").get<std::string>();
    t.example_ids = payload.at("example_ids").get<std::vector<std::string>>();
    t.orderings = payload.at("orderings").get<std::vector<std::vector<std::uint32_t>>>();
    t.mode = payload.at("mode").get<std::string>() == "sequence" ? ScoringMode::Sequence
                                                                 : ScoringMode::ClassNormalized;
    t.channel = payload.at("channel").get<std::string>();
    t.label_nll = detail::nll_array_from_json(payload.at("label_nll"));
    if (!payload.at("full_nll").is_null()) t.full_nll = detail::nll_array_from_json(payload.at("full_nll"));
    if (!payload.at("label_count").is_null()) t.label_count = payload.at("label_count").get<std::size_t>();
    for (const auto& r : payload.at("test_records"))
        t.test_records.push_back({r.at("test_example").get<std::string>(), r.at("predicted").get<std::string>(),
                                  r.at("correct").get<bool>(), r.at("gold_nll").get<double>()});
    t.passes = payload.at("passes").get<std::uint64_t>();
    t.complete = payload.at("complete").get<bool>();
    t.abort_reason = payload.value("abort_reason", "");
    t.plan_seed = payload.at("plan_seed").get<std::uint64_t>();
    t.backend_digest = payload.at("backend").get<std::string>();
    t.smoothing_eps = payload.at("smoothing_eps").get<double>();
    return t;
}

inline void save_table(const ScoreTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write table artifact: " + path.string());
    out << table_to_json(table).dump(2) << "\n";
}

inline ScoreTable load_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open table artifact: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("table artifact " + path.string() + ": digest check impossible, parse error: " + e.what());
    }
    return table_from_json(doc);
}

} // namespace fewsel
