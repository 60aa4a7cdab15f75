#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewsel/error.hpp"
#include "fewsel/http_backend.hpp"
#include "fewsel/replay.hpp"
#include "fewsel/study.hpp"
#include "fewsel/synthetic.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

struct TaskConfig {
    std::string dataset;
    std::optional<std::string> labels;  // absent -> per-example candidate spaces
    std::string candidates;
    bool class_coverage = false;
};

struct BackendConfig {
    std::string kind = "synthetic";  // synthetic | http | replay
    std::string endpoint;
    std::string model;
    std::size_t concurrency = 4;
    std::optional<std::uint64_t> pass_budget;
    std::optional<std::string> replay_store;
    bool record = false;
    std::string api_key_env = "FEWSEL_API_KEY";
    bool normalize_label_length = false;
    std::optional<SyntheticTaskSpec> synthetic;
};

struct SweepConfig {
    std::string axis;  // num_examples | passes | alpha
    std::vector<double> values;
};

struct StudyConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::optional<SweepConfig> sweep;
};

struct RunConfig {
    std::optional<TaskConfig> task;  // absent only for synthetic backends
    BackendConfig backend;
    StudyProtocol protocol;
    StudyConfig study;
    std::string output_dir = "out";

    void validate(bool check_paths = true) const;
    json to_json() const;
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field " + path + "." + key + " has the wrong type");
    }
}

} // namespace detail

inline RunConfig run_config_from_json(const json& j) {
    RunConfig config;
    if (j.contains("task") && !j["task"].is_null()) {
        const json& t = j["task"];
        TaskConfig task;
        task.dataset = detail::get_or<std::string>(t, "dataset", "", "task");
        if (t.contains("labels") && !t["labels"].is_null())
            task.labels = detail::get_or<std::string>(t, "labels", "", "task");
        task.candidates = detail::get_or<std::string>(t, "candidates", "", "task");
        task.class_coverage = detail::get_or<bool>(t, "class_coverage", false, "task");
        config.task = std::move(task);
    }
    if (j.contains("backend")) {
        const json& b = j["backend"];
        auto& backend = config.backend;
        backend.kind = detail::get_or<std::string>(b, "kind", "synthetic", "backend");
        backend.endpoint = detail::get_or<std::string>(b, "endpoint", "", "backend");
        backend.model = detail::get_or<std::string>(b, "model", "", "backend");
        backend.concurrency = detail::get_or<std::size_t>(b, "concurrency", 4, "backend");
        if (b.contains("pass_budget") && !b["pass_budget"].is_null())
            backend.pass_budget = detail::get_or<std::uint64_t>(b, "pass_budget", 0, "backend");
        if (b.contains("replay_store") && !b["replay_store"].is_null())
            backend.replay_store = detail::get_or<std::string>(b, "replay_store", "", "backend");
        backend.record = detail::get_or<bool>(b, "record", false, "backend");
        backend.api_key_env = detail::get_or<std::string>(b, "api_key_env", "FEWSEL_API_KEY", "backend");
        backend.normalize_label_length = detail::get_or<bool>(b, "normalize_label_length", false, "backend");
        if (b.contains("synthetic") && !b["synthetic"].is_null()) {
            const json& s = b["synthetic"];
            SyntheticTaskSpec spec;
            spec.candidate_count = detail::get_or<std::size_t>(s, "candidates", 0, "backend.synthetic");
            spec.qualities = detail::get_or<std::vector<double>>(s, "qualities", {}, "backend.synthetic");
            spec.difficulty_noise = detail::get_or<double>(s, "difficulty_noise", 0.0, "backend.synthetic");
            spec.seed = detail::get_or<std::uint64_t>(s, "seed", 0, "backend.synthetic");
            spec.label_count = detail::get_or<std::size_t>(s, "labels", 2, "backend.synthetic");
            spec.example_count = detail::get_or<std::size_t>(s, "examples", 200, "backend.synthetic");
            backend.synthetic = std::move(spec);
        }
    }
    if (j.contains("protocol")) {
        const json& p = j["protocol"];
        auto& protocol = config.protocol;
        protocol.n = detail::get_or<std::size_t>(p, "n", 5, "protocol");
        protocol.k = detail::get_or<std::size_t>(p, "k", 0, "protocol");
        protocol.permutation_budget = detail::get_or<std::size_t>(p, "permutation_budget", 120, "protocol");
        const std::string mode = detail::get_or<std::string>(p, "scoring_mode", "sequence", "protocol");
        if (mode == "sequence")
            protocol.mode = ScoringMode::Sequence;
        else if (mode == "class-normalized")
            protocol.mode = ScoringMode::ClassNormalized;
        else
            throw ConfigError("config field protocol.scoring_mode: unknown mode '" + mode + "'");
        protocol.criteria =
            detail::get_or<std::vector<std::string>>(p, "criteria", {"cv", "mdl"}, "protocol");
        protocol.alphas = detail::get_or<std::vector<double>>(p, "alpha", {}, "protocol");
        protocol.beta = detail::get_or<double>(p, "beta", 1.0, "protocol");
        protocol.first_fold_uniform = detail::get_or<bool>(p, "first_fold_uniform", false, "protocol");
        protocol.epsilon = detail::get_or<double>(p, "epsilon", kDefaultEpsilon, "protocol");
        protocol.concurrency = detail::get_or<std::size_t>(p, "concurrency", 1, "protocol");
        protocol.include_oracle_rule = detail::get_or<bool>(p, "oracle_rule", true, "protocol");
        protocol.include_random_rule = detail::get_or<bool>(p, "random_rule", true, "protocol");
    }
    if (j.contains("study")) {
        const json& s = j["study"];
        if (s.contains("seeds")) {
            config.study.seeds = detail::get_or<std::vector<std::uint64_t>>(s, "seeds", {}, "study");
        } else if (s.contains("seed_count")) {
            auto count = detail::get_or<std::size_t>(s, "seed_count", 5, "study");
            config.study.seeds.clear();
            for (std::size_t i = 1; i <= count; ++i) config.study.seeds.push_back(i);
        }
        if (s.contains("sweep") && !s["sweep"].is_null()) {
            SweepConfig sweep;
            sweep.axis = detail::get_or<std::string>(s["sweep"], "axis", "", "study.sweep");
            sweep.values = detail::get_or<std::vector<double>>(s["sweep"], "values", {}, "study.sweep");
            config.study.sweep = std::move(sweep);
        }
    }
    config.output_dir = detail::get_or<std::string>(j, "output_dir", "out", "config");
    return config;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": parse error: " + e.what());
    }
    return run_config_from_json(j);
}

inline void RunConfig::validate(bool check_paths) const {
    protocol.validate();
    if (protocol.k != 0 && (protocol.k < 2 || protocol.k > protocol.n))
        throw ConfigError("config field protocol.k out of range [2, n]");
    if (backend.kind != "synthetic" && backend.kind != "http" && backend.kind != "replay")
        throw ConfigError("config field backend.kind: unknown kind '" + backend.kind + "'");
    if (backend.kind == "synthetic") {
        if (!backend.synthetic) throw ConfigError("config field backend.synthetic required for synthetic backend");
        backend.synthetic->validate();
    }
    if (backend.kind == "http") {
        if (backend.endpoint.empty()) throw ConfigError("config field backend.endpoint required for http backend");
        if (backend.model.empty()) throw ConfigError("config field backend.model required for http backend");
    }
    if (backend.kind == "replay" && !backend.replay_store)
        throw ConfigError("config field backend.replay_store required for replay backend");
    if (backend.record && !backend.replay_store)
        throw ConfigError("config field backend.replay_store required when backend.record is set");
    if (backend.kind != "synthetic" && !task)
        throw ConfigError("config field task required for non-synthetic backends");
    if (task) {
        if (task->dataset.empty()) throw ConfigError("config field task.dataset required");
        if (task->candidates.empty()) throw ConfigError("config field task.candidates required");
        if (check_paths) {
            if (!std::filesystem::exists(task->dataset))
                throw ConfigError("config field task.dataset: no such file " + task->dataset);
            if (task->labels && !std::filesystem::exists(*task->labels))
                throw ConfigError("config field task.labels: no such file " + *task->labels);
            if (!std::filesystem::exists(task->candidates))
                throw ConfigError("config field task.candidates: no such file " + task->candidates);
        }
    }
    if (study.seeds.empty()) throw ConfigError("config field study.seeds must not be empty");
    if (study.sweep) {
        const auto& axis = study.sweep->axis;
        if (axis != "num_examples" && axis != "passes" && axis != "alpha")
            throw ConfigError("config field study.sweep.axis: unknown axis '" + axis + "'");
        if (study.sweep->values.empty()) throw ConfigError("config field study.sweep.values must not be empty");
    }
}

inline json RunConfig::to_json() const {
    json j;
    if (task) {
        j["task"] = {{"dataset", task->dataset},
                     {"labels", task->labels ? json(*task->labels) : json()},
                     {"candidates", task->candidates},
                     {"class_coverage", task->class_coverage}};
    } else {
        j["task"] = nullptr;
    }
    json b{{"kind", backend.kind},
           {"endpoint", backend.endpoint},
           {"model", backend.model},
           {"concurrency", backend.concurrency},
           {"pass_budget", backend.pass_budget ? json(*backend.pass_budget) : json()},
           {"replay_store", backend.replay_store ? json(*backend.replay_store) : json()},
           {"record", backend.record},
           {"api_key_env", backend.api_key_env},
           {"normalize_label_length", backend.normalize_label_length}};
    if (backend.synthetic) {
        b["synthetic"] = {{"candidates", backend.synthetic->candidate_count},
                          {"qualities", backend.synthetic->qualities},
                          {"difficulty_noise", backend.synthetic->difficulty_noise},
                          {"seed", backend.synthetic->seed},
                          {"labels", backend.synthetic->label_count},
                          {"examples", backend.synthetic->example_count}};
    }
    j["backend"] = std::move(b);
    j["protocol"] = {{"n", protocol.n},
                     {"k", protocol.k},
                     {"permutation_budget", protocol.permutation_budget},
                     {"scoring_mode", protocol.mode == ScoringMode::Sequence ? "sequence" : "class-normalized"},
                     {"criteria", protocol.criteria},
                     {"alpha", protocol.alphas},
                     {"beta", protocol.beta},
                     {"first_fold_uniform", protocol.first_fold_uniform},
                     {"epsilon", protocol.epsilon},
                     {"concurrency", protocol.concurrency},
                     {"oracle_rule", protocol.include_oracle_rule},
                     {"random_rule", protocol.include_random_rule}};
    json s{{"seeds", study.seeds}};
    if (study.sweep) s["sweep"] = {{"axis", study.sweep->axis}, {"values", study.sweep->values}};
    j["study"] = std::move(s);
    j["output_dir"] = output_dir;
    return j;
}

// The task and backend a config describes, ready to run.
struct MaterializedRun {
    Dataset dataset;
    std::vector<PromptCandidate> candidates;
    std::shared_ptr<ScoringBackend> backend;
    ScoringBackend* upstream = nullptr;  // inner backend when record/replay wraps it
};

inline MaterializedRun materialize(const RunConfig& config) {
    config.validate();
    MaterializedRun run;
    if (config.backend.kind == "synthetic") {
        const auto& spec = *config.backend.synthetic;
        if (config.task) {
            run.dataset = load_dataset(config.task->dataset,
                                       config.task->labels
                                           ? std::optional<std::filesystem::path>(*config.task->labels)
                                           : std::nullopt);
            run.candidates = load_candidates(config.task->candidates);
        } else {
            run.dataset = make_synthetic_dataset(spec);
            run.candidates = make_synthetic_candidates(spec);
        }
        auto inner = std::make_shared<SyntheticBackend>(spec, run.dataset, run.candidates);
        inner->set_pass_budget(config.backend.pass_budget);
        run.upstream = inner.get();
        if (config.backend.replay_store && config.backend.record)
            run.backend = ReplayBackend::record(inner, *config.backend.replay_store);
        else
            run.backend = inner;
    } else {
        run.dataset = load_dataset(config.task->dataset,
                                   config.task->labels
                                       ? std::optional<std::filesystem::path>(*config.task->labels)
                                       : std::nullopt);
        run.candidates = load_candidates(config.task->candidates);
        if (config.backend.kind == "replay") {
            run.backend = ReplayBackend::replay(*config.backend.replay_store);
        } else {
            HttpBackendConfig http;
            http.endpoint = config.backend.endpoint;
            http.model = config.backend.model;
            http.api_key_env = config.backend.api_key_env;
            http.concurrency = config.backend.concurrency;
            http.pass_budget = config.backend.pass_budget;
            http.normalize_label_length = config.backend.normalize_label_length;
            auto inner = std::make_shared<HttpBackend>(http);
            run.upstream = inner.get();
            if (config.backend.replay_store)
                run.backend = ReplayBackend::record(inner, *config.backend.replay_store);
            else
                run.backend = inner;
        }
    }
    for (const auto& candidate : run.candidates) validate_candidate(candidate, run.dataset);
    return run;
}

} // namespace fewsel
