#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewsel/error.hpp"
#include "fewsel/rng.hpp"

namespace fewsel {

using json = nlohmann::json;

struct Example {
    std::string id;
    std::map<std::string, std::string> input_fields;
    std::vector<std::string> gold_labels;  // non-empty, de-duplicated, file order
    std::vector<std::string> candidates;   // per-example label ids (per-example spaces only)
    std::map<std::string, std::string> meta;

    bool is_gold(const std::string& label_id) const {
        return std::find(gold_labels.begin(), gold_labels.end(), label_id) != gold_labels.end();
    }
};

enum class LabelSpaceKind { ClosedClass, PerExampleCandidates };

struct LabelEntry {
    std::string id;
    std::string surface;
};

struct LabelSpace {
    LabelSpaceKind kind = LabelSpaceKind::ClosedClass;
    std::vector<LabelEntry> labels;  // ordered; empty for per-example spaces

    bool contains(const std::string& id) const {
        for (const auto& l : labels)
            if (l.id == id) return true;
        return false;
    }
    const LabelEntry* find(const std::string& id) const {
        for (const auto& l : labels)
            if (l.id == id) return &l;
        return nullptr;
    }
    std::size_t size() const { return labels.size(); }
};

struct Dataset {
    std::string id;
    std::vector<Example> examples;
    LabelSpace label_space;

    const Example* find(const std::string& example_id) const {
        for (const auto& e : examples)
            if (e.id == example_id) return &e;
        return nullptr;
    }
};

// One candidate learning algorithm: a renderable prompt template plus an
// optional per-candidate override of the label surface forms.
struct PromptCandidate {
    std::string id;
    std::string block_template;  // placeholders: {field...} and {label}; {label} last
    std::string query_template;  // same placeholders; {label} marks the answer position
    std::string separator;
    std::map<std::string, std::string> label_surfaces;  // label id -> surface override
};

struct TrainSet {
    std::vector<Example> examples;
    std::uint64_t seed = 0;
    std::string dataset_id;

    std::size_t size() const { return examples.size(); }
    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(examples.size());
        for (const auto& e : examples) out.push_back(e.id);
        return out;
    }
};

// Ordered (id, surface) list used to score one example under one candidate.
// Closed-class: the task's label order, with per-candidate surface overrides.
// Per-example: the example's candidate list; surfaces default to the ids.
inline std::vector<LabelEntry> effective_labels(const LabelSpace& space, const Example& example,
                                                const PromptCandidate& candidate) {
    std::vector<LabelEntry> out;
    if (space.kind == LabelSpaceKind::ClosedClass) {
        out = space.labels;
        for (auto& entry : out) {
            auto it = candidate.label_surfaces.find(entry.id);
            if (it != candidate.label_surfaces.end()) entry.surface = it->second;
        }
    } else {
        out.reserve(example.candidates.size());
        for (const auto& id : example.candidates) {
            auto it = candidate.label_surfaces.find(id);
            out.push_back({id, it != candidate.label_surfaces.end() ? it->second : id});
        }
    }
    return out;
}

namespace detail {

inline json parse_json_line(const std::string& line, const std::filesystem::path& path, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": parse error: " + e.what());
    }
}

inline std::string require_string(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_string())
        throw DataError(where + ": missing or non-string field '" + key + "'");
    return j[key].get<std::string>();
}

} // namespace detail

// Label-space file: ordered JSON array of {"id":..., "surface":...}.
inline LabelSpace load_label_space(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label-space file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": parse error: " + e.what());
    }
    if (!j.is_array() || j.empty()) throw DataError(path.string() + ": label space must be a non-empty array");
    LabelSpace space;
    space.kind = LabelSpaceKind::ClosedClass;
    std::set<std::string> seen;
    for (const auto& entry : j) {
        LabelEntry l{detail::require_string(entry, "id", path.string()),
                     detail::require_string(entry, "surface", path.string())};
        if (l.surface.empty()) throw DataError(path.string() + ": label '" + l.id + "' has empty surface");
        if (!seen.insert(l.id).second) throw DataError(path.string() + ": duplicate label id '" + l.id + "'");
        space.labels.push_back(std::move(l));
    }
    return space;
}

// Dataset file: JSONL, one example per line with fields `id`, `input`
// (string map), `labels` (array), optional `candidates` (per-example label
// spaces) and `meta`. When no label-space file is given, the space is
// per-example-candidates and every example must carry `candidates`.
inline Dataset load_dataset(const std::filesystem::path& examples_path,
                            const std::optional<std::filesystem::path>& labels_path = std::nullopt) {
    Dataset ds;
    ds.id = examples_path.stem().string();
    if (labels_path) {
        ds.label_space = load_label_space(*labels_path);
    } else {
        ds.label_space.kind = LabelSpaceKind::PerExampleCandidates;
    }

    std::ifstream in(examples_path);
    if (!in) throw DataError("cannot open dataset file: " + examples_path.string());
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = detail::parse_json_line(line, examples_path, line_no);
        Example ex;
        ex.id = detail::require_string(j, "id", examples_path.string() + ":" + std::to_string(line_no));
        const std::string where = "example " + ex.id;
        if (!seen_ids.insert(ex.id).second) throw DataError(where + ": duplicate example id");
        if (!j.contains("input") || !j["input"].is_object())
            throw DataError(where + ": missing or non-object field 'input'");
        for (const auto& [k, v] : j["input"].items()) {
            if (!v.is_string()) throw DataError(where + ": input field '" + k + "' is not a string");
            ex.input_fields[k] = v.get<std::string>();
        }
        if (!j.contains("labels") || !j["labels"].is_array() || j["labels"].empty())
            throw DataError(where + ": 'labels' must be a non-empty array");
        for (const auto& l : j["labels"]) {
            if (!l.is_string()) throw DataError(where + ": label entries must be strings");
            const auto s = l.get<std::string>();
            if (!ex.is_gold(s)) ex.gold_labels.push_back(s);
        }
        if (j.contains("candidates")) {
            if (!j["candidates"].is_array()) throw DataError(where + ": 'candidates' must be an array");
            for (const auto& c : j["candidates"]) ex.candidates.push_back(c.get<std::string>());
        }
        if (j.contains("meta") && j["meta"].is_object())
            for (const auto& [k, v] : j["meta"].items()) ex.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();

        if (ds.label_space.kind == LabelSpaceKind::ClosedClass) {
            if (!ex.candidates.empty())
                throw DataError(where + ": per-example candidates given but the label space is closed-class");
            for (const auto& g : ex.gold_labels)
                if (!ds.label_space.contains(g))
                    throw DataError(where + ": gold label '" + g + "' not in label space");
        } else {
            if (ex.candidates.empty())
                throw DataError(where + ": per-example label space requires a 'candidates' array");
            std::set<std::string> cs(ex.candidates.begin(), ex.candidates.end());
            if (cs.size() != ex.candidates.size()) throw DataError(where + ": duplicate candidate labels");
            for (const auto& g : ex.gold_labels)
                if (!cs.count(g)) throw DataError(where + ": gold label '" + g + "' not in candidate set");
        }
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw DataError(examples_path.string() + ": dataset has no examples");
    return ds;
}

// Candidate file: JSON array of {id, block_template, query_template,
// separator, label_surfaces?}.
inline std::vector<PromptCandidate> load_candidates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open candidate file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": parse error: " + e.what());
    }
    if (!j.is_array() || j.empty()) throw DataError(path.string() + ": candidate file must be a non-empty array");
    std::vector<PromptCandidate> out;
    std::set<std::string> seen;
    for (const auto& entry : j) {
        PromptCandidate c;
        c.id = detail::require_string(entry, "id", path.string());
        if (!seen.insert(c.id).second) throw DataError(path.string() + ": duplicate candidate id '" + c.id + "'");
        c.block_template = detail::require_string(entry, "block_template", "candidate " + c.id);
        c.query_template = detail::require_string(entry, "query_template", "candidate " + c.id);
        if (!entry.contains("separator") || !entry["separator"].is_string())
            throw DataError("candidate " + c.id + ": missing 'separator'");
        c.separator = entry["separator"].get<std::string>();
        if (entry.contains("label_surfaces")) {
            for (const auto& [k, v] : entry["label_surfaces"].items()) c.label_surfaces[k] = v.get<std::string>();
        }
        out.push_back(std::move(c));
    }
    return out;
}

// Draws n examples without replacement, deterministically in `seed`. With
// coverage on, whole draws are rejected until every closed-class label is
// present. Returns (train set, remaining pool in dataset order).
inline std::pair<TrainSet, std::vector<Example>> sample_train_set(const Dataset& dataset, std::size_t n,
                                                                  std::uint64_t seed,
                                                                  bool require_class_coverage = false) {
    if (n == 0) throw ConfigError("sample_train_set: n must be positive");
    if (n > dataset.examples.size())
        throw ConfigError("sample_train_set: n=" + std::to_string(n) + " exceeds dataset size " +
                          std::to_string(dataset.examples.size()));
    std::set<std::string> classes;
    if (require_class_coverage) {
        if (dataset.label_space.kind != LabelSpaceKind::ClosedClass)
            throw ConfigError("sample_train_set: class coverage requires a closed-class label space");
        for (const auto& l : dataset.label_space.labels) classes.insert(l.id);
        if (n < classes.size())
            throw ConfigError("sample_train_set: n=" + std::to_string(n) + " cannot cover " +
                              std::to_string(classes.size()) + " classes");
        std::set<std::string> present;
        for (const auto& e : dataset.examples)
            for (const auto& g : e.gold_labels) present.insert(g);
        for (const auto& c : classes)
            if (!present.count(c)) throw ConfigError("sample_train_set: class '" + c + "' absent from dataset");
    }

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (;;) {
        std::vector<std::size_t> idx(dataset.examples.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
        if (!require_class_coverage) break;
        std::set<std::string> covered;
        for (std::size_t i : chosen)
            for (const auto& g : dataset.examples[i].gold_labels)
                if (classes.count(g)) covered.insert(g);
        if (covered.size() == classes.size()) break;
    }

    TrainSet train;
    train.seed = seed;
    train.dataset_id = dataset.id;
    std::set<std::size_t> in_train(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) train.examples.push_back(dataset.examples[i]);
    std::vector<Example> pool;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i)
        if (!in_train.count(i)) pool.push_back(dataset.examples[i]);
    return {std::move(train), std::move(pool)};
}

} // namespace fewsel
