#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewsel/error.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

// Character spans of one rendered example within the full sequence text.
// For a query block the label span is empty: label_begin == label_end marks
// where a label surface would be inserted.
struct SpanRecord {
    std::string example_id;
    std::size_t block_begin = 0;
    std::size_t block_end = 0;
    std::size_t label_begin = 0;
    std::size_t label_end = 0;
};

struct RenderedSequence {
    std::string candidate_id;
    std::string text;
    std::vector<SpanRecord> blocks;
    std::optional<SpanRecord> query;

    std::vector<std::string> block_example_ids() const {
        std::vector<std::string> out;
        out.reserve(blocks.size());
        for (const auto& b : blocks) out.push_back(b.example_id);
        return out;
    }
};

namespace detail {

struct TemplatePiece {
    std::string literal;      // text before the placeholder
    std::string placeholder;  // empty for the trailing literal piece
};

inline std::vector<TemplatePiece> parse_template(const std::string& tmpl) {
    std::vector<TemplatePiece> pieces;
    std::string literal;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close == std::string::npos) throw DataError("template has unterminated '{': " + tmpl);
            std::string name = tmpl.substr(i + 1, close - i - 1);
            if (name.empty()) throw DataError("template has empty placeholder: " + tmpl);
            pieces.push_back({literal, name});
            literal.clear();
            i = close + 1;
        } else {
            literal.push_back(tmpl[i]);
            ++i;
        }
    }
    pieces.push_back({literal, ""});
    return pieces;
}

// Renders one template into `out`. Returns the label span, or an empty span
// at the label position when `label_surface` is nullptr (query rendering).
inline std::pair<std::size_t, std::size_t> render_template(const std::vector<TemplatePiece>& pieces,
                                                           const Example& example,
                                                           const std::string* label_surface, std::string& out) {
    std::size_t label_begin = std::string::npos, label_end = std::string::npos;
    for (const auto& piece : pieces) {
        out += piece.literal;
        if (piece.placeholder.empty()) continue;
        if (piece.placeholder == "label") {
            label_begin = out.size();
            if (label_surface) out += *label_surface;
            label_end = out.size();
        } else {
            auto it = example.input_fields.find(piece.placeholder);
            if (it == example.input_fields.end())
                throw DataError("example " + example.id + ": unresolved placeholder '" + piece.placeholder + "'");
            out += it->second;
        }
    }
    return {label_begin, label_end};
}

} // namespace detail

// Structural checks on a candidate's templates: {label} exactly once in
// each, and the final placeholder of the block template (what comes after
// the label must be literal text only, so left-to-right scoring terminates
// the block on the label).
inline void validate_candidate_templates(const PromptCandidate& candidate) {
    auto count_labels = [](const std::vector<detail::TemplatePiece>& pieces) {
        std::size_t n = 0, last_placeholder = 0, label_pos = 0, i = 0;
        for (const auto& p : pieces) {
            if (!p.placeholder.empty()) {
                last_placeholder = i;
                if (p.placeholder == "label") {
                    ++n;
                    label_pos = i;
                }
            }
            ++i;
        }
        return std::tuple{n, label_pos, last_placeholder};
    };
    auto block = detail::parse_template(candidate.block_template);
    auto [bn, blabel, blast] = count_labels(block);
    if (bn != 1)
        throw DataError("candidate " + candidate.id + ": block_template must contain {label} exactly once");
    if (blabel != blast)
        throw DataError("candidate " + candidate.id + ": {label} must be the final placeholder of block_template");
    auto query = detail::parse_template(candidate.query_template);
    auto [qn, qlabel, qlast] = count_labels(query);
    (void)qlabel;
    (void)qlast;
    if (qn != 1)
        throw DataError("candidate " + candidate.id + ": query_template must contain {label} exactly once");
}

// Checks that every example in the dataset renders under the candidate.
inline void validate_candidate(const PromptCandidate& candidate, const Dataset& dataset) {
    validate_candidate_templates(candidate);
    auto block = detail::parse_template(candidate.block_template);
    auto query = detail::parse_template(candidate.query_template);
    std::string scratch;
    for (const auto& ex : dataset.examples) {
        auto labels = effective_labels(dataset.label_space, ex, candidate);
        if (labels.empty()) throw DataError("example " + ex.id + ": no labels to render");
        scratch.clear();
        detail::render_template(block, ex, &labels.front().surface, scratch);
        scratch.clear();
        detail::render_template(query, ex, nullptr, scratch);
    }
}

// The surface rendered for an example's gold label inside a block: the first
// listed gold label, mapped through the candidate's effective surfaces.
inline std::string gold_surface(const LabelSpace& space, const Example& example,
                                const PromptCandidate& candidate) {
    const std::string& gold = example.gold_labels.front();
    auto it = candidate.label_surfaces.find(gold);
    if (it != candidate.label_surfaces.end()) return it->second;
    if (space.kind == LabelSpaceKind::ClosedClass) {
        const LabelEntry* entry = space.find(gold);
        if (!entry) throw DataError("example " + example.id + ": gold label '" + gold + "' not in label space");
        return entry->surface;
    }
    return gold;
}

// Deterministic rendering: blocks joined by the candidate separator, then
// optionally the query with an empty label span. Rendering any prefix of
// `ordered` yields a byte prefix of the full rendering.
inline RenderedSequence render_sequence(const PromptCandidate& candidate, const LabelSpace& space,
                                        std::span<const Example> ordered, const Example* query = nullptr) {
    auto block_pieces = detail::parse_template(candidate.block_template);
    auto query_pieces = detail::parse_template(candidate.query_template);

    RenderedSequence seq;
    seq.candidate_id = candidate.id;
    bool first = true;
    for (const auto& ex : ordered) {
        if (!first) seq.text += candidate.separator;
        first = false;
        SpanRecord span;
        span.example_id = ex.id;
        span.block_begin = seq.text.size();
        std::string surface = gold_surface(space, ex, candidate);
        auto [lb, le] = detail::render_template(block_pieces, ex, &surface, seq.text);
        span.block_end = seq.text.size();
        span.label_begin = lb;
        span.label_end = le;
        seq.blocks.push_back(std::move(span));
    }
    if (query) {
        if (!first) seq.text += candidate.separator;
        SpanRecord span;
        span.example_id = query->id;
        span.block_begin = seq.text.size();
        auto [lb, le] = detail::render_template(query_pieces, *query, nullptr, seq.text);
        span.block_end = seq.text.size();
        span.label_begin = lb;
        span.label_end = le;
        seq.query = std::move(span);
    }
    return seq;
}

} // namespace fewsel
