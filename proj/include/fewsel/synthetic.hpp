#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fewsel/backend.hpp"
#include "fewsel/hash.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

// Ground-truth oracle task: every candidate has a known per-example
// correctness probability, so selection reliability can be measured against
// the truth. All draws are counter-based hashes of (seed, candidate,
// example, conditioning order), so scoring is a pure function.
struct SyntheticTaskSpec {
    std::size_t candidate_count = 0;
    std::vector<double> qualities;   // theta_a, one per candidate, in (0, 1]
    double difficulty_noise = 0.0;   // per-example shift of theta, uniform +-noise
    std::uint64_t seed = 0;
    std::size_t label_count = 2;
    std::size_t example_count = 200;

    void validate() const {
        if (candidate_count == 0) throw ConfigError("synthetic: candidate_count must be positive");
        if (qualities.size() != candidate_count)
            throw ConfigError("synthetic: qualities must have one entry per candidate");
        for (double q : qualities)
            if (!(q > 0.0) || q > 1.0) throw ConfigError("synthetic: qualities must lie in (0, 1]");
        if (label_count < 2) throw ConfigError("synthetic: label_count must be >= 2");
        if (example_count == 0) throw ConfigError("synthetic: example_count must be positive");
    }
};

namespace detail {

inline std::string synthetic_example_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ex%04zu", i);
    return buf;
}

inline std::string synthetic_candidate_id(std::size_t a) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "cand-%02zu", a);
    return buf;
}

} // namespace detail

inline Dataset make_synthetic_dataset(const SyntheticTaskSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.id = "synthetic-" + std::to_string(spec.seed);
    ds.label_space.kind = LabelSpaceKind::ClosedClass;
    for (std::size_t l = 0; l < spec.label_count; ++l) {
        std::string id = "L" + std::to_string(l);
        ds.label_space.labels.push_back({id, id});
    }
    for (std::size_t i = 0; i < spec.example_count; ++i) {
        Example ex;
        ex.id = detail::synthetic_example_id(i);
        ex.input_fields["x"] = "item " + ex.id;
        std::uint64_t g = mix64(Digest().field(spec.seed).field("gold").field(ex.id).value());
        ex.gold_labels.push_back(ds.label_space.labels[g % spec.label_count].id);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

// The candidate id is embedded in the template literal so distinct
// candidates render to distinct bytes (request digests must not collide).
inline std::vector<PromptCandidate> make_synthetic_candidates(const SyntheticTaskSpec& spec) {
    spec.validate();
    std::vector<PromptCandidate> out;
    for (std::size_t a = 0; a < spec.candidate_count; ++a) {
        PromptCandidate c;
        c.id = detail::synthetic_candidate_id(a);
        c.block_template = "[" + c.id + "] {x} -> {label}";
        c.query_template = c.block_template;
        c.separator = "\n";
        out.push_back(std::move(c));
    }
    return out;
}

class SyntheticBackend : public ScoringBackend {
public:
    SyntheticBackend(SyntheticTaskSpec spec, const Dataset& dataset,
                     const std::vector<PromptCandidate>& candidates)
        : spec_(std::move(spec)), space_(dataset.label_space) {
        spec_.validate();
        if (candidates.size() != spec_.candidate_count)
            throw ConfigError("synthetic backend: candidate list size does not match spec");
        for (std::size_t a = 0; a < candidates.size(); ++a) quality_[candidates[a].id] = spec_.qualities[a];
        for (const auto& ex : dataset.examples) {
            std::size_t gold = space_.size();
            for (std::size_t l = 0; l < space_.labels.size(); ++l)
                if (space_.labels[l].id == ex.gold_labels.front()) gold = l;
            if (gold == space_.size())
                throw ConfigError("synthetic backend: example " + ex.id + " gold label not in label space");
            gold_index_[ex.id] = gold;
        }
    }

    std::string id() const override { return "synthetic"; }
    std::string model_id() const override { return "synthetic-" + std::to_string(spec_.seed); }

    // Per-label log-probabilities for `target` after conditioning on
    // `conditioning_ids` in order. With zero noise the gold probability is
    // exactly clamp(theta); otherwise the gold label wins the argmax with
    // probability theta shifted by the example's difficulty draw, so the
    // marginal top-1 rate over examples equals theta.
    std::vector<double> label_log_probs(const std::string& candidate_id,
                                        std::span<const std::string> conditioning_ids,
                                        const std::string& target_id) const {
        const double theta = quality_of(candidate_id);
        const std::size_t gold = gold_of(target_id);
        const std::size_t L = space_.size();
        const double eps = kDefaultEpsilon;

        std::vector<double> probs(L);
        if (spec_.difficulty_noise == 0.0) {
            const double g = std::min(std::max(theta, eps), 1.0 - eps);
            for (std::size_t l = 0; l < L; ++l) probs[l] = (1.0 - g) / static_cast<double>(L - 1);
            probs[gold] = g;
        } else {
            const double u_t = draw(candidate_id, target_id, nullptr, "difficulty");
            double theta_eff = theta + spec_.difficulty_noise * (2.0 * u_t - 1.0);
            theta_eff = std::min(std::max(theta_eff, eps), 1.0 - eps);
            const bool correct = draw(candidate_id, target_id, &conditioning_ids, "draw") < theta_eff;
            const double m = (0.5 - eps) * draw(candidate_id, target_id, &conditioning_ids, "margin");
            std::size_t winner = gold;
            if (!correct) {
                auto d = static_cast<std::size_t>(
                    mix64(key(candidate_id, target_id, &conditioning_ids, "distractor")) % (L - 1));
                winner = d < gold ? d : d + 1;
            }
            for (std::size_t l = 0; l < L; ++l) probs[l] = (0.5 - m) / static_cast<double>(L - 1);
            probs[winner] = 0.5 + m;
        }
        std::vector<double> out(L);
        for (std::size_t l = 0; l < L; ++l) out[l] = std::log(probs[l]);
        return out;
    }

    // Deterministic input-token NLL for the joint channel, in [0.5, 1.5).
    double input_nll(const std::string& candidate_id, std::span<const std::string> conditioning_ids,
                     const std::string& target_id) const {
        return 0.5 + unit_from_bits(mix64(key(candidate_id, target_id, &conditioning_ids, "input")));
    }

    SequenceScore score_sequence(const RenderedSequence& rendered,
                                 PassPurpose purpose = PassPurpose::Criterion) override {
        if (rendered.blocks.empty()) throw BackendError("score_sequence: rendered sequence has no blocks");
        consume(purpose, 1);
        SequenceScore score;
        std::vector<std::string> prefix;
        prefix.reserve(rendered.blocks.size());
        for (const auto& block : rendered.blocks) {
            auto lp = label_log_probs(rendered.candidate_id, prefix, block.example_id);
            BlockScore bs;
            bs.label_nll = -lp[gold_of(block.example_id)];
            bs.full_nll = bs.label_nll + input_nll(rendered.candidate_id, prefix, block.example_id);
            score.total_nll += bs.full_nll;
            score.blocks.push_back(bs);
            prefix.push_back(block.example_id);
        }
        return score;
    }

    LabelScore score_labels(const RenderedSequence& context, const Example& query,
                            const std::vector<LabelEntry>& labels,
                            PassPurpose purpose = PassPurpose::Criterion) override {
        if (labels.empty()) throw BackendError("score_labels: empty label list");
        consume(purpose, labels.size());  // emulates one continuation pass per surface
        auto conditioning = context.block_example_ids();
        auto lp = label_log_probs(context.candidate_id, conditioning, query.id);
        std::vector<std::string> ids;
        std::vector<double> raw;
        ids.reserve(labels.size());
        raw.reserve(labels.size());
        for (const auto& entry : labels) {
            std::size_t idx = space_.size();
            for (std::size_t l = 0; l < space_.labels.size(); ++l)
                if (space_.labels[l].id == entry.id) idx = l;
            if (idx == space_.size()) throw BackendError("synthetic backend: unknown label id " + entry.id);
            ids.push_back(entry.id);
            raw.push_back(-lp[idx]);
        }
        return make_label_score(std::move(ids), std::move(raw));
    }

    const SyntheticTaskSpec& spec() const { return spec_; }

    double quality_of(const std::string& candidate_id) const {
        auto it = quality_.find(candidate_id);
        if (it == quality_.end()) throw BackendError("synthetic backend: unknown candidate id " + candidate_id);
        return it->second;
    }

private:
    std::size_t gold_of(const std::string& example_id) const {
        auto it = gold_index_.find(example_id);
        if (it == gold_index_.end()) throw BackendError("synthetic backend: unknown example id " + example_id);
        return it->second;
    }

    std::uint64_t key(const std::string& candidate_id, const std::string& target_id,
                      const std::span<const std::string>* conditioning, const char* channel) const {
        Digest d;
        d.field(spec_.seed).field(channel).field(candidate_id).field(target_id);
        if (conditioning)
            for (const auto& id : *conditioning) d.field(id);
        return d.value();
    }

    double draw(const std::string& candidate_id, const std::string& target_id,
                const std::span<const std::string>* conditioning, const char* channel) const {
        return unit_from_bits(mix64(key(candidate_id, target_id, conditioning, channel)));
    }

    SyntheticTaskSpec spec_;
    LabelSpace space_;
    std::map<std::string, double> quality_;
    std::map<std::string, std::size_t> gold_index_;
};

} // namespace fewsel
