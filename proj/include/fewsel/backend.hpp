#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fewsel/error.hpp"
#include "fewsel/render.hpp"
#include "fewsel/task.hpp"

namespace fewsel {

inline constexpr double kNatsToBits = 1.4426950408889634;  // 1 / ln 2
inline constexpr double kDefaultEpsilon = 1e-6;

// Clamp a probability into [eps, 1-eps]. Idempotent.
inline double smooth_probability(double p, double eps = kDefaultEpsilon) {
    if (p < 0.0 || p > 1.0) throw DataError("smooth_probability: p out of [0,1]");
    return std::min(std::max(p, eps), 1.0 - eps);
}

enum class ScoringMode { Sequence, ClassNormalized };

inline const char* to_string(ScoringMode m) {
    return m == ScoringMode::Sequence ? "sequence" : "class-normalized";
}

enum class PassPurpose { Criterion, TestEval };

// Monotone pass accounting, split by purpose. Replay hits bypass the
// upstream counters and land in cache_hits.
class PassCounter {
public:
    void add_upstream(PassPurpose purpose, std::uint64_t n = 1) {
        (purpose == PassPurpose::Criterion ? criterion_ : test_).fetch_add(n, std::memory_order_relaxed);
    }
    void add_cache_hit(std::uint64_t n = 1) { hits_.fetch_add(n, std::memory_order_relaxed); }

    std::uint64_t upstream(PassPurpose purpose) const {
        return (purpose == PassPurpose::Criterion ? criterion_ : test_).load(std::memory_order_relaxed);
    }
    std::uint64_t upstream_total() const {
        return criterion_.load(std::memory_order_relaxed) + test_.load(std::memory_order_relaxed);
    }
    std::uint64_t cache_hits() const { return hits_.load(std::memory_order_relaxed); }

private:
    std::atomic<std::uint64_t> criterion_{0};
    std::atomic<std::uint64_t> test_{0};
    std::atomic<std::uint64_t> hits_{0};
};

struct BlockScore {
    double label_nll = 0.0;  // NLL of the gold label surface, nats
    double full_nll = 0.0;   // NLL of the whole block incl. input tokens, nats
};

struct SequenceScore {
    std::vector<BlockScore> blocks;
    double total_nll = 0.0;  // sum of full-block NLLs
};

// Per-label scores for one query position. log_probs is the softmax over
// the per-surface total log-probabilities; exp(log_probs) sums to 1.
struct LabelScore {
    std::vector<std::string> label_ids;
    std::vector<double> raw_nll;    // per-surface total NLL, nats
    std::vector<double> log_probs;  // normalized
    bool normalized = true;
    std::string predicted;  // argmax; ties -> earliest label

    double prob_of(const std::string& id) const {
        for (std::size_t i = 0; i < label_ids.size(); ++i)
            if (label_ids[i] == id) return std::exp(log_probs[i]);
        return 0.0;
    }
};

// Builds a normalized LabelScore from per-surface NLLs (log-sum-exp softmax).
inline LabelScore make_label_score(std::vector<std::string> ids, std::vector<double> raw_nll) {
    if (ids.empty()) throw BackendError("score_labels: empty label list");
    LabelScore score;
    score.label_ids = std::move(ids);
    score.raw_nll = std::move(raw_nll);
    const std::size_t n = score.label_ids.size();
    double max_lp = -score.raw_nll[0];
    for (std::size_t i = 1; i < n; ++i) max_lp = std::max(max_lp, -score.raw_nll[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(-score.raw_nll[i] - max_lp);
    const double log_z = max_lp + std::log(z);
    score.log_probs.resize(n);
    std::size_t best = 0;
    for (std::size_t i = 0; i < n; ++i) {
        score.log_probs[i] = -score.raw_nll[i] - log_z;
        if (score.log_probs[i] > score.log_probs[best]) best = i;
    }
    score.predicted = score.label_ids[best];
    return score;
}

// Uniform scoring interface. One score_sequence call is one upstream pass;
// score_labels consumes one pass per label surface unless the backend can
// score multiple continuations at once.
class ScoringBackend {
public:
    virtual ~ScoringBackend() = default;

    virtual std::string id() const = 0;
    virtual std::string model_id() const = 0;

    virtual SequenceScore score_sequence(const RenderedSequence& rendered,
                                         PassPurpose purpose = PassPurpose::Criterion) = 0;

    // `context` is the rendered conditioning sequence with the query block
    // appended (empty label span marks the answer position).
    virtual LabelScore score_labels(const RenderedSequence& context, const Example& query,
                                    const std::vector<LabelEntry>& labels,
                                    PassPurpose purpose = PassPurpose::Criterion) = 0;

    PassCounter& passes() { return counter_; }
    const PassCounter& passes() const { return counter_; }

    void set_pass_budget(std::optional<std::uint64_t> budget) { budget_ = budget; }
    std::optional<std::uint64_t> pass_budget() const { return budget_; }

protected:
    // Charge `n` upstream passes, enforcing the budget.
    void consume(PassPurpose purpose, std::uint64_t n = 1) {
        if (budget_ && counter_.upstream_total() + n > *budget_) throw BudgetExhausted(*budget_);
        counter_.add_upstream(purpose, n);
    }

    PassCounter counter_;
    std::optional<std::uint64_t> budget_;
};

} // namespace fewsel
