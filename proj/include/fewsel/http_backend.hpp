#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fewsel/backend.hpp"

namespace fewsel {

struct HttpBackendConfig {
    std::string endpoint;  // e.g. http://localhost:8080/v1/completions
    std::string model;
    std::string api_key_env = "FEWSEL_API_KEY";
    std::size_t concurrency = 4;  // advisory; the table builder sizes its pool from this
    int max_retries = 3;
    int backoff_initial_ms = 250;
    double backoff_factor = 2.0;
    int timeout_sec = 120;
    std::optional<std::uint64_t> pass_budget;
    bool normalize_label_length = false;  // divide surface NLL by its token count
};

// Client for a completion endpoint that echoes the prompt with per-token
// log-probabilities and byte offsets:
//
//   request:  {"model":..., "prompt":..., "echo":true, "logprobs":0, "max_tokens":0}
//   response: {"choices":[{"logprobs":{"tokens":[...],
//                                      "token_logprobs":[null, -1.2, ...],
//                                      "text_offset":[0, 4, ...]}}]}
//
// A span's NLL is the negated sum of log-probabilities of the tokens whose
// text offset falls inside the span; token/byte alignment is the endpoint's
// responsibility. A null log-probability (leading token) contributes zero.
class HttpBackend : public ScoringBackend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.endpoint.empty()) throw ConfigError("http backend: endpoint required");
        if (config_.model.empty()) throw ConfigError("http backend: model id required");
        auto scheme_end = config_.endpoint.find("://");
        if (scheme_end == std::string::npos) throw ConfigError("http backend: endpoint must include scheme");
        auto path_start = config_.endpoint.find('/', scheme_end + 3);
        base_url_ = path_start == std::string::npos ? config_.endpoint : config_.endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
        if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
        budget_ = config_.pass_budget;
    }

    std::string id() const override { return "http:" + base_url_ + path_; }
    std::string model_id() const override { return config_.model; }

    SequenceScore score_sequence(const RenderedSequence& rendered,
                                 PassPurpose purpose = PassPurpose::Criterion) override {
        if (rendered.blocks.empty()) throw BackendError("score_sequence: rendered sequence has no blocks");
        for (const auto& b : rendered.blocks)
            if (b.label_begin == b.label_end)
                throw BackendError("score_sequence: block for example " + b.example_id + " has an empty label span");
        consume(purpose, 1);
        TokenScores tokens = fetch(rendered.text);
        SequenceScore score;
        std::size_t segment_begin = 0;  // separators are charged to the following block
        for (const auto& block : rendered.blocks) {
            BlockScore bs;
            bs.label_nll = span_nll(tokens, block.label_begin, block.label_end).nll;
            bs.full_nll = span_nll(tokens, segment_begin, block.block_end).nll;
            score.total_nll += bs.full_nll;
            score.blocks.push_back(bs);
            segment_begin = block.block_end;
        }
        return score;
    }

    LabelScore score_labels(const RenderedSequence& context, const Example& query,
                            const std::vector<LabelEntry>& labels,
                            PassPurpose purpose = PassPurpose::Criterion) override {
        if (labels.empty()) throw BackendError("score_labels: empty label list");
        if (!context.query) throw BackendError("score_labels: rendered context has no query block");
        (void)query;
        const std::size_t pos = context.query->label_begin;
        const std::string prefix = context.text.substr(0, pos);
        std::vector<std::string> ids;
        std::vector<double> raw;
        for (const auto& label : labels) {
            consume(purpose, 1);
            TokenScores tokens = fetch(prefix + label.surface);
            SpanSum s = span_nll(tokens, pos, pos + label.surface.size());
            double nll = s.nll;
            if (config_.normalize_label_length && s.tokens > 0) nll /= static_cast<double>(s.tokens);
            ids.push_back(label.id);
            raw.push_back(nll);
        }
        return make_label_score(std::move(ids), std::move(raw));
    }

private:
    struct TokenScores {
        std::vector<std::size_t> offsets;
        std::vector<double> logprobs;  // null mapped to 0.0
    };
    struct SpanSum {
        double nll = 0.0;
        std::size_t tokens = 0;
    };

    static SpanSum span_nll(const TokenScores& tokens, std::size_t begin, std::size_t end) {
        SpanSum out;
        for (std::size_t i = 0; i < tokens.offsets.size(); ++i) {
            if (tokens.offsets[i] >= begin && tokens.offsets[i] < end) {
                out.nll -= tokens.logprobs[i];
                ++out.tokens;
            }
        }
        if (out.nll < 0.0) out.nll = 0.0;
        return out;
    }

    TokenScores fetch(const std::string& prompt) {
        json body{{"model", config_.model},
                  {"prompt", prompt},
                  {"echo", true},
                  {"logprobs", 0},
                  {"max_tokens", 0}};
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        std::string payload = body.dump();
        int backoff_ms = config_.backoff_initial_ms;
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms = static_cast<int>(backoff_ms * config_.backoff_factor);
            }
            httplib::Client client(base_url_);
            client.set_read_timeout(config_.timeout_sec, 0);
            client.set_connection_timeout(config_.timeout_sec, 0);
            auto res = client.Post(path_, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;  // retryable
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;  // retryable
            }
            if (res->status != 200)
                throw BackendError("http backend: HTTP " + std::to_string(res->status) + ": " + res->body);
            return parse_response(res->body, prompt.size());
        }
        throw BackendError("http backend: giving up after " + std::to_string(config_.max_retries + 1) +
                               " attempts (" + last_error + ")",
                           /*retryable=*/true);
    }

    TokenScores parse_response(const std::string& body, std::size_t prompt_size) {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::exception& e) {
            throw BackendError(std::string("http backend: bad response JSON: ") + e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
            throw BackendError("http backend: response has no choices");
        const json& lp = j["choices"][0].value("logprobs", json());
        if (!lp.is_object() || !lp.contains("token_logprobs") || !lp.contains("text_offset"))
            throw BackendError("http backend: response lacks token log-probabilities");
        TokenScores out;
        const auto& probs = lp["token_logprobs"];
        const auto& offsets = lp["text_offset"];
        if (probs.size() != offsets.size())
            throw BackendError("http backend: token_logprobs/text_offset length mismatch");
        for (std::size_t i = 0; i < probs.size(); ++i) {
            std::size_t off = offsets[i].get<std::size_t>();
            if (off >= prompt_size)
                throw BackendError("http backend: context length exceeded (offset " + std::to_string(off) +
                                   " beyond prompt of " + std::to_string(prompt_size) + " bytes)");
            out.offsets.push_back(off);
            out.logprobs.push_back(probs[i].is_null() ? 0.0 : probs[i].get<double>());
        }
        return out;
    }

    HttpBackendConfig config_;
    std::string base_url_;
    std::string path_;
    std::string api_key_;
};

} // namespace fewsel
