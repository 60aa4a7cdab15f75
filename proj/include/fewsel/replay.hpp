#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewsel/backend.hpp"
#include "fewsel/hash.hpp"

namespace fewsel {

namespace detail {

inline json sequence_score_to_json(const SequenceScore& s) {
    json blocks = json::array();
    for (const auto& b : s.blocks) blocks.push_back({b.label_nll, b.full_nll});
    return json{{"blocks", blocks}, {"total", s.total_nll}};
}

inline SequenceScore sequence_score_from_json(const json& j) {
    SequenceScore s;
    for (const auto& b : j.at("blocks")) s.blocks.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    s.total_nll = j.at("total").get<double>();
    return s;
}

inline json label_score_to_json(const LabelScore& s) {
    return json{{"ids", s.label_ids}, {"raw", s.raw_nll}};
}

inline LabelScore label_score_from_json(const json& j) {
    return make_label_score(j.at("ids").get<std::vector<std::string>>(), j.at("raw").get<std::vector<double>>());
}

} // namespace detail

// Append-only store of (request digest -> response). The request digest
// covers the backend id, model id, rendered bytes, scoring op and the label
// surfaces in play; each record carries a checksum over its own content so
// tampering is detected at load.
class ReplayStore {
public:
    struct Entry {
        std::string request;   // canonical JSON
        std::string response;  // canonical JSON
    };

    static std::uint64_t entry_checksum(std::uint64_t key, const Entry& e) {
        return Digest().field(key).field(e.request).field(e.response).value();
    }

    void load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw BackendError("replay store not readable: " + path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw BackendError("replay store " + path.string() + ":" + std::to_string(line_no) +
                                   ": parse error: " + e.what());
            }
            if (line_no == 1) {
                if (j.value("format", "") != "fewsel-replay")
                    throw BackendError("replay store " + path.string() + ": unrecognized header");
                backend_id_ = j.value("backend", "");
                model_id_ = j.value("model", "");
                continue;
            }
            Entry e{j.at("request").dump(), j.at("response").dump()};
            std::uint64_t key = std::stoull(j.at("key").get<std::string>(), nullptr, 16);
            if (to_hex(entry_checksum(key, e)) != j.at("checksum").get<std::string>())
                throw BackendError("replay store " + path.string() + ":" + std::to_string(line_no) +
                                   ": digest mismatch (tampered or truncated entry)");
            entries_[key] = std::move(e);
        }
        if (backend_id_.empty() && entries_.empty())
            throw BackendError("replay store " + path.string() + ": empty store");
    }

    void open_for_append(const std::filesystem::path& path, const std::string& backend_id,
                         const std::string& model_id) {
        if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
            load(path);
            if (backend_id_ != backend_id || model_id_ != model_id)
                throw BackendError("replay store " + path.string() + " was recorded for backend '" + backend_id_ +
                                   "/" + model_id_ + "', not '" + backend_id + "/" + model_id + "'");
        } else {
            backend_id_ = backend_id;
            model_id_ = model_id;
        }
        out_.open(path, std::ios::app);
        if (!out_) throw BackendError("replay store not writable: " + path.string());
        if (entries_.empty()) {
            json header{{"format", "fewsel-replay"}, {"version", 1}, {"backend", backend_id}, {"model", model_id}};
            out_ << header.dump() << "\n";
            out_.flush();
        }
    }

    const Entry* find(std::uint64_t key) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    void append(std::uint64_t key, Entry entry) {
        json record{{"key", to_hex(key)},
                    {"checksum", to_hex(entry_checksum(key, entry))},
                    {"request", json::parse(entry.request)},
                    {"response", json::parse(entry.response)}};
        out_ << record.dump() << "\n";
        out_.flush();
        entries_[key] = std::move(entry);
    }

    const std::string& backend_id() const { return backend_id_; }
    const std::string& model_id() const { return model_id_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::uint64_t, Entry> entries_;
    std::ofstream out_;
    std::string backend_id_;
    std::string model_id_;
};

// Record/replay wrapper. Record mode is a read-through cache over an inner
// backend; replay mode answers from the store alone and never contacts
// upstream. Lookups verify the stored request bytes, so a digest collision
// is reported rather than silently served.
class ReplayBackend : public ScoringBackend {
public:
    static std::unique_ptr<ReplayBackend> record(std::shared_ptr<ScoringBackend> inner,
                                                 const std::filesystem::path& store_path) {
        auto b = std::unique_ptr<ReplayBackend>(new ReplayBackend());
        b->inner_ = std::move(inner);
        b->store_.open_for_append(store_path, b->inner_->id(), b->inner_->model_id());
        return b;
    }

    static std::unique_ptr<ReplayBackend> replay(const std::filesystem::path& store_path) {
        auto b = std::unique_ptr<ReplayBackend>(new ReplayBackend());
        b->store_.load(store_path);
        return b;
    }

    std::string id() const override { return store_.backend_id(); }
    std::string model_id() const override { return store_.model_id(); }

    SequenceScore score_sequence(const RenderedSequence& rendered,
                                 PassPurpose purpose = PassPurpose::Criterion) override {
        json request{{"op", "sequence"},
                     {"backend", id()},
                     {"model", model_id()},
                     {"text", rendered.text},
                     {"examples", rendered.block_example_ids()},
                     {"candidate", rendered.candidate_id}};
        auto response = exchange(request.dump(), [&] {
            return detail::sequence_score_to_json(inner_->score_sequence(rendered, purpose)).dump();
        });
        return detail::sequence_score_from_json(json::parse(response));
    }

    LabelScore score_labels(const RenderedSequence& context, const Example& query,
                            const std::vector<LabelEntry>& labels,
                            PassPurpose purpose = PassPurpose::Criterion) override {
        json surfaces = json::array();
        for (const auto& l : labels) surfaces.push_back({l.id, l.surface});
        json request{{"op", "labels"},
                     {"backend", id()},
                     {"model", model_id()},
                     {"text", context.text},
                     {"examples", context.block_example_ids()},
                     {"candidate", context.candidate_id},
                     {"query", query.id},
                     {"labels", surfaces}};
        auto response = exchange(request.dump(), [&] {
            return detail::label_score_to_json(inner_->score_labels(context, query, labels, purpose)).dump();
        });
        return detail::label_score_from_json(json::parse(response));
    }

    bool replay_only() const { return inner_ == nullptr; }
    ScoringBackend* upstream() { return inner_.get(); }
    std::size_t store_size() const { return store_.size(); }

private:
    ReplayBackend() = default;

    template <typename Fetch>
    std::string exchange(const std::string& request, Fetch&& fetch) {
        const std::uint64_t key = fnv1a64(request);
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (const auto* hit = store_.find(key)) {
                if (hit->request != request)
                    throw BackendError("replay store digest collision for key " + to_hex(key));
                counter_.add_cache_hit();
                return hit->response;
            }
            if (!inner_) throw BackendError("no recorded response for request digest " + to_hex(key));
        }
        std::string response = fetch();  // upstream call outside the lock
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (!store_.find(key)) store_.append(key, {request, response});
        }
        return response;
    }

    std::shared_ptr<ScoringBackend> inner_;
    ReplayStore store_;
    std::mutex mu_;
};

} // namespace fewsel
