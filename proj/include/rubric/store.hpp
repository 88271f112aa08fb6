#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rubric {

enum class RecordKind { RubricSet, Verdict, Duel, Rank, Trace };

std::string record_kind_name(RecordKind kind);

struct RecordEnvelope {
    RecordKind kind;
    int schema_version = 1;
    nlohmann::json payload;
    std::string written_at;  // ISO-8601 UTC
};

struct ScanResult {
    std::vector<RecordEnvelope> records;
    bool truncated_tail = false;  // incomplete trailing line was skipped
};

// Durable store rooted at a directory:
//   cache/               one file per response digest
//   records/rubrics.jsonl, verdicts.jsonl, eval.jsonl, trace.jsonl
// Single-writer per root (advisory flock), multi-reader. Record lines carry
// a per-line checksum; appends go through a write+flush of one full line so
// a crash never exposes a half record as valid.
class Store {
public:
    explicit Store(std::string root);
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    // -- response cache --
    std::optional<std::string> cache_get(const std::string& digest) const;
    void cache_put(const std::string& digest, const std::string& response_text,
                   const std::string& endpoint);
    std::size_t cache_size() const;

    // -- append-only records --
    void append_record(RecordKind kind, nlohmann::json payload);
    ScanResult scan_records(
        RecordKind kind,
        const std::function<bool(const nlohmann::json&)>& filter = nullptr) const;

    std::string record_file(RecordKind kind) const;
    const std::string& root() const { return root_; }

private:
    std::string cache_path(const std::string& digest) const;

    std::string root_;
    int lock_fd_ = -1;
    mutable std::mutex mutex_;
};

}  // namespace rubric
