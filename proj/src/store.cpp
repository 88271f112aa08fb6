#include "rubric/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rubric/errors.hpp"
#include "rubric/util.hpp"

namespace fs = std::filesystem;

namespace rubric {

namespace {

std::string now_iso8601() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t t = system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Line checksum: first 16 hex chars of sha256 over the line without "sum".
std::string line_checksum(const nlohmann::json& obj) {
    return sha256_hex(obj.dump()).substr(0, 16);
}

}  // namespace

std::string record_kind_name(RecordKind kind) {
    switch (kind) {
        case RecordKind::RubricSet: return "rubric_set";
        case RecordKind::Verdict: return "verdict";
        case RecordKind::Duel: return "duel";
        case RecordKind::Rank: return "rank";
        case RecordKind::Trace: return "trace";
    }
    return "unknown";
}

Store::Store(std::string root) : root_(std::move(root)) {
    fs::create_directories(fs::path(root_) / "cache");
    fs::create_directories(fs::path(root_) / "records");
    const std::string lock_path = (fs::path(root_) / ".lock").string();
    lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (lock_fd_ < 0) throw IoFailure("cannot open store lock '" + lock_path + "'");
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        throw IoFailure("store '" + root_ + "' is locked by another writer");
    }
}

Store::~Store() {
    if (lock_fd_ >= 0) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

std::string Store::cache_path(const std::string& digest) const {
    return (fs::path(root_) / "cache" / (digest + ".json")).string();
}

std::string Store::record_file(RecordKind kind) const {
    const char* name = nullptr;
    switch (kind) {
        case RecordKind::RubricSet: name = "rubrics.jsonl"; break;
        case RecordKind::Verdict: name = "verdicts.jsonl"; break;
        case RecordKind::Duel:
        case RecordKind::Rank: name = "eval.jsonl"; break;
        case RecordKind::Trace: name = "trace.jsonl"; break;
    }
    return (fs::path(root_) / "records" / name).string();
}

std::optional<std::string> Store::cache_get(const std::string& digest) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::string path = cache_path(digest);
    if (!fs::exists(path)) return std::nullopt;
    nlohmann::json entry;
    try {
        entry = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error&) {
        throw StoreCorrupt("cache entry '" + digest + "' is unparseable");
    }
    if (!entry.contains("response_text") || !entry.contains("checksum")) {
        throw StoreCorrupt("cache entry '" + digest + "' is missing fields");
    }
    const std::string text = entry["response_text"].get<std::string>();
    if (sha256_hex(text) != entry["checksum"].get<std::string>()) {
        throw StoreCorrupt("cache entry '" + digest + "' failed its checksum");
    }
    return text;
}

void Store::cache_put(const std::string& digest, const std::string& response_text,
                      const std::string& endpoint) {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::string path = cache_path(digest);
    if (fs::exists(path)) {
        nlohmann::json existing = nlohmann::json::parse(read_file(path));
        if (existing.value("response_text", std::string{}) == response_text) return;
        throw CacheConflict("digest " + digest +
                            " already cached with different response text");
    }
    nlohmann::json entry = {
        {"digest", digest},
        {"endpoint", endpoint},
        {"created_at", now_iso8601()},
        {"response_text", response_text},
        {"checksum", sha256_hex(response_text)},
    };
    write_file_atomic(path, entry.dump());
}

std::size_t Store::cache_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(fs::path(root_) / "cache")) {
        if (e.path().extension() == ".json") ++n;
    }
    return n;
}

void Store::append_record(RecordKind kind, nlohmann::json payload) {
    if (!payload.is_object()) throw SchemaViolation("record payload must be a JSON object");
    nlohmann::json obj = {
        {"kind", record_kind_name(kind)},
        {"schema_version", 1},
        {"written_at", now_iso8601()},
        {"payload", std::move(payload)},
    };
    obj["sum"] = line_checksum(nlohmann::json{{"kind", obj["kind"]},
                                              {"schema_version", obj["schema_version"]},
                                              {"written_at", obj["written_at"]},
                                              {"payload", obj["payload"]}});
    const std::string line = obj.dump() + "\n";

    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(record_file(kind), std::ios::binary | std::ios::app);
    if (!out) throw IoFailure("cannot append to '" + record_file(kind) + "'");
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw IoFailure("short append to '" + record_file(kind) + "'");
}

ScanResult Store::scan_records(
    RecordKind kind, const std::function<bool(const nlohmann::json&)>& filter) const {
    ScanResult result;
    const std::string path = record_file(kind);
    std::ifstream in(path, std::ios::binary);
    if (!in) return result;  // nothing written yet

    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    const bool file_ends_with_newline = [&] {
        std::ifstream raw(path, std::ios::binary | std::ios::ate);
        if (raw.tellg() == std::streamoff(0)) return true;
        raw.seekg(-1, std::ios::end);
        return raw.get() == '\n';
    }();

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const bool is_tail = (i + 1 == lines.size()) && !file_ends_with_newline;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(lines[i]);
        } catch (const nlohmann::json::parse_error&) {
            if (is_tail) {
                result.truncated_tail = true;
                break;
            }
            throw StoreCorrupt("unparseable record at line " + std::to_string(i + 1) +
                               " of '" + path + "'");
        }
        nlohmann::json body = {{"kind", obj.value("kind", "")},
                               {"schema_version", obj.value("schema_version", 0)},
                               {"written_at", obj.value("written_at", "")},
                               {"payload", obj.contains("payload") ? obj["payload"]
                                                                   : nlohmann::json()}};
        if (!obj.contains("sum") || obj["sum"] != line_checksum(body)) {
            if (is_tail) {
                result.truncated_tail = true;
                break;
            }
            throw StoreCorrupt("checksum mismatch at line " + std::to_string(i + 1) +
                               " of '" + path + "'");
        }
        if (obj["kind"] != record_kind_name(kind)) continue;  // shared eval file
        if (filter && !filter(obj["payload"])) continue;
        RecordEnvelope env;
        env.kind = kind;
        env.schema_version = obj["schema_version"].get<int>();
        env.written_at = obj["written_at"].get<std::string>();
        env.payload = obj["payload"];
        result.records.push_back(std::move(env));
    }
    return result;
}

}  // namespace rubric
