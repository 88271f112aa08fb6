#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric/gateway.hpp"
#include "rubric/store.hpp"

namespace rubric {

struct TeacherCaption {
    int teacher_index = 0;           // 1-based original committee position
    std::string anonymized_label;    // "Model {k}", no model identity
    std::string text;
};

struct RubricItem {
    std::string criterion;
    std::string description;
    std::string evaluation_rule;
    double weight = 1.0;  // in {1.0, 2.0, 3.0}
    std::string justification;
    bool student_already_met = false;
    std::vector<std::string> reference_teachers;
    std::string teacher_consensus;

    nlohmann::json to_json() const;
    static RubricItem from_json(const nlohmann::json& j);
};

struct RubricSet {
    std::string image_ref;
    std::string student_caption;
    std::vector<RubricItem> items;
    int committee_size = 0;
    std::string writer_exchange_digest;

    double total_weight() const;
    nlohmann::json to_json() const;
    static RubricSet from_json(const nlohmann::json& j);
};

enum class DropReason { AlreadyMet, InsufficientConsensus, OverCap };

struct FilterReport {
    struct Drop {
        std::size_t index;
        DropReason reason;
        std::string criterion;
    };
    std::vector<RubricItem> survivors;
    std::vector<Drop> drops;
};

struct SynthesisConfig {
    std::vector<std::string> committee;  // endpoint names, order fixes labels
    std::string rubric_writer;           // endpoint name
    std::string caption_prompt = "Describe this image in detail.";
    std::string caption_system_prompt;
    std::optional<int> consensus_threshold;  // default ceil(K/2)
    int max_items = 12;
    double teacher_temperature = 0.7;
    double writer_temperature = 0.0;
    int max_tokens = 1024;
};

struct CollectResult {
    std::vector<TeacherCaption> captions;
    std::vector<std::string> dropped_endpoints;
};

// One caption per teacher in committee order; individual teachers that fail
// after retries are dropped, provided at least ceil(K/2) survive. Survivors
// are relabeled "Model 1..S" so the prompt's numbered list stays contiguous.
CollectResult collect_teacher_captions(Gateway& gateway, const std::string& image_ref,
                                       const SynthesisConfig& config);

// (system_prompt, user_parts): image first, then the templated text block.
std::pair<std::string, std::vector<UserPart>> build_rubric_prompt(
    const std::string& image_ref, const std::string& student_caption,
    const std::vector<TeacherCaption>& teacher_captions);

// Maps the writer's fenced-JSON "rubrics" array to RubricItems.
std::vector<RubricItem> parse_rubric_response(const std::string& response_text);

// Drops already-met items and items below the consensus threshold; order
// preserving; caps survivors at max_items. Throws EmptyAfterFilter.
FilterReport filter_rubric_set(const std::vector<RubricItem>& raw_items,
                               int committee_size, int consensus_threshold,
                               int max_items = 12);

inline int default_consensus_threshold(int committee_size) {
    return (committee_size + 1) / 2;  // ceil(K/2)
}

class Synthesizer {
public:
    Synthesizer(Gateway& gateway, Store* store, SynthesisConfig config)
        : gateway_(gateway), store_(store), config_(std::move(config)) {}

    // Full Stage-1 pass for one image. Persists the RubricSet when a store is
    // attached. Per-image runs are single-flight; distinct images may overlap.
    // When report is non-null it receives the filter drops for this sample.
    RubricSet synthesize(const std::string& image_ref, const std::string& student_caption,
                         FilterReport* report = nullptr);

    const SynthesisConfig& config() const { return config_; }

private:
    Gateway& gateway_;
    Store* store_;
    SynthesisConfig config_;

    std::mutex flight_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> in_flight_;
};

}  // namespace rubric
