#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rubric/gateway.hpp"
#include "rubric/rubric.hpp"

namespace rubric {

struct JudgeVerdict {
    int criterion_index = 0;
    int score = 0;  // 0 or 1
    std::string reasoning;
    std::string exchange_digest;
};

struct RewardResult {
    double reward = 0.0;  // satisfied_weight / total_weight, in [0, 1]
    std::vector<JudgeVerdict> verdicts;
    double total_weight = 0.0;
    double satisfied_weight = 0.0;
};

// Text-only prompt for one rubric criterion (the rubric judge sees no image).
std::string build_judge_prompt(const RubricItem& item, const std::string& caption);

// Score must be exactly 0 or 1; numeric strings "0"/"1" coerce.
JudgeVerdict parse_verdict(const std::string& response_text, int criterion_index);

struct JudgeConfig {
    std::string judge_endpoint;
    double temperature = 0.0;
    int max_tokens = 1024;
};

// One verdict per rubric item, order-aligned. An unparseable verdict is
// retried once (cache bypassed, fresh sample), then defaults to score 0 with
// reasoning "judge-parse-failure" -- failure never inflates reward.
std::vector<JudgeVerdict> judge_caption(Gateway& gateway, const std::string& caption,
                                        const RubricSet& rubric_set,
                                        const JudgeConfig& config);

RewardResult aggregate_reward(const std::vector<JudgeVerdict>& verdicts,
                              const RubricSet& rubric_set);

// ROUGE-L F1: lowercase, strip punctuation, whitespace tokenize; 0 when
// either side is empty.
double rouge_l_reward(const std::string& candidate, const std::string& reference);

std::vector<std::string> rouge_tokenize(const std::string& text);
std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b);

enum class LikertMode { Direct, Reference };

// 0-10 judge score normalized to [0,1]. The Likert judge is a VLM: the image
// is attached. Parse rule: first integer token in [0,10]; one retry, then
// ScoreUnparseable.
double likert_reward(Gateway& gateway, const std::string& caption,
                     const JudgeConfig& config, LikertMode mode,
                     const std::optional<std::string>& reference_caption,
                     const std::string& image_ref);

// First integer in [0,10] in the text, if any.
std::optional<int> parse_likert_score(const std::string& text);

}  // namespace rubric
