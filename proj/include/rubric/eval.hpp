#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric/gateway.hpp"
#include "rubric/judge.hpp"

namespace rubric {

enum class DuelJudgment { A, B, Tie };

struct DuelRecord {
    std::string image_ref;
    std::string caption_left, caption_right;   // as shown to the judge (A, B)
    std::string left_source, right_source;     // opaque source tags
    DuelJudgment judgment = DuelJudgment::Tie;
    std::string reason;
    std::uint64_t position_seed = 0;

    // Source tag of the winner, empty on a tie.
    std::string winner_source() const;
    nlohmann::json to_json() const;
    static DuelRecord from_json(const nlohmann::json& j);
};

struct SourcedCaption {
    std::string source;
    std::string text;
};

// Seeded coin decides which caption becomes "Caption A"; the judge never sees
// source tags. Judgment is mapped back to sources in the record.
DuelRecord pairwise_duel(Gateway& gateway, const std::string& image_ref,
                         const SourcedCaption& caption_1, const SourcedCaption& caption_2,
                         const JudgeConfig& config, std::uint64_t seed);

// True when caption_1 is assigned slot A under this seed.
bool duel_position_coin(std::uint64_t seed);

// (wins + 0.5 * ties) / total for the subject source.
double win_rate(const std::vector<DuelRecord>& records, const std::string& subject_source);

struct RankEntry {
    std::string label;  // "Caption A" .. "Caption E"
    std::string source;
    int accuracy = 0;
    int completeness = 0;
    int clarity = 0;
    int hallucination_penalty = 0;
    double total_score = 0.0;  // recomputed locally, authoritative
    std::string justification;
};

struct RankRecord {
    std::string image_ref;
    std::vector<RankEntry> entries;       // label order A..E
    std::vector<std::string> ranking;     // labels, best first, local sort
    std::vector<std::string> judge_ranking;  // as reported, for discrepancy logs
    bool arithmetic_discrepancy = false;  // judge total differed from local

    nlohmann::json to_json() const;
    static RankRecord from_json(const nlohmann::json& j);
};

double rank_total_score(int accuracy, int completeness, int clarity,
                        int hallucination_penalty);

// Seeded shuffle assigns the five captions to labels A-E; local recomputation
// of total_score overrides the judge's arithmetic; ranking re-derived locally
// (ties break by label order).
RankRecord blind_rank(Gateway& gateway, const std::string& image_ref,
                      const std::vector<SourcedCaption>& captions,
                      const JudgeConfig& config, std::uint64_t seed);

struct RankDistribution {
    // source -> fraction at rank positions 1..5
    std::map<std::string, std::array<double, 5>> histograms;
    struct SubMetricMeans {
        double accuracy = 0, completeness = 0, clarity = 0, hallucination_penalty = 0;
    };
    std::map<std::string, SubMetricMeans> sub_metrics;
};

RankDistribution rank_distribution(const std::vector<RankRecord>& records);

}  // namespace rubric
