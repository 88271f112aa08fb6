#include "rubric/eval.hpp"

#include <algorithm>
#include <cmath>

#include "rubric/errors.hpp"
#include "rubric/prompts.hpp"
#include "rubric/util.hpp"

namespace rubric {

namespace {

const char* judgment_name(DuelJudgment j) {
    switch (j) {
        case DuelJudgment::A: return "A";
        case DuelJudgment::B: return "B";
        case DuelJudgment::Tie: return "Tie";
    }
    return "Tie";
}

DuelJudgment judgment_from(const std::string& s) {
    if (s == "A") return DuelJudgment::A;
    if (s == "B") return DuelJudgment::B;
    if (s == "Tie") return DuelJudgment::Tie;
    throw SchemaViolation("judgment must be A, B, or Tie; got '" + s + "'");
}

}  // namespace

std::string DuelRecord::winner_source() const {
    switch (judgment) {
        case DuelJudgment::A: return left_source;
        case DuelJudgment::B: return right_source;
        case DuelJudgment::Tie: return {};
    }
    return {};
}

nlohmann::json DuelRecord::to_json() const {
    return {
        {"image_ref", image_ref},
        {"caption_left", caption_left},
        {"caption_right", caption_right},
        {"left_source", left_source},
        {"right_source", right_source},
        {"judgment", judgment_name(judgment)},
        {"reason", reason},
        {"position_seed", position_seed},
    };
}

DuelRecord DuelRecord::from_json(const nlohmann::json& j) {
    DuelRecord r;
    r.image_ref = j.at("image_ref").get<std::string>();
    r.caption_left = j.at("caption_left").get<std::string>();
    r.caption_right = j.at("caption_right").get<std::string>();
    r.left_source = j.at("left_source").get<std::string>();
    r.right_source = j.at("right_source").get<std::string>();
    r.judgment = judgment_from(j.at("judgment").get<std::string>());
    r.reason = j.value("reason", std::string{});
    r.position_seed = j.value("position_seed", std::uint64_t{0});
    return r;
}

bool duel_position_coin(std::uint64_t seed) {
    return (splitmix64(seed) >> 63) != 0;
}

DuelRecord pairwise_duel(Gateway& gateway, const std::string& image_ref,
                         const SourcedCaption& caption_1, const SourcedCaption& caption_2,
                         const JudgeConfig& config, std::uint64_t seed) {
    if (caption_1.text.empty() || caption_2.text.empty()) {
        throw SchemaViolation("both duel captions must be non-empty");
    }
    const bool first_is_a = duel_position_coin(seed);
    const SourcedCaption& a = first_is_a ? caption_1 : caption_2;
    const SourcedCaption& b = first_is_a ? caption_2 : caption_1;

    ChatRequest request;
    request.endpoint = config.judge_endpoint;
    request.user_parts = {ImagePart{image_ref},
                          UserPart{prompts::render_duel(a.text, b.text)}};
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;

    DuelRecord record;
    record.image_ref = image_ref;
    record.caption_left = a.text;
    record.caption_right = b.text;
    record.left_source = a.source;
    record.right_source = b.source;
    record.position_seed = seed;

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatExchange exchange =
            gateway.chat_complete(request, ChatOptions{.bypass_cache = attempt > 0});
        try {
            nlohmann::json j = extract_json(exchange.response_text);
            record.judgment = judgment_from(j.at("judgment").get<std::string>());
            record.reason = j.value("reason", std::string{});
            return record;
        } catch (const Error& e) {
            last_error = e.what();
        } catch (const nlohmann::json::exception& e) {
            last_error = e.what();
        }
    }
    throw SchemaViolation("duel judge response unusable after retry: " + last_error);
}

double win_rate(const std::vector<DuelRecord>& records, const std::string& subject_source) {
    if (records.empty()) throw SubjectAbsent("no duel records");
    double score = 0.0;
    for (const auto& r : records) {
        const bool left = r.left_source == subject_source;
        const bool right = r.right_source == subject_source;
        if (left == right) {
            throw SubjectAbsent("record does not involve '" + subject_source +
                                "' on exactly one side");
        }
        if (r.judgment == DuelJudgment::Tie) {
            score += 0.5;
        } else if (r.winner_source() == subject_source) {
            score += 1.0;
        }
    }
    return score / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Blind ranking

double rank_total_score(int accuracy, int completeness, int clarity,
                        int hallucination_penalty) {
    return (accuracy + completeness + clarity) / 3.0 - hallucination_penalty * 1.5;
}

nlohmann::json RankRecord::to_json() const {
    nlohmann::json entries_json = nlohmann::json::array();
    for (const auto& e : entries) {
        entries_json.push_back({
            {"label", e.label},
            {"source", e.source},
            {"accuracy", e.accuracy},
            {"completeness", e.completeness},
            {"clarity", e.clarity},
            {"hallucination_penalty", e.hallucination_penalty},
            {"total_score", e.total_score},
            {"justification", e.justification},
        });
    }
    return {
        {"image_ref", image_ref},
        {"entries", entries_json},
        {"ranking", ranking},
        {"judge_ranking", judge_ranking},
        {"arithmetic_discrepancy", arithmetic_discrepancy},
    };
}

RankRecord RankRecord::from_json(const nlohmann::json& j) {
    RankRecord r;
    r.image_ref = j.at("image_ref").get<std::string>();
    for (const auto& e : j.at("entries")) {
        RankEntry entry;
        entry.label = e.at("label").get<std::string>();
        entry.source = e.at("source").get<std::string>();
        entry.accuracy = e.at("accuracy").get<int>();
        entry.completeness = e.at("completeness").get<int>();
        entry.clarity = e.at("clarity").get<int>();
        entry.hallucination_penalty = e.at("hallucination_penalty").get<int>();
        entry.total_score = e.at("total_score").get<double>();
        entry.justification = e.value("justification", std::string{});
        r.entries.push_back(std::move(entry));
    }
    r.ranking = j.at("ranking").get<std::vector<std::string>>();
    r.judge_ranking = j.value("judge_ranking", std::vector<std::string>{});
    r.arithmetic_discrepancy = j.value("arithmetic_discrepancy", false);
    return r;
}

namespace {

int checked_subscore(const nlohmann::json& assessment, const char* field) {
    if (!assessment.contains(field) || !assessment[field].is_number()) {
        throw SchemaViolation(std::string("assessment missing integer '") + field + "'");
    }
    const double d = assessment[field].get<double>();
    const int v = static_cast<int>(std::lround(d));
    if (v < 0 || v > 10 || d != static_cast<double>(v)) {
        throw SchemaViolation(std::string(field) + " must be an integer in [0, 10]");
    }
    return v;
}

RankRecord parse_rank_response(const std::string& response_text,
                               const std::string& image_ref,
                               const std::vector<std::string>& labels,
                               const std::vector<std::string>& label_sources) {
    nlohmann::json j = extract_json(response_text);
    if (!j.contains("assessments") || !j["assessments"].is_object()) {
        throw SchemaViolation("rank response has no 'assessments' object");
    }
    const auto& assessments = j["assessments"];

    RankRecord record;
    record.image_ref = image_ref;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!assessments.contains(labels[i])) {
            throw MissingAssessment("no assessment for " + labels[i]);
        }
        const auto& a = assessments[labels[i]];
        RankEntry entry;
        entry.label = labels[i];
        entry.source = label_sources[i];
        entry.accuracy = checked_subscore(a, "accuracy");
        entry.completeness = checked_subscore(a, "completeness");
        entry.clarity = checked_subscore(a, "clarity");
        entry.hallucination_penalty = checked_subscore(a, "hallucination_penalty");
        entry.justification = a.value("justification", std::string{});
        // The judge's arithmetic is untrusted; the local value is authoritative.
        entry.total_score = rank_total_score(entry.accuracy, entry.completeness,
                                             entry.clarity, entry.hallucination_penalty);
        if (a.contains("total_score") && a["total_score"].is_number() &&
            std::abs(a["total_score"].get<double>() - entry.total_score) > 1e-9) {
            record.arithmetic_discrepancy = true;
        }
        record.entries.push_back(std::move(entry));
    }
    if (j.contains("ranking") && j["ranking"].is_array()) {
        record.judge_ranking = j["ranking"].get<std::vector<std::string>>();
    }

    // Rank locally by total_score descending; ties break by label order.
    std::vector<std::size_t> order(record.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return record.entries[x].total_score > record.entries[y].total_score;
    });
    for (std::size_t i : order) record.ranking.push_back(record.entries[i].label);
    return record;
}

}  // namespace

RankRecord blind_rank(Gateway& gateway, const std::string& image_ref,
                      const std::vector<SourcedCaption>& captions,
                      const JudgeConfig& config, std::uint64_t seed) {
    if (captions.size() != 5) {
        throw SchemaViolation("blind_rank requires exactly 5 captions");
    }
    std::vector<std::size_t> perm = {0, 1, 2, 3, 4};
    SeededRng rng(seed);
    rng.shuffle(perm);

    static const std::vector<std::string> kLabels = {
        "Caption A", "Caption B", "Caption C", "Caption D", "Caption E"};
    std::vector<std::string> label_sources(5);
    std::string captions_text;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& caption = captions[perm[i]];
        label_sources[i] = caption.source;
        if (i > 0) captions_text += "\n\n";
        captions_text += kLabels[i] + ": " + caption.text;
    }

    ChatRequest request;
    request.endpoint = config.judge_endpoint;
    request.user_parts = {ImagePart{image_ref},
                          UserPart{prompts::render_rank(captions_text)}};
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatExchange exchange =
            gateway.chat_complete(request, ChatOptions{.bypass_cache = attempt > 0});
        try {
            return parse_rank_response(exchange.response_text, image_ref, kLabels,
                                       label_sources);
        } catch (const MissingAssessment&) {
            throw;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    throw SchemaViolation("rank judge response unusable after retry: " + last_error);
}

RankDistribution rank_distribution(const std::vector<RankRecord>& records) {
    if (records.empty()) throw InconsistentSources("nothing to aggregate");

    std::map<std::string, std::array<int, 5>> counts;
    std::map<std::string, RankDistribution::SubMetricMeans> sums;
    std::vector<std::string> expected_sources;
    for (const auto& e : records.front().entries) expected_sources.push_back(e.source);
    std::sort(expected_sources.begin(), expected_sources.end());

    for (const auto& record : records) {
        std::vector<std::string> sources;
        std::map<std::string, const RankEntry*> by_label;
        for (const auto& e : record.entries) {
            sources.push_back(e.source);
            by_label[e.label] = &e;
        }
        std::sort(sources.begin(), sources.end());
        if (sources != expected_sources) {
            throw InconsistentSources("records do not share the same source tags");
        }
        for (std::size_t pos = 0; pos < record.ranking.size(); ++pos) {
            const RankEntry* entry = by_label.at(record.ranking[pos]);
            counts[entry->source][pos] += 1;
            auto& s = sums[entry->source];
            s.accuracy += entry->accuracy;
            s.completeness += entry->completeness;
            s.clarity += entry->clarity;
            s.hallucination_penalty += entry->hallucination_penalty;
        }
    }

    RankDistribution dist;
    const double n = static_cast<double>(records.size());
    for (const auto& [source, c] : counts) {
        std::array<double, 5> hist{};
        for (std::size_t i = 0; i < 5; ++i) hist[i] = c[i] / n;
        dist.histograms[source] = hist;
        auto s = sums[source];
        dist.sub_metrics[source] = {s.accuracy / n, s.completeness / n, s.clarity / n,
                                    s.hallucination_penalty / n};
    }
    return dist;
}

}  // namespace rubric
