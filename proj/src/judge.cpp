#include "rubric/judge.hpp"

#include <algorithm>
#include <cctype>
#include <future>

#include "rubric/errors.hpp"
#include "rubric/prompts.hpp"
#include "rubric/util.hpp"

namespace rubric {

std::string build_judge_prompt(const RubricItem& item, const std::string& caption) {
    return prompts::render_judge(item.criterion, item.description, item.evaluation_rule,
                                 caption);
}

JudgeVerdict parse_verdict(const std::string& response_text, int criterion_index) {
    nlohmann::json j = extract_json(response_text);
    if (!j.contains("score")) throw SchemaViolation("verdict JSON has no 'score'");
    const auto& score = j["score"];
    int value = -1;
    if (score.is_number_integer()) {
        value = score.get<int>();
    } else if (score.is_number_float()) {
        const double d = score.get<double>();
        if (d == 0.0 || d == 1.0) value = static_cast<int>(d);
    } else if (score.is_string()) {
        const std::string s = score.get<std::string>();
        if (s == "0") value = 0;
        else if (s == "1") value = 1;
    }
    if (value != 0 && value != 1) {
        throw SchemaViolation("score must be exactly 0 or 1; got " + score.dump());
    }
    JudgeVerdict verdict;
    verdict.criterion_index = criterion_index;
    verdict.score = value;
    verdict.reasoning = j.value("reasoning", std::string{});
    return verdict;
}

namespace {

JudgeVerdict judge_one(Gateway& gateway, const std::string& caption,
                       const RubricItem& item, int index, const JudgeConfig& config) {
    ChatRequest request;
    request.endpoint = config.judge_endpoint;
    request.user_parts = {UserPart{build_judge_prompt(item, caption)}};
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatExchange exchange =
            gateway.chat_complete(request, ChatOptions{.bypass_cache = attempt > 0});
        try {
            JudgeVerdict verdict = parse_verdict(exchange.response_text, index);
            verdict.exchange_digest = gateway.digest(request);
            return verdict;
        } catch (const Error&) {
            // fall through to retry, then to the pessimistic default
        }
    }
    JudgeVerdict verdict;
    verdict.criterion_index = index;
    verdict.score = 0;
    verdict.reasoning = "judge-parse-failure";
    verdict.exchange_digest = gateway.digest(request);
    return verdict;
}

}  // namespace

std::vector<JudgeVerdict> judge_caption(Gateway& gateway, const std::string& caption,
                                        const RubricSet& rubric_set,
                                        const JudgeConfig& config) {
    if (rubric_set.items.empty()) {
        throw SchemaViolation("judge_caption requires a non-empty rubric set");
    }
    std::vector<std::future<JudgeVerdict>> futures;
    for (std::size_t i = 0; i < rubric_set.items.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] {
            return judge_one(gateway, caption, rubric_set.items[i],
                             static_cast<int>(i), config);
        }));
    }
    std::vector<JudgeVerdict> verdicts;
    verdicts.reserve(futures.size());
    for (auto& f : futures) verdicts.push_back(f.get());
    return verdicts;
}

RewardResult aggregate_reward(const std::vector<JudgeVerdict>& verdicts,
                              const RubricSet& rubric_set) {
    if (verdicts.size() != rubric_set.items.size()) {
        throw AlignmentMismatch("verdict count " + std::to_string(verdicts.size()) +
                                " does not match rubric item count " +
                                std::to_string(rubric_set.items.size()));
    }
    RewardResult result;
    result.verdicts = verdicts;
    for (std::size_t m = 0; m < verdicts.size(); ++m) {
        const double w = rubric_set.items[m].weight;
        result.total_weight += w;
        if (verdicts[m].score == 1) result.satisfied_weight += w;
    }
    if (result.total_weight <= 0) {
        throw ZeroTotalWeight("rubric set has zero total weight");
    }
    result.reward = result.satisfied_weight / result.total_weight;
    return result;
}

std::vector<std::string> rouge_tokenize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        } else {
            cleaned.push_back(' ');
        }
    }
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && cleaned[i] == ' ') ++i;
        std::size_t start = i;
        while (i < cleaned.size() && cleaned[i] != ' ') ++i;
        if (i > start) tokens.push_back(cleaned.substr(start, i - start));
    }
    return tokens;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_reward(const std::string& candidate, const std::string& reference) {
    const auto cand = rouge_tokenize(candidate);
    const auto ref = rouge_tokenize(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(cand, ref));
    const double precision = lcs / static_cast<double>(cand.size());
    const double recall = lcs / static_cast<double>(ref.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::optional<int> parse_likert_score(const std::string& text) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            std::size_t start = i;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
                ++i;
            }
            const std::string digits = text.substr(start, i - start);
            if (digits.size() <= 2) {
                const int value = std::stoi(digits);
                if (value >= 0 && value <= 10) return value;
            }
        } else {
            ++i;
        }
    }
    return std::nullopt;
}

double likert_reward(Gateway& gateway, const std::string& caption,
                     const JudgeConfig& config, LikertMode mode,
                     const std::optional<std::string>& reference_caption,
                     const std::string& image_ref) {
    std::string prompt;
    if (mode == LikertMode::Reference) {
        if (!reference_caption) {
            throw MissingReference("reference-likert requires a reference caption");
        }
        prompt = prompts::render_likert_reference(*reference_caption, caption);
    } else {
        prompt = prompts::render_likert_direct(caption);
    }

    ChatRequest request;
    request.endpoint = config.judge_endpoint;
    request.user_parts = {ImagePart{image_ref}, UserPart{prompt}};
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatExchange exchange =
            gateway.chat_complete(request, ChatOptions{.bypass_cache = attempt > 0});
        if (auto score = parse_likert_score(exchange.response_text)) {
            return static_cast<double>(*score) / 10.0;
        }
    }
    throw ScoreUnparseable("no integer 0-10 in Likert judge response after retry");
}

}  // namespace rubric
