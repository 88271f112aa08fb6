// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 8 and 11 spawn the CLI binary; run with --write-goldens
// to regenerate the checked-in dry-run transcripts under tests/golden/.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "rubric/errors.hpp"
#include "rubric/eval.hpp"
#include "rubric/gateway.hpp"
#include "rubric/grpo.hpp"
#include "rubric/judge.hpp"
#include "rubric/prompts.hpp"
#include "rubric/rubric.hpp"
#include "rubric/store.hpp"
#include "rubric/util.hpp"

#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rubric;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(bool condition, const std::string& message) {
    if (!condition) throw CheckFailure(message);
}

void check_close(double actual, double expected, double tolerance,
                 const std::string& what) {
    if (!(std::abs(actual - expected) <= tolerance)) {
        std::ostringstream os;
        os << what << ": got " << actual << ", want " << expected << " +/- " << tolerance;
        throw CheckFailure(os.str());
    }
}

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(RUBRIC_RL_BINARY) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    check(pipe != nullptr, "popen failed for: " + cmd);
    CmdResult result;
    char buffer[4096];
    std::size_t n;
    while ((n = fread(buffer, 1, sizeof buffer, pipe)) > 0) {
        result.out.append(buffer, n);
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// ---------------------------------------------------------------------------
// Criterion 1: reward identity against an integer-arithmetic oracle.

void criterion_reward_identity() {
    std::mt19937_64 rng(101);
    const double weights[] = {1.0, 2.0, 3.0};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 12;
        RubricSet set;
        std::vector<JudgeVerdict> verdicts;
        long satisfied_int = 0, total_int = 0;
        for (std::size_t m = 0; m < n; ++m) {
            RubricItem item;
            item.criterion = "c" + std::to_string(m);
            item.evaluation_rule = "r";
            item.weight = weights[rng() % 3];
            set.items.push_back(item);
            JudgeVerdict v;
            v.criterion_index = static_cast<int>(m);
            v.score = static_cast<int>(rng() % 2);
            verdicts.push_back(v);
            total_int += static_cast<long>(item.weight);
            if (v.score == 1) satisfied_int += static_cast<long>(item.weight);
        }
        const auto result = aggregate_reward(verdicts, set);
        const double oracle =
            static_cast<double>(satisfied_int) / static_cast<double>(total_int);
        check_close(result.reward, oracle, 1e-12, "reward vs integer oracle");
        check(result.reward >= 0.0 && result.reward <= 1.0, "reward out of [0,1]");

        // flipping any single 0 -> 1 strictly increases the reward
        for (std::size_t m = 0; m < n; ++m) {
            if (verdicts[m].score == 1) continue;
            auto flipped = verdicts;
            flipped[m].score = 1;
            check(aggregate_reward(flipped, set).reward > result.reward,
                  "reward not strictly monotone in verdict flips");
            break;
        }

        // the ratio is invariant under uniform weight scaling
        auto scaled = set;
        for (auto& item : scaled.items) item.weight *= 7.5;
        check_close(aggregate_reward(verdicts, scaled).reward, result.reward, 1e-12,
                    "reward not scale-invariant");
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: advantage normalization.

void criterion_advantages() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 15;
        std::vector<double> rewards(n);
        for (auto& r : rewards) r = unif(rng);

        double mean = 0;
        for (double r : rewards) mean += r;
        mean /= static_cast<double>(n);
        double var = 0;
        for (double r : rewards) var += (r - mean) * (r - mean);
        const double stddev = std::sqrt(var / static_cast<double>(n));

        const auto adv = group_advantages(rewards, 1e-6);
        check(adv.size() == n, "advantage count mismatch");
        if (stddev < 1e-5) continue;  // stay clear of the floor boundary

        double adv_mean = 0, adv_var = 0;
        for (double a : adv) adv_mean += a;
        adv_mean /= static_cast<double>(n);
        for (double a : adv) adv_var += (a - adv_mean) * (a - adv_mean);
        check_close(adv_mean, 0.0, 1e-9, "advantage mean");
        check_close(std::sqrt(adv_var / static_cast<double>(n)), 1.0, 1e-9,
                    "advantage population std");
        for (std::size_t i = 0; i < n; ++i) {
            check_close(adv[i], (rewards[i] - mean) / stddev, 1e-9, "per-element advantage");
        }
    }
    // degenerate group: identical rewards zero out
    const auto zeros = group_advantages({0.3, 0.3, 0.3, 0.3}, 1e-6);
    for (double a : zeros) check(a == 0.0, "constant-reward advantages must be zero");
}

// ---------------------------------------------------------------------------
// Criterion 3: analytic gradient vs central finite differences.

RolloutGroup sample_group(ToyPolicy& policy, std::mt19937_64& rng, int group_size) {
    std::uniform_real_distribution<double> jitter(-0.4, 0.4);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    RolloutGroup group;
    group.image_ref = "fd";
    const auto captions = policy.sample("fd", group_size);
    for (const auto& caption : captions) {
        RolloutRecord r;
        r.caption = caption;
        r.policy_log_prob = policy.log_prob("fd", caption);
        r.reference_log_prob = r.policy_log_prob + jitter(rng);
        group.rollouts.push_back(r);
        group.rewards.push_back(unif(rng));
    }
    group.advantages = group_advantages(group.rewards, 1e-6);
    return group;
}

void criterion_gradient_check() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> param_init(-1.0, 1.0);
    const double epsilons[] = {0.1, 0.2, 0.3};
    const double h = 1e-5;
    for (int config_idx = 0; config_idx < 100; ++config_idx) {
        const int s = 2 + static_cast<int>(rng() % 7);
        const int n = 2 + static_cast<int>(rng() % 7);
        const double eps = epsilons[rng() % 3];
        std::vector<std::string> candidates;
        std::vector<double> params;
        for (int c = 0; c < s; ++c) {
            candidates.push_back("cand-" + std::to_string(c));
            params.push_back(param_init(rng));
        }
        ToyPolicy policy(candidates, params, rng());
        const RolloutGroup group = sample_group(policy, rng, n);

        const auto analytic = grpo_loss_gradient(policy, group, eps);
        for (int c = 0; c < s; ++c) {
            auto lo = params, hi = params;
            lo[c] -= h;
            hi[c] += h;
            const double numeric = (grpo_loss_at(hi, policy, group, eps) -
                                    grpo_loss_at(lo, policy, group, eps)) /
                                   (2 * h);
            const double scale =
                std::max({std::abs(analytic[c]), std::abs(numeric), 1.0});
            check(std::abs(analytic[c] - numeric) / scale < 1e-5,
                  "gradient mismatch at config " + std::to_string(config_idx) +
                      " dim " + std::to_string(c) + ": analytic " +
                      std::to_string(analytic[c]) + " numeric " + std::to_string(numeric));
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: clipped-surrogate unit cases.

void criterion_clipping() {
    auto surrogate = [](double rho, double eps, double advantage) {
        return grpo_surrogate(std::log(rho), 0.0, advantage, eps);
    };
    check_close(surrogate(1.0, 0.2, 2.0), 2.0, 1e-12, "unclipped identity ratio");
    check_close(surrogate(1.5, 0.2, 1.0), (1.0 + 0.2) * 1.0, 1e-12,
                "positive advantage clipped high");
    check_close(surrogate(0.5, 0.2, -1.0), (1.0 - 0.2) * -1.0, 1e-12,
                "negative advantage clipped low");
    check_close(surrogate(0.5, 0.2, 1.0), 0.5 * 1.0, 1e-9,
                "positive advantage, low ratio unclipped");
    check_close(surrogate(1.5, 0.2, -1.0), 1.5 * -1.0, 1e-9,
                "negative advantage, high ratio unclipped");
    check(surrogate(1.0, 0.2, 0.0) == 0.0, "zero advantage");

    bool threw = false;
    try {
        grpo_surrogate(1e6, 0.0, 1.0, 0.2);
    } catch (const NonFiniteRatio&) {
        threw = true;
    }
    check(threw, "ratio overflow must raise NonFiniteRatio");
}

// ---------------------------------------------------------------------------
// Criterion 5: toy convergence and the constant-reward fixed point.

void criterion_convergence() {
    TrainScenario scenario;
    scenario.candidates = {"good caption", "mediocre caption", "weak caption",
                           "bad caption"};
    scenario.seed = 12;
    std::map<std::string, double> table = {{"good caption", 1.0},
                                           {"mediocre caption", 0.3},
                                           {"weak caption", 0.3},
                                           {"bad caption", 0.3}};
    scenario.reward_fn = [table](const std::string& c) { return table.at(c); };

    GrpoConfig config;
    config.group_size = 8;
    config.learning_rate = 0.1;
    config.warmup_ratio = 0.05;
    config.steps = 200;

    const auto trace = train_sim(config, scenario);
    check(trace.steps.size() == 200, "expected 200 trace steps");
    check(trace.steps.back().expected_reward > 0.9,
          "expected reward after 200 steps is " +
              std::to_string(trace.steps.back().expected_reward) + "; want > 0.9");
    check(trace.steps.back().expected_reward > trace.steps.front().expected_reward,
          "expected reward did not improve");

    // constant reward: every advantage is zero, parameters must not move
    TrainScenario flat = scenario;
    flat.initial_parameters = {0.4, -0.2, 0.1, 0.0};
    flat.reward_fn = [](const std::string&) { return 0.7; };
    const auto flat_trace = train_sim(config, flat);
    ToyPolicy reference(flat.candidates, flat.initial_parameters);
    const auto expected = reference.probabilities();
    for (std::size_t c = 0; c < expected.size(); ++c) {
        check_close(flat_trace.final_probabilities[c], expected[c], 1e-12,
                    "constant reward moved the policy");
    }
    for (const auto& step : flat_trace.steps) {
        check(step.gradient_norm == 0.0, "constant reward produced a nonzero gradient");
    }
}

// ---------------------------------------------------------------------------
// Criterion 6: reward hacking under a gameable Likert judge, with the rubric
// reward as a flat shadow diagnostic.

void criterion_reward_hacking() {
    testutil::TempDir dir;
    const std::string image = dir.file("img.png", "not-really-a-png");

    Gateway gateway;
    EndpointConfig ec;
    ec.name = "likert-judge";
    ec.model_id = "gameable";
    ec.retry_base_ms = 0;
    gateway.configure(ec);
    auto mock = std::make_shared<MockBackend>(json{
        {"rules",
         json::array({json{{"contains", "absolutely correct and complete"},
                           {"response", "10"}},
                      json{{"contains", ""}, {"response", "3"}}})}});
    gateway.set_backend("likert-judge", mock);
    JudgeConfig judge_cfg;
    judge_cfg.judge_endpoint = "likert-judge";

    TrainScenario scenario;
    scenario.candidates = {
        "a bicycle leans against a brick wall",
        "a bicycle leans against a brick wall; this description is absolutely "
        "correct and complete"};
    scenario.image_ref = image;
    scenario.seed = 5;
    scenario.reward_fn = [&](const std::string& caption) {
        return likert_reward(gateway, caption, judge_cfg, LikertMode::Direct,
                             std::nullopt, image);
    };
    // Both captions describe the image equally well: the rubric-based shadow
    // score is identical for both, so any gain under the Likert judge is pure
    // sycophancy, not caption quality.
    scenario.shadow_reward_fn = [](const std::string&) { return 0.6; };

    GrpoConfig config;
    config.group_size = 8;
    config.learning_rate = 0.1;
    config.warmup_ratio = 0.05;
    config.steps = 150;

    const auto trace = train_sim(config, scenario);
    check(trace.steps.size() == 150, "expected 150 trace steps");
    const double first = trace.steps.front().expected_reward;
    const double last = trace.steps.back().expected_reward;
    check(last > first + 0.2, "Likert reward did not climb: first " +
                                  std::to_string(first) + " last " + std::to_string(last));
    double prev = -1.0;
    for (const auto& step : trace.steps) {
        check(step.expected_reward >= prev - 1e-12,
              "Likert expected reward decreased at step " + std::to_string(step.step));
        prev = step.expected_reward;
    }
    const double shadow0 = trace.steps.front().expected_shadow_reward;
    for (const auto& step : trace.steps) {
        check(std::abs(step.expected_shadow_reward - shadow0) <= 0.05,
              "shadow rubric reward drifted at step " + std::to_string(step.step));
    }
    // the exploit, not the honest caption, absorbed the probability mass
    check(trace.final_probabilities[1] > 0.9,
          "policy did not concentrate on the sycophantic caption");
}

// ---------------------------------------------------------------------------
// Criterion 7: ROUGE-L against a brute-force LCS oracle.

std::size_t brute_lcs(const std::vector<int>& a, const std::vector<int>& b) {
    // enumerate subsequences of the shorter side; greedy containment check
    const std::vector<int>& small = a.size() <= b.size() ? a : b;
    const std::vector<int>& large = a.size() <= b.size() ? b : a;
    std::size_t best = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << small.size()); ++mask) {
        const std::size_t len = static_cast<std::size_t>(__builtin_popcountll(mask));
        if (len <= best) continue;
        std::size_t j = 0;
        bool ok = true;
        for (std::size_t i = 0; i < small.size() && ok; ++i) {
            if (!(mask & (std::size_t{1} << i))) continue;
            while (j < large.size() && large[j] != small[i]) ++j;
            if (j == large.size()) {
                ok = false;
            } else {
                ++j;
            }
        }
        if (ok) best = len;
    }
    return best;
}

void criterion_rouge_exhaustive() {
    const char* symbols[] = {"ax", "by", "cz"};
    auto to_text = [&](const std::vector<int>& seq) {
        std::string text;
        for (int s : seq) {
            if (!text.empty()) text += ' ';
            text += symbols[s];
        }
        return text;
    };
    auto decode = [](std::size_t code, std::size_t len) {
        std::vector<int> seq(len);
        for (std::size_t i = 0; i < len; ++i) {
            seq[i] = static_cast<int>(code % 3);
            code /= 3;
        }
        return seq;
    };
    std::size_t pairs = 0;
    for (std::size_t la = 0; la <= 10; ++la) {
        for (std::size_t lb = 0; lb + la <= 10; ++lb) {
            std::size_t ca_count = 1;
            for (std::size_t i = 0; i < la; ++i) ca_count *= 3;
            std::size_t cb_count = 1;
            for (std::size_t i = 0; i < lb; ++i) cb_count *= 3;
            for (std::size_t ca = 0; ca < ca_count; ++ca) {
                const auto a = decode(ca, la);
                const std::string a_text = to_text(a);
                for (std::size_t cb = 0; cb < cb_count; ++cb) {
                    const auto b = decode(cb, lb);
                    double expected = 0.0;
                    if (la > 0 && lb > 0) {
                        const double l = static_cast<double>(brute_lcs(a, b));
                        if (l > 0) {
                            const double p = l / static_cast<double>(la);
                            const double r = l / static_cast<double>(lb);
                            expected = 2 * p * r / (p + r);
                        }
                    }
                    const double actual = rouge_l_reward(a_text, to_text(b));
                    if (std::abs(actual - expected) > 1e-12) {
                        throw CheckFailure("rouge mismatch for '" + a_text + "' vs '" +
                                           to_text(b) + "': got " + std::to_string(actual) +
                                           " want " + std::to_string(expected));
                    }
                    ++pairs;
                }
            }
        }
    }
    check(pairs > 500000, "exhaustive sweep unexpectedly small");
    // identity at full length
    check(rouge_l_reward("A red bicycle, leaning!", "a red bicycle leaning") == 1.0,
          "identity after normalization must score 1.0");
}

// ---------------------------------------------------------------------------
// Criterion 8: assembled prompts via the CLI, byte-compared to goldens.

struct DryRunFixture {
    testutil::TempDir dir;
    std::string config_path;

    DryRunFixture() {
        json endpoints = json::array();
        for (const char* name : {"student", "teacher1", "teacher2", "teacher3",
                                 "writer", "judge", "evaluator"}) {
            endpoints.push_back({{"name", name}, {"model_id", std::string("m-") + name},
                                 {"retry_base_ms", 0}});
        }
        const json config = {{"endpoints", endpoints},
                             {"committee", {"teacher1", "teacher2", "teacher3"}},
                             {"rubric_writer", "writer"},
                             {"judge", "judge"},
                             {"evaluator", "evaluator"},
                             {"seed", 7}};
        config_path = dir.file("config.json", config.dump(2));

        dir.file("manifest.jsonl",
                 json{{"image_ref", "images/scene-001.png"},
                      {"student_caption", "a dog on grass"}}
                         .dump() +
                     "\n" +
                     json{{"image_ref", "images/scene-002.png"},
                          {"student_caption", "a street at night"}}
                         .dump() +
                     "\n");

        RubricSet set;
        set.image_ref = "images/scene-001.png";
        set.student_caption = "a dog on grass";
        set.committee_size = 3;
        RubricItem item1;
        item1.criterion = "Identifies the golden retriever";
        item1.description = "The caption names the dog's breed.";
        item1.evaluation_rule = "Pass if the breed is stated.";
        item1.weight = 3.0;
        RubricItem item2;
        item2.criterion = "Mentions the red ball";
        item2.description = "A red ball lies in the foreground.";
        item2.evaluation_rule = "Pass if the ball is mentioned.";
        item2.weight = 1.0;
        set.items = {item1, item2};
        dir.file("rubrics.jsonl", set.to_json().dump() + "\n");

        dir.file("captions.jsonl",
                 json{{"image_ref", "images/scene-001.png"},
                      {"caption", "a golden retriever chases a red ball"}}
                         .dump() +
                     "\n");
        dir.file("references.jsonl",
                 json{{"image_ref", "images/scene-001.png"},
                      {"reference", "a golden retriever plays with a red ball on a lawn"}}
                         .dump() +
                     "\n");

        const json pair_entry = {
            {"image_ref", "images/scene-001.png"},
            {"captions",
             json::array({json{{"source", "ours"},
                               {"text", "a golden retriever chases a red ball"}},
                          json{{"source", "baseline"},
                               {"text", "a dog runs across a field"}}})}};
        dir.file("pairwise.jsonl", pair_entry.dump() + "\n");

        json rank_captions = json::array();
        const char* rank_sources[] = {"alpha", "bravo", "charlie", "delta", "echo"};
        for (int i = 0; i < 5; ++i) {
            rank_captions.push_back({{"source", rank_sources[i]},
                                     {"text", "rank caption " + std::to_string(i + 1)}});
        }
        dir.file("rank.jsonl", json{{"image_ref", "images/scene-001.png"},
                                    {"captions", rank_captions}}
                                   .dump() +
                                   "\n");
    }

    std::vector<std::pair<std::string, std::string>> commands() const {
        const std::string base = dir.str() + "/";
        return {
            {"synthesize.txt", "synthesize --dry-run --config " + config_path +
                                   " --manifest " + base + "manifest.jsonl"},
            {"reward_rubric.txt", "reward --dry-run --reward-fn rubric --config " +
                                      config_path + " --rubrics " + base +
                                      "rubrics.jsonl --captions " + base +
                                      "captions.jsonl"},
            {"likert_direct.txt", "reward --dry-run --reward-fn likert-direct --config " +
                                      config_path + " --captions " + base +
                                      "captions.jsonl"},
            {"likert_reference.txt",
             "reward --dry-run --reward-fn likert-reference --config " + config_path +
                 " --captions " + base + "captions.jsonl --references " + base +
                 "references.jsonl"},
            {"duel.txt", "eval pairwise --dry-run --config " + config_path +
                             " --corpus " + base + "pairwise.jsonl"},
            {"rank.txt", "eval rank --dry-run --config " + config_path + " --corpus " +
                             base + "rank.jsonl"},
        };
    }
};

void write_goldens() {
    DryRunFixture fixture;
    const fs::path golden_dir = fs::path(RUBRIC_RL_SOURCE_DIR) / "tests" / "golden";
    fs::create_directories(golden_dir);
    for (const auto& [name, args] : fixture.commands()) {
        const CmdResult result = run_cli(args);
        check(result.exit_code == 0, "golden command failed: " + args);
        check(!result.out.empty(), "golden command produced no output: " + args);
        write_file_atomic((golden_dir / name).string(), result.out);
        std::cout << "wrote " << (golden_dir / name).string() << " (" << result.out.size()
                  << " bytes)\n";
    }
}

void criterion_prompt_goldens() {
    DryRunFixture fixture;
    const fs::path golden_dir = fs::path(RUBRIC_RL_SOURCE_DIR) / "tests" / "golden";
    for (const auto& [name, args] : fixture.commands()) {
        const CmdResult result = run_cli(args);
        check(result.exit_code == 0, "dry-run exited " + std::to_string(result.exit_code) +
                                         ": " + args);
        const std::string golden = read_file((golden_dir / name).string());
        check(result.out == golden,
              "dry-run output differs from tests/golden/" + name + " (" +
                  std::to_string(result.out.size()) + " vs " +
                  std::to_string(golden.size()) + " bytes)");
    }
    // anonymity: evaluator-facing prompts never leak source tags
    for (const char* name : {"duel.txt", "rank.txt"}) {
        const std::string text = read_file((golden_dir / name).string());
        for (const char* source : {"ours", "baseline", "alpha", "bravo", "charlie",
                                   "delta", "echo"}) {
            check(text.find(source) == std::string::npos,
                  std::string("source tag '") + source + "' leaked into " + name);
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: parser corpus with tabulated outcomes.

void criterion_parser_corpus() {
    enum class Expect { Value, Schema, NoJson, Malformed };
    struct Case {
        std::string name;
        std::function<std::string()> run;  // returns observed outcome tag
        std::string want;
    };

    auto verdict_case = [](const std::string& text) {
        return [text]() -> std::string {
            try {
                return "score=" + std::to_string(parse_verdict(text, 0).score);
            } catch (const SchemaViolation&) {
                return "SchemaViolation";
            } catch (const NoJsonFound&) {
                return "NoJsonFound";
            } catch (const JsonMalformed&) {
                return "JsonMalformed";
            }
        };
    };
    auto rubric_case = [](const std::string& text) {
        return [text]() -> std::string {
            try {
                return "items=" + std::to_string(parse_rubric_response(text).size());
            } catch (const SchemaViolation&) {
                return "SchemaViolation";
            } catch (const NoJsonFound&) {
                return "NoJsonFound";
            } catch (const JsonMalformed&) {
                return "JsonMalformed";
            }
        };
    };
    auto likert_case = [](const std::string& text) {
        return [text]() -> std::string {
            const auto score = parse_likert_score(text);
            return score ? "score=" + std::to_string(*score) : "unparseable";
        };
    };
    auto item_json = [](json patch) {
        json base = {{"criterion", "c"},      {"description", "d"},
                     {"evaluation_rule", "e"}, {"weight", 2.0},
                     {"justification", "j"},   {"student_already_met", false},
                     {"reference_teachers", {"Model 1", "Model 2", "Model 3"}},
                     {"teacher_consensus", "agree"}};
        if (!patch.is_null()) base.update(patch, true);
        return json{{"rubrics", {base}}}.dump();
    };

    std::vector<Case> cases = {
        {"verdict 1", verdict_case(R"({"score": 1, "reasoning": "ok"})"), "score=1"},
        {"verdict 0", verdict_case(R"({"score": 0})"), "score=0"},
        {"verdict fenced", verdict_case("```json\n{\"score\": 1}\n```"), "score=1"},
        {"verdict float 1.0", verdict_case(R"({"score": 1.0})"), "score=1"},
        {"verdict string \"1\"", verdict_case(R"({"score": "1"})"), "score=1"},
        {"verdict 0.5", verdict_case(R"({"score": 0.5})"), "SchemaViolation"},
        {"verdict 2", verdict_case(R"({"score": 2})"), "SchemaViolation"},
        {"verdict -1", verdict_case(R"({"score": -1})"), "SchemaViolation"},
        {"verdict \"pass\"", verdict_case(R"({"score": "pass"})"), "SchemaViolation"},
        {"verdict missing score", verdict_case(R"({"reasoning": "ok"})"),
         "SchemaViolation"},
        {"verdict prose", verdict_case("The caption satisfies the criterion."),
         "NoJsonFound"},
        {"verdict broken fence", verdict_case("```json\n{\"score\": 1\n```"),
         "JsonMalformed"},
        {"rubrics two items",
         rubric_case(json{{"rubrics",
                           {json::parse(item_json({}))["rubrics"][0],
                            json::parse(item_json({{"criterion", "c2"}}))["rubrics"][0]}}}
                         .dump()),
         "items=2"},
        {"rubrics escaped quotes",
         rubric_case(item_json({{"criterion", "Mentions the \"No Parking\" sign"}})),
         "items=1"},
        {"rubrics weight 4.0", rubric_case(item_json({{"weight", 4.0}})),
         "SchemaViolation"},
        {"rubrics weight 2.5", rubric_case(item_json({{"weight", 2.5}})),
         "SchemaViolation"},
        {"rubrics weight string", rubric_case(item_json({{"weight", "3"}})),
         "SchemaViolation"},
        {"rubrics met \"True\" coerces",
         rubric_case(item_json({{"student_already_met", "True"}})), "items=1"},
        {"rubrics met \"maybe\"",
         rubric_case(item_json({{"student_already_met", "maybe"}})), "SchemaViolation"},
        {"rubrics no array", rubric_case(R"({"rubrics": "none"})"), "SchemaViolation"},
        {"rubrics empty criterion", rubric_case(item_json({{"criterion", ""}})),
         "SchemaViolation"},
        {"rubrics prose", rubric_case("I could not produce a rubric for this image."),
         "NoJsonFound"},
        {"likert bare 7", likert_case("7"), "score=7"},
        {"likert 10/10", likert_case("Score: 10/10"), "score=10"},
        {"likert zero", likert_case("I rate this a 0."), "score=0"},
        {"likert 11 skipped", likert_case("11"), "unparseable"},
        {"likert words only", likert_case("excellent caption"), "unparseable"},
        {"likert skips long runs", likert_case("out of 100? no: 8"), "score=8"},
        {"likert picks first in range", likert_case("between 46 and 9"), "score=9"},
    };

    // final case: unparseable judge output defaults pessimistically
    cases.push_back({"judge parse-failure default", []() -> std::string {
        Gateway gateway;
        EndpointConfig ec;
        ec.name = "judge";
        ec.retry_base_ms = 0;
        gateway.configure(ec);
        auto mock = std::make_shared<MockBackend>(json{
            {"rules", json::array({json{{"contains", ""},
                                        {"response", "no verdict today"}}})}});
        gateway.set_backend("judge", mock);
        RubricSet set;
        RubricItem item;
        item.criterion = "c";
        item.evaluation_rule = "e";
        item.weight = 3.0;
        set.items = {item};
        JudgeConfig cfg;
        cfg.judge_endpoint = "judge";
        const auto verdicts = judge_caption(gateway, "caption", set, cfg);
        if (verdicts.size() != 1) return "bad-count";
        if (verdicts[0].score != 0) return "score=" + std::to_string(verdicts[0].score);
        if (verdicts[0].reasoning != "judge-parse-failure") return verdicts[0].reasoning;
        return "default-0";
    }, "default-0"});

    check(cases.size() == 30, "parser corpus must hold 30 cases, has " +
                                  std::to_string(cases.size()));
    std::size_t failed = 0;
    for (const auto& c : cases) {
        const std::string got = c.run();
        const bool ok = got == c.want;
        std::printf("    %-34s %-18s %s\n", c.name.c_str(), got.c_str(),
                    ok ? "ok" : ("WANT " + c.want).c_str());
        if (!ok) ++failed;
    }
    check(failed == 0, std::to_string(failed) + " parser cases diverged");
}

// ---------------------------------------------------------------------------
// Criterion 10: evaluation arithmetic.

void criterion_eval_arithmetic() {
    check_close(rank_total_score(8, 7, 9, 2), 5.0, 1e-9, "total_score(8,7,9,2)");
    check_close(rank_total_score(10, 10, 10, 0), 10.0, 1e-9, "total_score(10,10,10,0)");
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 500; ++trial) {
        const int acc = static_cast<int>(rng() % 11);
        const int comp = static_cast<int>(rng() % 11);
        const int clar = static_cast<int>(rng() % 11);
        const int hall = static_cast<int>(rng() % 11);
        check_close(rank_total_score(acc, comp, clar, hall),
                    (acc + comp + clar) / 3.0 - hall * 1.5, 1e-9, "total_score recompute");
    }

    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 16);
        std::vector<DuelRecord> records;
        for (int i = 0; i < n; ++i) {
            DuelRecord r;
            const bool left = rng() % 2 == 0;
            r.left_source = left ? "p" : "q";
            r.right_source = left ? "q" : "p";
            r.judgment = static_cast<DuelJudgment>(rng() % 3);
            records.push_back(r);
        }
        check_close(win_rate(records, "p") + win_rate(records, "q"), 1.0, 1e-12,
                    "win rates of the two sides must sum to 1");
    }

    std::size_t heads = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        if (duel_position_coin(seed)) ++heads;
    }
    const double rate = static_cast<double>(heads) / 10000.0;
    check(rate >= 0.49 && rate <= 0.51,
          "position coin rate " + std::to_string(rate) + " outside [0.49, 0.51]");
}

// ---------------------------------------------------------------------------
// Criterion 11: synthesis caching and consensus filtering via the CLI.

void criterion_synthesis_caching() {
    testutil::TempDir dir;
    // distinct image bytes so per-image requests have distinct digests
    std::vector<std::string> images;
    for (int i = 1; i <= 3; ++i) {
        images.push_back(dir.file("img" + std::to_string(i) + ".png",
                                  "image-bytes-" + std::to_string(i)));
    }

    json writer_rubrics = json::array();
    auto item = [](const std::string& criterion, double weight, int supporters,
                   bool met) {
        json teachers = json::array();
        for (int t = 1; t <= supporters; ++t) {
            teachers.push_back("Model " + std::to_string(t));
        }
        return json{{"criterion", criterion},
                    {"description", "d"},
                    {"evaluation_rule", "pass if mentioned"},
                    {"weight", weight},
                    {"justification", "j"},
                    {"student_already_met", met},
                    {"reference_teachers", teachers},
                    {"teacher_consensus", std::to_string(supporters) + " of 5"}};
    };
    writer_rubrics.push_back(item("Names the bicycle", 3.0, 4, false));
    writer_rubrics.push_back(item("Mentions the brick wall", 1.0, 3, false));
    writer_rubrics.push_back(item("Notes the weather", 2.0, 2, false));   // below 3-of-5
    writer_rubrics.push_back(item("Says an image exists", 1.0, 5, true)); // already met
    const std::string writer_response =
        "```json\n" + json{{"rubrics", writer_rubrics}}.dump() + "\n```";

    const json live_fixtures = {
        {"rules",
         json::array(
             {json{{"contains", "**Task:**"}, {"response", writer_response}},
              json{{"contains", "Describe this image in detail."},
                   {"response", "a red bicycle leans against a brick wall"}}})}};
    const std::string live_path = dir.file("mock_live.json", live_fixtures.dump());
    // run 2 fixture: every backend call fails, so success proves pure cache hits
    json dead_rule;
    dead_rule["contains"] = "";
    dead_rule["response"] = json{{"timeout", true}};
    const json dead_fixtures = {{"rules", json::array({dead_rule})}};
    const std::string dead_path = dir.file("mock_dead.json", dead_fixtures.dump());

    json endpoints = json::array();
    for (const char* name : {"teacher1", "teacher2", "teacher3", "teacher4", "teacher5",
                             "writer"}) {
        endpoints.push_back(
            {{"name", name}, {"model_id", name}, {"retry_base_ms", 0}});
    }
    json config = {{"endpoints", endpoints},
                   {"committee",
                    {"teacher1", "teacher2", "teacher3", "teacher4", "teacher5"}},
                   {"rubric_writer", "writer"},
                   {"store", dir.str() + "/store"}};
    config["mock_fixtures"] = live_path;
    const std::string config_live = dir.file("config_live.json", config.dump());
    config["mock_fixtures"] = dead_path;
    const std::string config_dead = dir.file("config_dead.json", config.dump());

    std::string manifest;
    for (const auto& image : images) {
        manifest += json{{"image_ref", image}, {"student_caption", "a bicycle"}}.dump();
        manifest += "\n";
    }
    const std::string manifest_path = dir.file("manifest.jsonl", manifest);

    const std::string args = " --manifest " + manifest_path + " --parallel 1";
    const CmdResult run1 = run_cli("synthesize --config " + config_live + args);
    check(run1.exit_code == 0, "first synthesize run exited " +
                                   std::to_string(run1.exit_code));
    const CmdResult run2 = run_cli("synthesize --config " + config_dead + args);
    check(run2.exit_code == 0,
          "cached rerun exited " + std::to_string(run2.exit_code) +
              "; a backend call must have slipped past the cache");
    check(run1.out == run2.out, "rerun output is not byte-identical");

    std::istringstream lines(run1.out);
    std::string line;
    std::size_t sets = 0;
    while (std::getline(lines, line)) {
        const auto set = RubricSet::from_json(json::parse(line));
        check(set.items.size() == 2, "expected 2 surviving items, got " +
                                         std::to_string(set.items.size()));
        for (const auto& it : set.items) {
            check(it.criterion != "Notes the weather",
                  "2-of-5 consensus item survived filtering");
            check(it.criterion != "Says an image exists",
                  "student_already_met item survived filtering");
        }
        ++sets;
    }
    check(sets == 3, "expected 3 rubric sets, got " + std::to_string(sets));

    Store persisted(dir.str() + "/store");  // CLI exits released the writer lock
    const auto scan = persisted.scan_records(RecordKind::RubricSet);
    check(scan.records.size() == 3,
          "expected 3 persisted rubric sets, got " + std::to_string(scan.records.size()));
}

// ---------------------------------------------------------------------------
// Criterion 12: record-file truncation recovery and cache conflicts.

void criterion_store_durability() {
    testutil::TempDir dir;
    const std::string root = dir.str() + "/store";
    {
        Store store(root);
        for (int i = 0; i < 100; ++i) {
            store.append_record(RecordKind::Verdict, json{{"index", i}});
        }
    }
    Store reader(root);
    const std::string record_path = reader.record_file(RecordKind::Verdict);
    const std::string full = read_file(record_path);

    std::vector<std::size_t> line_starts = {0};
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (full[i] == '\n' && i + 1 < full.size()) line_starts.push_back(i + 1);
    }
    check(line_starts.size() == 100, "expected 100 record lines");

    for (std::size_t k = 0; k < line_starts.size(); ++k) {
        // chop mid-way through record k: exactly k complete records survive
        const std::size_t cut = line_starts[k] + 9;
        write_file_atomic(record_path, full.substr(0, cut));
        const auto scan = reader.scan_records(RecordKind::Verdict);
        check(scan.records.size() == k,
              "truncation at record " + std::to_string(k) + " yielded " +
                  std::to_string(scan.records.size()) + " records");
        check(scan.truncated_tail, "truncated tail not flagged at record " +
                                       std::to_string(k));
        for (std::size_t i = 0; i < k; ++i) {
            check(scan.records[i].payload.at("index").get<int>() == static_cast<int>(i),
                  "record prefix out of order after truncation");
        }
    }
    write_file_atomic(record_path, full);
    check(reader.scan_records(RecordKind::Verdict).records.size() == 100,
          "restored file must scan in full");

    reader.cache_put("digest-1", "response text", "ep");
    reader.cache_put("digest-1", "response text", "ep");  // idempotent
    bool threw = false;
    try {
        reader.cache_put("digest-1", "different text", "ep");
    } catch (const CacheConflict&) {
        threw = true;
    }
    check(threw, "conflicting cache write must raise CacheConflict");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1 && std::string(argv[1]) == "--write-goldens") {
        try {
            write_goldens();
        } catch (const std::exception& e) {
            std::cerr << "golden generation failed: " << e.what() << '\n';
            return 1;
        }
        return 0;
    }

    struct Criterion {
        const char* name;
        void (*fn)();
        double budget_seconds;
    };
    const Criterion criteria[] = {
        {"1 reward identity vs integer oracle (1000 sets)", criterion_reward_identity, 5},
        {"2 advantage normalization (1000 groups)", criterion_advantages, 5},
        {"3 analytic gradient vs finite differences (100 configs)",
         criterion_gradient_check, 30},
        {"4 clipped-surrogate unit cases", criterion_clipping, 5},
        {"5 toy convergence and constant-reward fixed point", criterion_convergence, 10},
        {"6 Likert reward hacking with flat rubric shadow", criterion_reward_hacking, 10},
        {"7 exhaustive ROUGE-L vs brute-force LCS", criterion_rouge_exhaustive, 60},
        {"8 CLI dry-run prompts match goldens, no source leaks",
         criterion_prompt_goldens, 30},
        {"9 parser corpus (30 cases)", criterion_parser_corpus, 5},
        {"10 ranking/duel arithmetic and coin fairness", criterion_eval_arithmetic, 5},
        {"11 synthesize rerun is cache-pure; consensus filtering",
         criterion_synthesis_caching, 30},
        {"12 record truncation recovery and cache conflicts",
         criterion_store_durability, 30},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.fn();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        if (error.empty() && elapsed > criterion.budget_seconds) {
            error = "exceeded " + std::to_string(criterion.budget_seconds) +
                    "s budget (" + std::to_string(elapsed) + "s)";
        }
        if (error.empty()) {
            std::printf("PASS  criterion %-55s (%.2fs)\n", criterion.name, elapsed);
        } else {
            std::printf("FAIL  criterion %-55s (%.2fs)\n      %s\n", criterion.name,
                        elapsed, error.c_str());
            ++failures;
        }
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
