// Operator CLI: rubric synthesis batches, reward computation, the desk-scale
// GRPO simulator, and the pairwise/ranking evaluation protocols.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rubric/errors.hpp"
#include "rubric/eval.hpp"
#include "rubric/gateway.hpp"
#include "rubric/grpo.hpp"
#include "rubric/judge.hpp"
#include "rubric/prompts.hpp"
#include "rubric/rubric.hpp"
#include "rubric/store.hpp"
#include "rubric/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 success (possibly with isolated per-item failures),
// 1 total failure, 2 usage/config error.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::vector<rubric::EndpointConfig> endpoints;
    std::string mock_fixtures;  // when set, every endpoint runs on this mock
    std::vector<std::string> committee;
    std::string rubric_writer, judge, evaluator, student;
    std::optional<int> consensus_threshold;  // nullopt = auto ceil(K/2)
    int max_items = 12;
    rubric::GrpoConfig grpo;
    std::string store_root;
    std::uint64_t seed = 0;
};

std::string resolve(const fs::path& base_dir, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (base_dir / path).string();
}

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(rubric::read_file(path));
    } catch (const std::exception& e) {
        throw UsageError("config '" + path + "' unreadable or invalid JSON: " + e.what());
    }
    const fs::path base_dir = fs::path(path).parent_path();

    RunConfig cfg;
    try {
        cfg.endpoints = rubric::load_endpoint_configs(j);
    } catch (const rubric::Error& e) {
        throw UsageError(e.what());
    }
    cfg.mock_fixtures = resolve(base_dir, j.value("mock_fixtures", std::string{}));
    if (j.contains("committee")) {
        for (const auto& name : j["committee"]) {
            cfg.committee.push_back(name.get<std::string>());
        }
    }
    cfg.rubric_writer = j.value("rubric_writer", std::string{});
    cfg.judge = j.value("judge", std::string{});
    cfg.evaluator = j.value("evaluator", std::string{});
    cfg.student = j.value("student", std::string{});
    if (j.contains("consensus_threshold") && j["consensus_threshold"] != "auto") {
        cfg.consensus_threshold = j["consensus_threshold"].get<int>();
    }
    cfg.max_items = j.value("max_items", 12);
    if (j.contains("grpo")) {
        const auto& g = j["grpo"];
        cfg.grpo.group_size = g.value("group_size", 4);
        cfg.grpo.clip_epsilon = g.value("clip_epsilon", 0.2);
        cfg.grpo.std_floor = g.value("std_floor", 1e-6);
        cfg.grpo.learning_rate = g.value("learning_rate", 1e-5);
        cfg.grpo.warmup_ratio = g.value("warmup_ratio", 0.01);
        cfg.grpo.max_completion_tokens = g.value("max_completion_tokens", 1024);
        cfg.grpo.steps = g.value("steps", 0);
    }
    cfg.store_root = resolve(base_dir, j.value("store", std::string{}));
    cfg.seed = j.value("seed", std::uint64_t{0});

    std::set<std::string> known;
    for (const auto& e : cfg.endpoints) known.insert(e.name);
    auto check = [&](const std::string& name, const char* role) {
        if (!name.empty() && !known.contains(name)) {
            throw UsageError(std::string(role) + " endpoint '" + name +
                             "' is not in the endpoints list");
        }
    };
    for (const auto& t : cfg.committee) check(t, "committee");
    check(cfg.rubric_writer, "rubric_writer");
    check(cfg.judge, "judge");
    check(cfg.evaluator, "evaluator");
    check(cfg.student, "student");
    return cfg;
}

struct Runtime {
    RunConfig cfg;
    std::unique_ptr<rubric::Store> store;
    rubric::Gateway gateway;

    static std::unique_ptr<rubric::Store> open_store(const RunConfig& cfg,
                                                     const std::string& override_root) {
        const std::string root = override_root.empty() ? cfg.store_root : override_root;
        if (root.empty()) return nullptr;
        return std::make_unique<rubric::Store>(root);
    }

    Runtime(RunConfig run_cfg, const std::string& store_override)
        : cfg(std::move(run_cfg)),
          store(open_store(cfg, store_override)),
          gateway(store.get()) {
        std::shared_ptr<rubric::MockBackend> mock;
        if (!cfg.mock_fixtures.empty()) {
            mock = rubric::MockBackend::from_file(cfg.mock_fixtures);
        }
        for (auto& e : cfg.endpoints) {
            gateway.configure(e);
            if (mock) gateway.set_backend(e.name, mock);
        }
    }
};

std::vector<json> read_jsonl(const std::string& path) {
    std::string text;
    try {
        text = rubric::read_file(path);
    } catch (const rubric::IoFailure& e) {
        throw UsageError(e.what());
    }
    std::vector<json> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw UsageError(path + ": bad JSONL line: " + e.what());
        }
    }
    return out;
}

void print_prompt(const std::string& name, const std::string& text) {
    std::cout << "=== prompt: " << name << " ===\n" << text;
    if (text.empty() || text.back() != '\n') std::cout << '\n';
}

// ---------------------------------------------------------------------------
// synthesize

int cmd_synthesize(Runtime& rt, const std::string& manifest_path, int parallel,
                   bool dry_run) {
    const auto entries = read_jsonl(manifest_path);
    rubric::SynthesisConfig synth;
    synth.committee = rt.cfg.committee;
    synth.rubric_writer = rt.cfg.rubric_writer;
    synth.consensus_threshold = rt.cfg.consensus_threshold;
    synth.max_items = rt.cfg.max_items;
    synth.caption_system_prompt = rubric::prompts::rollout_system_prompt();
    if (synth.committee.empty()) throw UsageError("config has an empty committee");
    if (synth.rubric_writer.empty()) throw UsageError("config names no rubric_writer");

    if (dry_run) {
        // Assembled prompts without model calls; teacher captions are
        // placeholders since they would come from committee calls.
        print_prompt("rollout.system", synth.caption_system_prompt);
        print_prompt("rollout.user", synth.caption_prompt);
        print_prompt("rubric_writer.system", rubric::prompts::rubric_writer_system());
        for (const auto& entry : entries) {
            std::vector<std::string> placeholders;
            for (std::size_t k = 1; k <= synth.committee.size(); ++k) {
                placeholders.push_back("<caption from Model " + std::to_string(k) + ">");
            }
            print_prompt(
                "rubric_writer.user image=" + entry.at("image_ref").get<std::string>(),
                rubric::prompts::render_rubric_writer_user(
                    entry.at("student_caption").get<std::string>(), placeholders));
        }
        return 0;
    }

    rubric::Synthesizer synthesizer(rt.gateway, rt.store.get(), synth);

    struct Outcome {
        bool ok = false;
        bool skipped = false;
        std::string image_ref;
        std::string error;
        rubric::RubricSet set;
        rubric::FilterReport filter;
    };
    std::vector<Outcome> outcomes(entries.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= entries.size()) return;
            Outcome& out = outcomes[i];
            try {
                out.image_ref = entries[i].at("image_ref").get<std::string>();
                std::string student;
                if (entries[i].contains("student_caption")) {
                    student = entries[i]["student_caption"].get<std::string>();
                } else if (!rt.cfg.student.empty()) {
                    rubric::ChatRequest request;
                    request.endpoint = rt.cfg.student;
                    request.system_prompt = synth.caption_system_prompt;
                    request.user_parts = {rubric::ImagePart{out.image_ref},
                                          rubric::UserPart{synth.caption_prompt}};
                    request.temperature = synth.teacher_temperature;
                    request.max_tokens = synth.max_tokens;
                    student = rt.gateway.chat_complete(request).response_text;
                } else {
                    throw UsageError("manifest entry has no student_caption and the "
                                     "config names no student endpoint");
                }
                out.set = synthesizer.synthesize(out.image_ref, student, &out.filter);
                out.ok = true;
            } catch (const rubric::SampleSkipped& e) {
                out.skipped = true;
                out.error = e.what();
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(1, parallel); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    json summary = {{"images", entries.size()},
                    {"succeeded", 0},
                    {"skipped", 0},
                    {"items_by_weight", {{"1", 0}, {"2", 0}, {"3", 0}}},
                    {"drops_by_reason",
                     {{"already_met", 0}, {"insufficient_consensus", 0}, {"over_cap", 0}}},
                    {"failures", json::array()}};
    for (const auto& out : outcomes) {
        if (out.ok) {
            summary["succeeded"] = summary["succeeded"].get<int>() + 1;
            std::cout << out.set.to_json().dump() << '\n';
            for (const auto& item : out.set.items) {
                auto& bucket =
                    summary["items_by_weight"][std::to_string(static_cast<int>(item.weight))];
                bucket = bucket.get<int>() + 1;
            }
            for (const auto& drop : out.filter.drops) {
                const char* key = drop.reason == rubric::DropReason::AlreadyMet
                                      ? "already_met"
                                      : drop.reason == rubric::DropReason::InsufficientConsensus
                                            ? "insufficient_consensus"
                                            : "over_cap";
                summary["drops_by_reason"][key] =
                    summary["drops_by_reason"][key].get<int>() + 1;
            }
        } else if (out.skipped) {
            summary["skipped"] = summary["skipped"].get<int>() + 1;
        } else {
            summary["failures"].push_back(
                {{"image_ref", out.image_ref}, {"error", out.error}});
        }
    }
    std::cerr << summary.dump() << '\n';
    const bool all_failed =
        !entries.empty() && summary["failures"].size() == entries.size();
    return all_failed ? 1 : 0;
}

// ---------------------------------------------------------------------------
// reward

int cmd_reward(Runtime& rt, const std::string& rubrics_path,
               const std::string& captions_path, const std::string& references_path,
               const std::string& reward_fn, bool dry_run) {
    std::map<std::string, rubric::RubricSet> rubrics;
    if (!rubrics_path.empty()) {
        for (const auto& line : read_jsonl(rubrics_path)) {
            auto set = rubric::RubricSet::from_json(line);
            rubrics[set.image_ref] = std::move(set);
        }
    }
    std::map<std::string, std::string> references;
    if (!references_path.empty()) {
        for (const auto& line : read_jsonl(references_path)) {
            references[line.at("image_ref").get<std::string>()] =
                line.at("reference").get<std::string>();
        }
    }
    const auto captions = read_jsonl(captions_path);

    rubric::JudgeConfig judge_cfg;
    judge_cfg.judge_endpoint = rt.cfg.judge;

    if (dry_run) {
        for (const auto& line : captions) {
            const std::string image_ref = line.at("image_ref").get<std::string>();
            const std::string caption = line.at("caption").get<std::string>();
            if (reward_fn == "rubric") {
                auto it = rubrics.find(image_ref);
                if (it == rubrics.end()) continue;
                for (const auto& item : it->second.items) {
                    print_prompt("judge criterion=" + item.criterion,
                                 rubric::build_judge_prompt(item, caption));
                }
            } else if (reward_fn == "likert-direct") {
                print_prompt("likert_direct image=" + image_ref,
                             rubric::prompts::render_likert_direct(caption));
            } else if (reward_fn == "likert-reference") {
                auto it = references.find(image_ref);
                if (it == references.end()) continue;
                print_prompt("likert_reference image=" + image_ref,
                             rubric::prompts::render_likert_reference(it->second, caption));
            }
        }
        return 0;
    }

    std::size_t failures = 0;
    for (const auto& line : captions) {
        const std::string image_ref = line.at("image_ref").get<std::string>();
        const int rollout_index = line.value("rollout_index", 0);
        const std::string caption = line.at("caption").get<std::string>();
        json out = {{"image_ref", image_ref}, {"rollout_index", rollout_index}};
        try {
            if (reward_fn == "rubric") {
                auto it = rubrics.find(image_ref);
                if (it == rubrics.end()) {
                    throw rubric::SchemaViolation("MissingRubricSet: no rubric set for '" +
                                                  image_ref + "'");
                }
                auto verdicts =
                    rubric::judge_caption(rt.gateway, caption, it->second, judge_cfg);
                auto result = rubric::aggregate_reward(verdicts, it->second);
                out["reward"] = result.reward;
                json vj = json::array();
                for (const auto& v : result.verdicts) {
                    vj.push_back({{"criterion_index", v.criterion_index},
                                  {"score", v.score},
                                  {"reasoning", v.reasoning}});
                }
                out["verdicts"] = vj;
                if (rt.store) {
                    rt.store->append_record(rubric::RecordKind::Verdict, out);
                }
            } else if (reward_fn == "rouge-l") {
                auto it = references.find(image_ref);
                if (it == references.end()) {
                    throw rubric::MissingReference("no reference caption for '" +
                                                   image_ref + "'");
                }
                out["reward"] = rubric::rouge_l_reward(caption, it->second);
            } else {
                const bool with_ref = reward_fn == "likert-reference";
                std::optional<std::string> reference;
                if (with_ref) {
                    auto it = references.find(image_ref);
                    if (it == references.end()) {
                        throw rubric::MissingReference("no reference caption for '" +
                                                       image_ref + "'");
                    }
                    reference = it->second;
                }
                out["reward"] = rubric::likert_reward(
                    rt.gateway, caption, judge_cfg,
                    with_ref ? rubric::LikertMode::Reference : rubric::LikertMode::Direct,
                    reference, image_ref);
            }
            std::cout << out.dump() << '\n';
        } catch (const std::exception& e) {
            ++failures;
            out["error"] = e.what();
            std::cout << out.dump() << '\n';
        }
    }
    return (!captions.empty() && failures == captions.size()) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// train-sim

int cmd_train_sim(Runtime& rt, const std::string& scenario_path,
                  const std::string& reward_fn, int steps_override) {
    json sj;
    try {
        sj = json::parse(rubric::read_file(scenario_path));
    } catch (const std::exception& e) {
        throw UsageError("scenario unreadable: " + std::string(e.what()));
    }
    rubric::TrainScenario scenario;
    for (const auto& c : sj.at("candidates")) {
        scenario.candidates.push_back(c.get<std::string>());
    }
    if (sj.contains("initial_parameters")) {
        for (const auto& p : sj["initial_parameters"]) {
            scenario.initial_parameters.push_back(p.get<double>());
        }
    }
    scenario.image_ref = sj.value("image_ref", std::string("scenario"));
    scenario.seed = sj.value("seed", rt.cfg.seed);

    rubric::JudgeConfig judge_cfg;
    judge_cfg.judge_endpoint = rt.cfg.judge;

    std::optional<rubric::RubricSet> rubric_set;
    if (sj.contains("rubric_set")) {
        rubric_set = rubric::RubricSet::from_json(sj["rubric_set"]);
    }
    std::map<std::string, double> table;
    if (sj.contains("rewards")) {
        for (const auto& [caption, r] : sj["rewards"].items()) {
            table[caption] = r.get<double>();
        }
    }

    auto rubric_fn = [&](const std::string& caption) -> double {
        if (auto it = table.find(caption); it != table.end()) return it->second;
        if (rubric_set) {
            auto verdicts =
                rubric::judge_caption(rt.gateway, caption, *rubric_set, judge_cfg);
            return rubric::aggregate_reward(verdicts, *rubric_set).reward;
        }
        throw UsageError("scenario provides neither a rewards table nor a rubric_set");
    };

    if (reward_fn == "rubric") {
        scenario.reward_fn = rubric_fn;
    } else if (reward_fn == "rouge-l") {
        const std::string reference = sj.at("reference").get<std::string>();
        scenario.reward_fn = [reference](const std::string& caption) {
            return rubric::rouge_l_reward(caption, reference);
        };
        if (rubric_set || !table.empty()) scenario.shadow_reward_fn = rubric_fn;
    } else {
        const bool with_ref = reward_fn == "likert-reference";
        std::optional<std::string> reference;
        if (with_ref) reference = sj.at("reference").get<std::string>();
        scenario.reward_fn = [&rt, judge_cfg, with_ref, reference,
                              image = scenario.image_ref](const std::string& caption) {
            return rubric::likert_reward(
                rt.gateway, caption, judge_cfg,
                with_ref ? rubric::LikertMode::Reference : rubric::LikertMode::Direct,
                reference, image);
        };
        if (rubric_set || !table.empty()) scenario.shadow_reward_fn = rubric_fn;
    }

    rubric::GrpoConfig grpo = rt.cfg.grpo;
    if (steps_override >= 0) grpo.steps = steps_override;

    const auto trace = rubric::train_sim(grpo, scenario);
    for (const auto& step : trace.steps) {
        const json line = step.to_json();
        std::cout << line.dump() << '\n';
        if (rt.store) rt.store->append_record(rubric::RecordKind::Trace, line);
    }
    json final_dist = json::object();
    for (std::size_t c = 0; c < trace.candidates.size(); ++c) {
        final_dist[trace.candidates[c]] = trace.final_probabilities[c];
    }
    json summary = {{"steps", trace.steps.size()}, {"final_probabilities", final_dist}};
    if (!trace.steps.empty()) {
        summary["first_expected_reward"] = trace.steps.front().expected_reward;
        summary["last_expected_reward"] = trace.steps.back().expected_reward;
        summary["first_expected_shadow_reward"] =
            trace.steps.front().expected_shadow_reward;
        summary["last_expected_shadow_reward"] =
            trace.steps.back().expected_shadow_reward;
    }
    std::cerr << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// eval

std::vector<rubric::SourcedCaption> parse_captions(const json& entry) {
    std::vector<rubric::SourcedCaption> captions;
    for (const auto& c : entry.at("captions")) {
        captions.push_back(
            {c.at("source").get<std::string>(), c.at("text").get<std::string>()});
    }
    return captions;
}

int cmd_eval_pairwise(Runtime& rt, const std::string& corpus_path, std::uint64_t seed,
                      bool dry_run) {
    const auto corpus = read_jsonl(corpus_path);
    for (const auto& entry : corpus) {
        if (entry.at("captions").size() < 2) {
            throw UsageError("pairwise evaluation needs at least 2 caption sources per "
                             "image; got " +
                             std::to_string(entry.at("captions").size()));
        }
    }
    rubric::JudgeConfig judge_cfg;
    judge_cfg.judge_endpoint = rt.cfg.evaluator;

    std::vector<rubric::DuelRecord> records;
    std::uint64_t duel_index = 0;
    std::size_t failures = 0, images_failed = 0;
    for (const auto& entry : corpus) {
        const std::string image_ref = entry.at("image_ref").get<std::string>();
        const auto captions = parse_captions(entry);
        bool image_ok = false;
        for (std::size_t a = 0; a < captions.size(); ++a) {
            for (std::size_t b = a + 1; b < captions.size(); ++b) {
                const std::uint64_t duel_seed = rubric::splitmix64(seed + duel_index++);
                if (dry_run) {
                    const bool first_is_a = rubric::duel_position_coin(duel_seed);
                    const auto& slot_a = first_is_a ? captions[a] : captions[b];
                    const auto& slot_b = first_is_a ? captions[b] : captions[a];
                    print_prompt("duel image=" + image_ref,
                                 rubric::prompts::render_duel(slot_a.text, slot_b.text));
                    image_ok = true;
                    continue;
                }
                try {
                    auto record = rubric::pairwise_duel(rt.gateway, image_ref, captions[a],
                                                        captions[b], judge_cfg, duel_seed);
                    if (rt.store) {
                        rt.store->append_record(rubric::RecordKind::Duel, record.to_json());
                    }
                    std::cout << record.to_json().dump() << '\n';
                    records.push_back(std::move(record));
                    image_ok = true;
                } catch (const std::exception& e) {
                    ++failures;
                    std::cout << json{{"image_ref", image_ref}, {"error", e.what()}}.dump()
                              << '\n';
                }
            }
        }
        if (!image_ok) ++images_failed;
    }
    if (dry_run) return 0;

    // Win rates per unordered source pair, reported for the first source.
    std::map<std::pair<std::string, std::string>, std::vector<rubric::DuelRecord>> by_pair;
    for (const auto& r : records) {
        auto key = std::minmax(r.left_source, r.right_source);
        by_pair[{key.first, key.second}].push_back(r);
    }
    json pairs = json::array();
    for (const auto& [key, duels] : by_pair) {
        pairs.push_back({{"source", key.first},
                         {"opponent", key.second},
                         {"duels", duels.size()},
                         {"win_rate", rubric::win_rate(duels, key.first)}});
    }
    json summary = {{"duels", records.size()}, {"failures", failures}, {"pairs", pairs}};
    std::cerr << summary.dump() << '\n';
    return (!corpus.empty() && images_failed == corpus.size()) ? 1 : 0;
}

int cmd_eval_rank(Runtime& rt, const std::string& corpus_path, std::uint64_t seed,
                  bool dry_run) {
    const auto corpus = read_jsonl(corpus_path);
    for (const auto& entry : corpus) {
        if (entry.at("captions").size() != 5) {
            throw UsageError("rank evaluation needs exactly 5 caption sources per image; "
                             "got " +
                             std::to_string(entry.at("captions").size()));
        }
    }
    rubric::JudgeConfig judge_cfg;
    judge_cfg.judge_endpoint = rt.cfg.evaluator;

    std::vector<rubric::RankRecord> records;
    std::size_t failures = 0;
    std::uint64_t index = 0;
    for (const auto& entry : corpus) {
        const std::string image_ref = entry.at("image_ref").get<std::string>();
        const auto captions = parse_captions(entry);
        const std::uint64_t rank_seed = rubric::splitmix64(seed + index++);
        if (dry_run) {
            // Mirror blind_rank's label assignment without a model call.
            std::vector<std::size_t> perm = {0, 1, 2, 3, 4};
            rubric::SeededRng rng(rank_seed);
            rng.shuffle(perm);
            std::string captions_text;
            for (std::size_t slot = 0; slot < perm.size(); ++slot) {
                if (slot) captions_text += "\n\n";
                captions_text += "Caption " + std::string(1, char('A' + slot)) + ": " +
                                 captions[perm[slot]].text;
            }
            print_prompt("rank image=" + image_ref,
                         rubric::prompts::render_rank(captions_text));
            continue;
        }
        try {
            auto record =
                rubric::blind_rank(rt.gateway, image_ref, captions, judge_cfg, rank_seed);
            if (rt.store) {
                rt.store->append_record(rubric::RecordKind::Rank, record.to_json());
            }
            std::cout << record.to_json().dump() << '\n';
            records.push_back(std::move(record));
        } catch (const std::exception& e) {
            ++failures;
            std::cout << json{{"image_ref", image_ref}, {"error", e.what()}}.dump() << '\n';
        }
    }
    if (dry_run) return 0;

    json summary = {{"images", corpus.size()}, {"failures", failures}};
    if (!records.empty()) {
        const auto dist = rubric::rank_distribution(records);
        json hist = json::object();
        for (const auto& [source, h] : dist.histograms) hist[source] = h;
        json sub = json::object();
        for (const auto& [source, m] : dist.sub_metrics) {
            sub[source] = {{"accuracy", m.accuracy},
                           {"completeness", m.completeness},
                           {"clarity", m.clarity},
                           {"hallucination_penalty", m.hallucination_penalty}};
        }
        summary["rank_histograms"] = hist;
        summary["sub_metric_means"] = sub;
    }
    std::cerr << summary.dump() << '\n';
    return (!corpus.empty() && records.empty()) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// cache stats

int cmd_cache_stats(const std::string& store_root) {
    if (store_root.empty()) throw UsageError("cache stats needs --store or config store");
    rubric::Store store(store_root);
    json counts = json::object();
    for (auto kind : {rubric::RecordKind::RubricSet, rubric::RecordKind::Verdict,
                      rubric::RecordKind::Duel, rubric::RecordKind::Rank,
                      rubric::RecordKind::Trace}) {
        auto scan = store.scan_records(kind);
        counts[rubric::record_kind_name(kind)] = scan.records.size();
        if (scan.truncated_tail) counts["truncated_tail"] = true;
    }
    json out = {{"cache_entries", store.cache_size()}, {"records", counts}};
    std::cout << out.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rubric-as-reward pipeline for dense image captioning"};
    app.require_subcommand(1);

    std::string config_path, store_override, manifest_path, rubrics_path, captions_path;
    std::string references_path, scenario_path, corpus_path, prompts_dir;
    std::string reward_fn = "rubric";
    std::uint64_t seed_flag = 0;
    bool seed_set = false;
    int parallel = 2;
    int steps_override = -1;
    bool dry_run = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        auto* opt = cmd->add_option("--config", config_path, "run config JSON");
        if (needs_config) opt->required();
        cmd->add_option("--store", store_override, "store root override");
        cmd->add_option("--seed", seed_flag, "global seed override")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_flag("--dry-run", dry_run, "print assembled prompts; no model calls");
    };

    auto* synthesize = app.add_subcommand("synthesize", "build per-image rubrics");
    add_common(synthesize);
    synthesize->add_option("--manifest", manifest_path, "images manifest JSONL")
        ->required();
    synthesize->add_option("--parallel", parallel, "bound on in-flight images");

    auto* reward = app.add_subcommand("reward", "judge captions against rubrics");
    add_common(reward);
    reward->add_option("--rubrics", rubrics_path, "rubric sets JSONL");
    reward->add_option("--captions", captions_path, "captions JSONL")->required();
    reward->add_option("--references", references_path, "reference captions JSONL");
    reward->add_option("--reward-fn", reward_fn, "reward function")
        ->check(CLI::IsMember({"rubric", "rouge-l", "likert-direct", "likert-reference"}));

    auto* train = app.add_subcommand("train-sim", "desk-scale GRPO simulator");
    add_common(train);
    train->add_option("--scenario", scenario_path, "scenario JSON")->required();
    train->add_option("--steps", steps_override, "override configured step count");
    train->add_option("--reward-fn", reward_fn, "reward function")
        ->check(CLI::IsMember({"rubric", "rouge-l", "likert-direct", "likert-reference"}));

    auto* eval = app.add_subcommand("eval", "evaluation protocols");
    eval->require_subcommand(1);
    auto* pairwise = eval->add_subcommand("pairwise", "anonymized position-randomized duels");
    add_common(pairwise);
    pairwise->add_option("--corpus", corpus_path, "captions corpus JSONL")->required();
    auto* rank = eval->add_subcommand("rank", "blind 5-way ranking");
    add_common(rank);
    rank->add_option("--corpus", corpus_path, "captions corpus JSONL")->required();

    auto* cache = app.add_subcommand("cache", "store inspection");
    auto* stats = cache->add_subcommand("stats", "cache and record counts");
    stats->add_option("--config", config_path, "run config JSON");
    stats->add_option("--store", store_override, "store root");

    auto* prompts = app.add_subcommand("prompts", "prompt template data files");
    auto* prompts_export = prompts->add_subcommand("export", "write templates to a directory");
    prompts_export->add_option("dir", prompts_dir, "output directory")->required();
    auto* prompts_verify = prompts->add_subcommand("verify", "check templates against embedded copies");
    prompts_verify->add_option("dir", prompts_dir, "directory to check")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (prompts_export->parsed()) {
            rubric::prompts::export_templates(prompts_dir);
            return 0;
        }
        if (prompts_verify->parsed()) {
            rubric::prompts::verify_templates(prompts_dir);
            std::cout << "templates verified\n";
            return 0;
        }
        if (stats->parsed()) {
            std::string root = store_override;
            if (root.empty() && !config_path.empty()) {
                root = load_run_config(config_path).store_root;
            }
            return cmd_cache_stats(root);
        }

        Runtime rt(load_run_config(config_path), store_override);
        const std::uint64_t seed = seed_set ? seed_flag : rt.cfg.seed;

        if (synthesize->parsed()) {
            return cmd_synthesize(rt, manifest_path, parallel, dry_run);
        }
        if (reward->parsed()) {
            return cmd_reward(rt, rubrics_path, captions_path, references_path, reward_fn,
                              dry_run);
        }
        if (train->parsed()) {
            return cmd_train_sim(rt, scenario_path, reward_fn, steps_override);
        }
        if (pairwise->parsed()) {
            return cmd_eval_pairwise(rt, corpus_path, seed, dry_run);
        }
        if (rank->parsed()) {
            return cmd_eval_rank(rt, corpus_path, seed, dry_run);
        }
        throw UsageError("no subcommand handled");
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const rubric::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
