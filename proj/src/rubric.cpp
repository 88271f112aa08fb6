#include "rubric/rubric.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "rubric/errors.hpp"
#include "rubric/prompts.hpp"
#include "rubric/util.hpp"

namespace rubric {

nlohmann::json RubricItem::to_json() const {
    return {
        {"criterion", criterion},
        {"description", description},
        {"evaluation_rule", evaluation_rule},
        {"weight", weight},
        {"justification", justification},
        {"student_already_met", student_already_met},
        {"reference_teachers", reference_teachers},
        {"teacher_consensus", teacher_consensus},
    };
}

namespace {

bool coerce_bool(const nlohmann::json& v, const char* field) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (s == "true") return true;
        if (s == "false") return false;
    }
    throw SchemaViolation(std::string(field) + " must be a boolean or \"True\"/\"False\"");
}

double checked_weight(const nlohmann::json& v) {
    if (!v.is_number()) throw SchemaViolation("weight must be a number");
    const double w = v.get<double>();
    if (w != 1.0 && w != 2.0 && w != 3.0) {
        throw SchemaViolation("weight must be one of 1.0, 2.0, 3.0; got " +
                              std::to_string(w));
    }
    return w;
}

std::string required_string(const nlohmann::json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw SchemaViolation(std::string("missing or non-string field '") + field + "'");
    }
    return j[field].get<std::string>();
}

}  // namespace

RubricItem RubricItem::from_json(const nlohmann::json& j) {
    RubricItem item;
    item.criterion = required_string(j, "criterion");
    item.evaluation_rule = required_string(j, "evaluation_rule");
    if (item.criterion.empty()) throw SchemaViolation("criterion must be non-empty");
    if (item.evaluation_rule.empty()) {
        throw SchemaViolation("evaluation_rule must be non-empty");
    }
    item.description = j.value("description", std::string{});
    if (!j.contains("weight")) throw SchemaViolation("missing field 'weight'");
    item.weight = checked_weight(j["weight"]);
    item.justification = j.value("justification", std::string{});
    if (!j.contains("student_already_met")) {
        throw SchemaViolation("missing field 'student_already_met'");
    }
    item.student_already_met = coerce_bool(j["student_already_met"], "student_already_met");
    if (j.contains("reference_teachers")) {
        if (!j["reference_teachers"].is_array()) {
            throw SchemaViolation("reference_teachers must be an array");
        }
        for (const auto& t : j["reference_teachers"]) {
            item.reference_teachers.push_back(t.get<std::string>());
        }
    }
    item.teacher_consensus = j.value("teacher_consensus", std::string{});
    return item;
}

double RubricSet::total_weight() const {
    double sum = 0;
    for (const auto& item : items) sum += item.weight;
    return sum;
}

nlohmann::json RubricSet::to_json() const {
    nlohmann::json items_json = nlohmann::json::array();
    for (const auto& item : items) items_json.push_back(item.to_json());
    return {
        {"image_ref", image_ref},
        {"student_caption", student_caption},
        {"items", items_json},
        {"committee_size", committee_size},
        {"writer_exchange_digest", writer_exchange_digest},
    };
}

RubricSet RubricSet::from_json(const nlohmann::json& j) {
    RubricSet set;
    set.image_ref = j.at("image_ref").get<std::string>();
    set.student_caption = j.at("student_caption").get<std::string>();
    for (const auto& item : j.at("items")) {
        set.items.push_back(RubricItem::from_json(item));
    }
    set.committee_size = j.at("committee_size").get<int>();
    set.writer_exchange_digest = j.value("writer_exchange_digest", std::string{});
    return set;
}

CollectResult collect_teacher_captions(Gateway& gateway, const std::string& image_ref,
                                       const SynthesisConfig& config) {
    const int committee_size = static_cast<int>(config.committee.size());
    if (committee_size < 1) throw SchemaViolation("committee must have K >= 1 entries");

    struct Outcome {
        std::optional<std::string> caption;
        std::string endpoint;
    };
    std::vector<std::future<Outcome>> futures;
    for (const auto& endpoint : config.committee) {
        futures.push_back(std::async(std::launch::async, [&, endpoint] {
            ChatRequest request;
            request.endpoint = endpoint;
            request.system_prompt = config.caption_system_prompt;
            request.user_parts = {ImagePart{image_ref}, UserPart{config.caption_prompt}};
            request.temperature = config.teacher_temperature;
            request.max_tokens = config.max_tokens;
            Outcome out{std::nullopt, endpoint};
            try {
                out.caption = gateway.chat_complete(request).response_text;
            } catch (const TransportFailure&) {
            } catch (const NonSuccessStatus&) {
            }
            return out;
        }));
    }

    CollectResult result;
    int label = 0;
    for (int k = 0; k < committee_size; ++k) {
        Outcome out = futures[k].get();
        if (!out.caption) {
            result.dropped_endpoints.push_back(out.endpoint);
            continue;
        }
        ++label;
        result.captions.push_back(
            {k + 1, "Model " + std::to_string(label), *out.caption});
    }

    const int needed = default_consensus_threshold(committee_size);
    if (static_cast<int>(result.captions.size()) < needed) {
        throw CommitteeCollapse(std::to_string(result.captions.size()) + " of " +
                                std::to_string(committee_size) +
                                " teachers returned captions; need at least " +
                                std::to_string(needed));
    }
    return result;
}

std::pair<std::string, std::vector<UserPart>> build_rubric_prompt(
    const std::string& image_ref, const std::string& student_caption,
    const std::vector<TeacherCaption>& teacher_captions) {
    if (teacher_captions.empty()) {
        throw SchemaViolation("build_rubric_prompt requires at least one teacher caption");
    }
    std::vector<std::string> texts;
    texts.reserve(teacher_captions.size());
    for (const auto& caption : teacher_captions) texts.push_back(caption.text);

    std::vector<UserPart> parts;
    parts.emplace_back(ImagePart{image_ref});
    parts.emplace_back(prompts::render_rubric_writer_user(student_caption, texts));
    return {prompts::rubric_writer_system(), std::move(parts)};
}

std::vector<RubricItem> parse_rubric_response(const std::string& response_text) {
    nlohmann::json j = extract_json(response_text);
    if (!j.contains("rubrics") || !j["rubrics"].is_array()) {
        throw SchemaViolation("response JSON has no 'rubrics' array");
    }
    std::vector<RubricItem> items;
    for (const auto& entry : j["rubrics"]) {
        items.push_back(RubricItem::from_json(entry));
    }
    return items;
}

FilterReport filter_rubric_set(const std::vector<RubricItem>& raw_items,
                               int committee_size, int consensus_threshold,
                               int max_items) {
    if (consensus_threshold < 1) {
        throw SchemaViolation("consensus_threshold must be >= 1");
    }
    (void)committee_size;
    FilterReport report;
    for (std::size_t i = 0; i < raw_items.size(); ++i) {
        const RubricItem& item = raw_items[i];
        if (item.student_already_met) {
            report.drops.push_back({i, DropReason::AlreadyMet, item.criterion});
            continue;
        }
        if (static_cast<int>(item.reference_teachers.size()) < consensus_threshold) {
            report.drops.push_back({i, DropReason::InsufficientConsensus, item.criterion});
            continue;
        }
        if (static_cast<int>(report.survivors.size()) >= max_items) {
            report.drops.push_back({i, DropReason::OverCap, item.criterion});
            continue;
        }
        report.survivors.push_back(item);
    }
    if (report.survivors.empty()) {
        throw EmptyAfterFilter("no rubric items survive filtering; sample carries no signal");
    }
    return report;
}

RubricSet Synthesizer::synthesize(const std::string& image_ref,
                                  const std::string& student_caption,
                                  FilterReport* report) {
    std::shared_ptr<std::mutex> flight;
    {
        std::lock_guard<std::mutex> lock(flight_mutex_);
        auto& slot = in_flight_[image_ref];
        if (!slot) slot = std::make_shared<std::mutex>();
        flight = slot;
    }
    std::lock_guard<std::mutex> image_lock(*flight);

    CollectResult collected = collect_teacher_captions(gateway_, image_ref, config_);
    auto [system_prompt, user_parts] =
        build_rubric_prompt(image_ref, student_caption, collected.captions);

    ChatRequest request;
    request.endpoint = config_.rubric_writer;
    request.system_prompt = system_prompt;
    request.user_parts = std::move(user_parts);
    request.temperature = config_.writer_temperature;
    request.max_tokens = config_.max_tokens;
    ChatExchange exchange = gateway_.chat_complete(request);

    std::vector<RubricItem> raw;
    try {
        raw = parse_rubric_response(exchange.response_text);
    } catch (const NoJsonFound&) {
        throw NoJsonFound("rubric writer returned no JSON; raw response:\n" +
                          exchange.response_text);
    }

    const int committee_size = static_cast<int>(config_.committee.size());
    const int threshold = config_.consensus_threshold
                              ? *config_.consensus_threshold
                              : default_consensus_threshold(committee_size);
    FilterReport filtered;
    try {
        filtered = filter_rubric_set(raw, committee_size, threshold, config_.max_items);
    } catch (const EmptyAfterFilter& e) {
        throw SampleSkipped(std::string("sample skipped for '") + image_ref +
                            "': " + e.what());
    }
    if (report) *report = filtered;

    RubricSet set;
    set.image_ref = image_ref;
    set.student_caption = student_caption;
    set.items = std::move(filtered.survivors);
    set.committee_size = committee_size;
    set.writer_exchange_digest = gateway_.digest(exchange.request);

    if (store_) {
        // Idempotent under caching: skip the append when an identical set is
        // already persisted for this image.
        auto existing = store_->scan_records(
            RecordKind::RubricSet,
            [&](const nlohmann::json& p) { return p.value("image_ref", "") == image_ref; });
        bool already = false;
        for (const auto& env : existing.records) {
            if (env.payload == set.to_json()) {
                already = true;
                break;
            }
        }
        if (!already) store_->append_record(RecordKind::RubricSet, set.to_json());
    }
    return set;
}

}  // namespace rubric
