#pragma once

#include <string>
#include <vector>

namespace rubric::prompts {

// Raw templates. Slot conventions differ per template and are preserved:
// the rubric-writer user template uses {{NAME}} slots; the judge and duel
// templates are format-string style ({slot} plus {{ }} brace escapes); the
// Likert and ranking templates use plain {slot} tokens with literal braces.
const std::string& rubric_writer_system();
const std::string& rubric_writer_user_template();
const std::string& judge_template();
const std::string& likert_direct_template();
const std::string& likert_reference_template();
const std::string& duel_template();
const std::string& rank_template();

// Default system prompt for student rollout / teacher caption generation.
const std::string& rollout_system_prompt();

struct NamedTemplate {
    std::string file_name;
    const std::string& text;
};
std::vector<NamedTemplate> all_templates();

// Writes every template to dir as a data file.
void export_templates(const std::string& dir);

// Compares shipped template files against the embedded copies (sha256).
// Throws SchemaViolation naming the first edited file.
void verify_templates(const std::string& dir);

// -- rendered prompts --

// User text for the rubric writer (the image travels as a separate part).
// Numbered teacher entries follow the template layout for any committee size.
std::string render_rubric_writer_user(const std::string& student_caption,
                                      const std::vector<std::string>& teacher_captions);

std::string render_judge(const std::string& criterion, const std::string& description,
                         const std::string& evaluation_rule,
                         const std::string& generated_caption);

std::string render_likert_direct(const std::string& generated_caption);
std::string render_likert_reference(const std::string& reference_caption,
                                    const std::string& generated_caption);

std::string render_duel(const std::string& caption_a, const std::string& caption_b);

std::string render_rank(const std::string& captions_text);

}  // namespace rubric::prompts
