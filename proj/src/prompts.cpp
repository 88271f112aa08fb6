#include "rubric/prompts.hpp"

#include <filesystem>

#include "rubric/errors.hpp"
#include "rubric/util.hpp"

namespace rubric::prompts {

namespace {

const std::string kRubricWriterSystem =
    R"PROMPT(You are an expert evaluator generating highly discriminative rubrics to assess image caption quality.

## Task
Identify the most discriminative criteria that separate excellent captions from weak or flawed ones. Focus on subtle but decisive quality differences that generic rubrics typically miss, while covering all critical dimensions of captioning performance.

## Rules you MUST follow:
1. Discriminative Power (Highest Priority)
- **Only** include criteria where the student model actually **fails** relative to teacher majority. Do NOT create rubrics for aspects the student model already handles correctly.
- Each rubric MUST meaningfully distinguish the weak student caption from teacher-consensus level performance.

2. Teacher Consensus as Ground Truth
- Ground truth = majority agreement among the five teacher models.
- A visual element, relationship, or interpretation is considered correct only if >= 2 teachers describe it accurately.

3. Weighting by Severity
- 3.0: Critical failures (main subject misidentification, hallucination of major elements, missing essential relationships)
- 2.0: Important but non-critical (secondary objects, spatial/contextual accuracy, attribute precision)
- 1.0: Minor polish (style fluency, phrasing clarity, minor detail richness)

4. Binary & Verifiable
- Every criterion must have a clear, objective pass/fail rule that can be verified by directly comparing the student caption against teacher consensus.

5. Quality over Quantity
- Prefer extremely important and sharp rubrics over many many generic ones.

## Output Requirements:
IMPORTANT: Return valid JSON object only, enclosed in triple backticks (```json). Do not include any additional text, explanations, or comments outside the JSON. Escape all quotes within string values using backslash (\"). Do not use single quotes or unescaped double quotes within JSON string values:
**JSON Structure:**
{
  "rubrics": [
    {
      "criterion": "Clear, specific criterion (e.g., Identifies the red bicycle in foreground)",
      "description": "Detailed explanation of what this measures and why it matters",
      "evaluation_rule": "Concrete rule with clear pass/fail condition",
      "weight": 1.0|2.0|3.0,
      "justification": "Explain the gap: what you see in the image, what teachers captured, what weak model missed/got wrong",
      "student_already_met": "True or False - Whether the weak model already satisfies this criterion",
      "reference_teachers": ["List of teacher model names that correctly satisfied this criterion"],
      "teacher_consensus": "Description of what the majority of reliable teachers agree on for this element"
    }
  ]
}
)PROMPT";

const std::string kRubricWriterUser =
    R"PROMPT({{IMAGE}}
**Weak Model Output:**
{{WEAK_STUDENT_CAPTION}}

**Teacher Model Outputs:**
1. **Model 1:** {{CANDIDATE_1}}
2. **Model 2:** {{CANDIDATE_2}}
3. **Model 3:** {{CANDIDATE_3}}
4. **Model 4:** {{CANDIDATE_4}}
5. **Model 5:** {{CANDIDATE_5}}

**Task:**
1. Carefully examine the image and identify all important visual elements.
2. Determine teacher consensus (what the majority of the five teacher models describe correctly).
3. Evaluate the weak model's caption across all important dimensions of caption quality: accuracy, completeness, clarity, detail, relationships, and contextual interpretation.
4. For each dimension you choose to include, create one targeted binary rubric item with appropriate weight (1.0-3.0) using the required JSON structure.
5. Do NOT create rubrics for aspects the weak model already handles correctly.
)PROMPT";

const std::string kJudge =
    R"PROMPT(You are a Quality Assurance Auditor for image captioning. Your task is to validate if a generated caption adheres to a specific criterion based on meaning and intent, not just keyword matching.

CRITERION TO EVALUATE (THE ONLY THING YOU USE TO CONSIDER):
- Criteria name: {criterion}
- Criteria description: {description}
- Evaluation rule: {evaluation_rule}

GENERATED CAPTION TO EVALUATE:
{generated_caption}

EVALUATION INSTRUCTIONS:
1. **Analyze Requirements:** Break down the criteria description and its evaluation rule to understand the core facts or concepts required.
2. **Check Semantic Equivalence:** Analyze the generated caption. Check if the required concepts are present, even if phrased differently.
   - Synonyms are acceptable (e.g., "automobile" instead of "car").
   - Structural changes are acceptable (e.g., "The man holds a cup" vs "A cup is held by the man").
3. **Assign Score:**
   - Score 1 (Pass): The caption conveys the correct *meaning* of the rule. It includes the necessary details, regardless of phrasing.
   - Score 0 (Fail): The caption explicitly misses key information, contradicts the facts, or hallucinates details not found in the rule.

RESPONSE FORMAT:
```json
{{
    "reasoning": "<detailed explanation of the score, why the caption does or does not fully meet the given criterion and its evaluation rule>",
    "score": <0 or 1>
}}
```

IMPORTANT: Return valid JSON object only, enclosed in triple backticks (```json). Do not include any additional text, explanations, or comments outside the JSON. Escape all quotes within string values using backslash (\"). Do not use single quotes or unescaped double quotes within JSON string values.
)PROMPT";

const std::string kLikertDirect =
    R"PROMPT(You are an expert image caption evaluator.

Generated Caption: {generated_caption}

Evaluate the generated caption on these criteria:
1. Accuracy: Does it correctly describe what's in the image?
2. Completeness: Does it cover the important details?
3. Quality: Is it well-written and coherent?

Provide a score from 0 to 10, where:
- 0-3: Poor quality, major inaccuracies or missing key information
- 4-6: Adequate, captures main elements but lacks detail or has minor issues
- 7-8: Good, accurate and detailed description
- 9-10: Excellent, comprehensive and high-quality caption

Respond with ONLY a single number from 0 to 10, nothing else.
)PROMPT";

const std::string kLikertReference =
    R"PROMPT(You are an expert image caption evaluator. Compare the generated caption with the reference caption for the given image.

Reference Caption: {reference_caption}
Generated Caption: {generated_caption}

Evaluate the generated caption on these criteria:
1. Accuracy: Does it correctly describe what's in the image?
2. Completeness: Does it cover the important details?
3. Quality: Is it well-written and coherent?

Provide a score from 0 to 10, where:
- 0-3: Poor quality, major inaccuracies or missing key information
- 4-6: Adequate, captures main elements but lacks detail or has minor issues
- 7-8: Good, accurate and detailed description
- 9-10: Excellent, comprehensive and high-quality caption

Respond with ONLY a single number from 0 to 10, nothing else.
)PROMPT";

const std::string kDuel =
    R"PROMPT(Given an image and two candidate captions, you are required to determine which of the two captions is better.

Below are some guidelines for your reference:

### What to evaluate
1. **Precision**: The caption should accurately correspond to the content of the image, providing precise information about it. Common examples of imprecision include errors in color, quantity, spatial relationships, or the posture of people.
2. **Informativeness**: Salient information in the image should be reflected in the caption. Since it is impossible to include every detail, you will need to subjectively judge which aspects of the image are important. For instance, describing an otter as "a small animal" is precise, but it is less informative than specifying "an otter".
3. **Hallucination**: Captions that include descriptions of objects or elements that are clearly absent from the image should be significantly penalized.
4. **Attention to detail**: Annotators should pay close attention to the details in the image to distinguish the quality of the descriptions.
5. **Assistive description**: Imagine a visually impaired person asking you to describe the image for them. How would you convey the image to them?
6. **Reverse thinking**: What image does the caption lead us to imagine? Does the caption effectively lead you to imagine the intended image?
7. **Ties are acceptable**: If you find it genuinely difficult to determine which caption is better (e.g., both captions are excellent), marking a tie is acceptable. While the above guidelines provide a framework, they cannot cover all possible cases. Therefore, we encourage you to make **subjective judgments** based on the specific circumstances and your own reasoning about which caption is better.

### What to ignore
When comparing the captions, **do NOT consider differences in**:
- Writing style or phrasing
- **Caption length**
- Grammatical variations

Caption A: {caption_a}  
Caption B: {caption_b}

Format your response in JSON format.

RESPONSE FORMAT:
```json
{{
    "reason": "<detailed explanation of the judgment>",
    "judgment": "<A, B, or, Tie>"
}}
```
)PROMPT";

const std::string kRank =
    R"PROMPT(You are an expert image captioning evaluator. Given the image above and the 5 captions below, rigorously assess each caption.

## Scoring
Score each caption on four dimensions (integers 0-10):

1. accuracy - Are the described objects, actions, text, colors, and spatial relationships factually correct for this image? Penalize for any wrong attribute, misidentified object, or incorrect action.

2. completeness - Does the caption cover all visually significant elements (main subjects, notable actions, background context, on-screen text if present)? Penalize for missing key details.

3. clarity - Is the caption well-written, specific, grammatically correct, and unambiguous? Penalize for vague language or redundancy.

4. hallucination_penalty - Does the caption assert things NOT visible in the image? 0 = zero hallucination; 10 = pervasive fabrication. Be strict: even plausible but unverifiable claims count as mild hallucination (2-4). This score is applied as a penalty.

Compute: total_score = (accuracy + completeness + clarity) / 3.0 - hallucination_penalty x 1.5

## Captions to Evaluate
{captions_text}

## Output Format
Respond ONLY with a single valid JSON object - no markdown fences, no extra text.

{
  "assessments": {
    "Caption A": {
      "justification": "<2-3 sentences citing specific visual evidence from the image>",
      "accuracy": <int 0-10>,
      "completeness": <int 0-10>,
      "clarity": <int 0-10>,
      "hallucination_penalty": <int 0-10>,
      "total_score": <float>
    },
    ...
    "Caption E": { ... }
  },
  "ranking": ["Caption X", "Caption X", "Caption X", "Caption X", "Caption X"]
}

The "ranking" list must contain all 5 caption labels ordered from best (index 0) to worst (index 4), sorted strictly by total_score descending.
)PROMPT";

const std::string kRolloutSystem =
    "You are an expert at describing images in detail. Provide comprehensive, "
    "accurate captions that describe the main subjects, their actions, the "
    "setting, and important visual details in the image.";

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

// Format-string style: {{ -> { and }} -> } first, then {slot} substitution,
// so braces inside substituted values pass through verbatim.
std::string render_format(std::string text,
                          const std::vector<std::pair<std::string, std::string>>& slots) {
    text = replace_all(std::move(text), "{{", "\x01");
    text = replace_all(std::move(text), "}}", "\x02");
    text = replace_all(std::move(text), "\x01", "{");
    text = replace_all(std::move(text), "\x02", "}");
    for (const auto& [name, value] : slots) {
        text = replace_all(std::move(text), "{" + name + "}", value);
    }
    return text;
}

}  // namespace

const std::string& rubric_writer_system() { return kRubricWriterSystem; }
const std::string& rubric_writer_user_template() { return kRubricWriterUser; }
const std::string& judge_template() { return kJudge; }
const std::string& likert_direct_template() { return kLikertDirect; }
const std::string& likert_reference_template() { return kLikertReference; }
const std::string& duel_template() { return kDuel; }
const std::string& rank_template() { return kRank; }
const std::string& rollout_system_prompt() { return kRolloutSystem; }

std::vector<NamedTemplate> all_templates() {
    return {
        {"rubric_writer_system.txt", kRubricWriterSystem},
        {"rubric_writer_user.txt", kRubricWriterUser},
        {"judge.txt", kJudge},
        {"likert_direct.txt", kLikertDirect},
        {"likert_reference.txt", kLikertReference},
        {"duel.txt", kDuel},
        {"rank.txt", kRank},
    };
}

void export_templates(const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : all_templates()) {
        write_file_atomic((std::filesystem::path(dir) / t.file_name).string(), t.text);
    }
}

void verify_templates(const std::string& dir) {
    for (const auto& t : all_templates()) {
        const std::string path = (std::filesystem::path(dir) / t.file_name).string();
        if (sha256_hex(read_file(path)) != sha256_hex(t.text)) {
            throw SchemaViolation("prompt template file '" + path +
                                  "' differs from the embedded template");
        }
    }
}

std::string render_rubric_writer_user(const std::string& student_caption,
                                      const std::vector<std::string>& teacher_captions) {
    // The template's image slot becomes a separate image part; the user text
    // starts right after it. The numbered list is regenerated so any committee
    // size keeps the template's layout.
    const std::string& tpl = kRubricWriterUser;
    const std::string image_slot = "{{IMAGE}}\n";
    std::string text = tpl.substr(tpl.find(image_slot) + image_slot.size());

    const auto list_start = text.find("1. **Model 1:**");
    const auto list_end = text.find("\n\n**Task:**");
    std::string numbered;
    for (std::size_t k = 0; k < teacher_captions.size(); ++k) {
        if (k > 0) numbered += "\n";
        numbered += std::to_string(k + 1) + ". **Model " + std::to_string(k + 1) +
                    ":** " + teacher_captions[k];
    }
    text = text.substr(0, list_start) + numbered + text.substr(list_end);
    text = replace_all(std::move(text), "{{WEAK_STUDENT_CAPTION}}", student_caption);
    return text;
}

std::string render_judge(const std::string& criterion, const std::string& description,
                         const std::string& evaluation_rule,
                         const std::string& generated_caption) {
    return render_format(kJudge, {{"criterion", criterion},
                                  {"description", description},
                                  {"evaluation_rule", evaluation_rule},
                                  {"generated_caption", generated_caption}});
}

std::string render_likert_direct(const std::string& generated_caption) {
    return replace_all(kLikertDirect, "{generated_caption}", generated_caption);
}

std::string render_likert_reference(const std::string& reference_caption,
                                    const std::string& generated_caption) {
    std::string text = replace_all(kLikertReference, "{reference_caption}", reference_caption);
    return replace_all(std::move(text), "{generated_caption}", generated_caption);
}

std::string render_duel(const std::string& caption_a, const std::string& caption_b) {
    return render_format(kDuel, {{"caption_a", caption_a}, {"caption_b", caption_b}});
}

std::string render_rank(const std::string& captions_text) {
    return replace_all(kRank, "{captions_text}", captions_text);
}

}  // namespace rubric::prompts
