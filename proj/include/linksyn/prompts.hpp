#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "linksyn/corpus.hpp"
#include "linksyn/errors.hpp"

namespace linksyn {

enum class QuestionType { kMultipleChoice, kEssay };

inline std::string_view question_type_name(QuestionType t) {
  return t == QuestionType::kMultipleChoice ? "mcq" : "essay";
}

inline QuestionType parse_question_type(std::string_view s) {
  if (s == "mcq" || s == "multiple-choice") return QuestionType::kMultipleChoice;
  if (s == "essay" || s == "essay-question") return QuestionType::kEssay;
  throw Error(Errc::kInvalidArgument, "unknown question type '" + std::string(s) + "' (expected mcq or essay)");
}

namespace prompts {

inline constexpr std::string_view kSynthesizer =
    R"(Act as a {Role Assigner} educator, analyze the knowledge points assessed by the provided {ref_num} reference questions. Generate {gen_num} novel questions adhering to these requirements:
1. Questions must demonstrate substantial differentiation while testing application or higher-order use of identified knowledge points.
2. Difficulty must align with high-difficulty standards through:
   a) Down-scaling overqualified knowledge points to prerequisite concepts at graduate level
   b) Up-scaling underqualified points to advanced applications at graduate level
3. Linguistic consistency must be maintained with the input questions.
{Format-specific Constraints}
[Difficulty Reference Guide]
1. Knowledge Analysis:
   - Core concepts (<=3)
   - Integration type: {single | cross-chapter | cross-discipline}
2. Cognitive Tier (Bloom's Taxonomy):
   {memory | understanding | application | analysis | synthesis | evaluation}
3. Difficulty Calibration:
   - Estimate pass rate 0 <= P <= 100%
   - Tier Classification:
     - extreme: P < 10%
     - challenge: 10% <= P < 30%
     - improvement: 30% <= P < 50%
     - standard: 50% <= P < 80%
     - basic: P >= 80%
   - ENSURE generated questions match reference difficulty tier

Output Schema: {Format-specified JSON}
Input: {Seed Data})";

inline constexpr std::string_view kAnswerRegenerator =
    R"(Please strictly follow the requirements below to analyze the given question and answer:
Answer Requirements
1. Perform step-by-step reasoning and show the complete thought process, which must include:
   - Extraction of key information from the question
   - Application of relevant formulas/theorems
   - Analysis of each option individually
   - Reminders of common error types
   - Display of logical reasoning chains
2. Answer format requirements:
   - Must include both 'Solution Steps' and 'Final Answer' fields
3. Notes
   - If the question already includes solution steps and answers, please ignore them and don't be influenced by them, as they may be incorrect or suboptimal.
   - For multiple-choice questions:
     * If the correct answer is missing:
         - Add a fifth option: "(E) [Correct Answer]"
         - Set answer_index=4
         - Keep the original options unchanged
{Format-specific Constraints}
Output Schema: {Format-specified JSON}
Input: {Question})";

inline constexpr std::string_view kConstraintsMcq =
    "4. The generated question type is multiple-choice. For each question, four alternative options must be "
    "generated, and among the four options, there must be one correct answer.";

inline constexpr std::string_view kConstraintsEssay =
    "4. The generated question type is essay-question. For each question, the solution steps and the final correct "
    "answer are provided. The generated questions cannot be open-ended questions (such as those of the solution type, "
    "thinking type, information listing type, etc.), but must be self-contained with a final answer that can be "
    "determined as correct.";

inline constexpr std::string_view kJsonMcq = R"([{"question": "", "options": [],  "answer_index": 0-3}, ...])";
inline constexpr std::string_view kJsonEssay = R"([{"question": "", "solution": "",  "answer": ""}, ...])";

inline constexpr std::string_view kRefineJsonMcq =
    R"({"Solution Steps": "", "Final Answer": "", "answer_index": 0-4})";
inline constexpr std::string_view kRefineJsonEssay = R"({"Solution Steps": "", "Final Answer": ""})";

inline constexpr std::string_view kDisciplineClassifier =
    R"(Act as an educational taxonomist. Classify the input question into our standardized discipline hierarchy using sequential reasoning, then output strictly in JSON format:
1. Primary Discipline Identification
   Select exactly one primary discipline from:
   {Discipline List}
   - Use "cross-discipline" only for explicit multi-domain integration
   - Assign "Other" only if no discipline matches >=60% confidence
2. Secondary Discipline Assignment
   - Identify the most specific applicable sub-discipline
   - Null if primary discipline has no sub-domains
   - Use "General" for non-specialized content
3. Validation Rules
   - Reject non-educational content -> Output "Invalid"
   - Correct spelling/terminology variations before classification
Output Schema:
{
  "primary_discipline": "",
  "secondary_discipline": "",
  "confidence": 0.0-1.0,
  "rejection_reason": null
}
Input: {Seed Data})";

inline constexpr std::string_view kDifficultyScorer =
    R"(Act as an educational assessment expert, analyze the provided question through sequential reasoning and output strictly in JSON format:
1. Knowledge Analysis
   - Core concepts (<=3): [comma-separated list]
   - Integration type: {single-concept | cross-chapter | cross-discipline}
2. Cognitive Tier (Bloom's Taxonomy)
   {memory | understanding | application | analysis | synthesis | evaluation}
3. Difficulty Assessment
   - Estimated pass rate (P) for QS Top 100 university majors: [0-100%]
   - Tier:
     - extreme: P < 10%
     - challenge: 10% <= P < 30%
     - improvement: 30% <= P < 50%
     - standard: 50% <= P < 80%
     - basic: P >= 80%
     - other: invalid inputs
4. Exception Handling
   - Mark "other" for non-questions/unanswerable items
   - Correct minor errors (e.g., missing correct options) before assessment
   - Ignore provided solutions/answers

Output Schema:
{
  "difficulty_tier": "basic|standard|improvement|challenge|extreme|other",
  "rationale": [
    "Involves {N} core knowledge points",
    "Cognitive level: {Bloom's tier}",
    "Estimated pass rate: approximately {XX}%"
  ]
}
Input: {Seed Data})";

inline constexpr std::string_view kKnowledgePointAnnotator =
    R"(Act as an educational taxonomist. Analyze the provided item through step-by-step reasoning and output strictly in JSON format:
1. discipline Classification
   - Identify the discipline to which the item belongs.
   - discipline list: {Discipline List}
2. Educational Level
   - Choose from: [Elementary School, Middle School, High School, University, Graduate School]
3. Knowledge Point Analysis
    - Core knowledge points (<=3): [comma-separated list]
    - Knowledge Point Definition: A knowledge point refers to the most basic and smallest content unit that constitutes a knowledge system within a certain discipline area.
    - Example:
     - Mathematics: Properties of linear functions
     - English: Present perfect tense
     - Biology: Basic laws of heredity
4. Exception Handling
   - Ignore any provided solutions or answer steps, as they may be incorrect or suboptimal.
   - Only select from the provided candidate lists for discipline, Assessment Ability, and Educational Level.
Output Schema:
{
  "Knowledge Point List": [
    "Properties of linear functions"
    ...
  ]
}
Input: {Seed Data})";

// Difficulty tiers named by the annotator prompt, easiest first (H1..H5).
inline const std::vector<std::string>& difficulty_tiers() {
  static const std::vector<std::string> kTiers = {"basic", "standard", "improvement", "challenge", "extreme"};
  return kTiers;
}

}  // namespace prompts

// Replace every occurrence of each `{key}` in `body`.
inline std::string fill_placeholders(std::string body, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string needle = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = body.find(needle, pos)) != std::string::npos) {
      body.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return body;
}

inline std::string_view format_constraints(QuestionType t) {
  return t == QuestionType::kMultipleChoice ? prompts::kConstraintsMcq : prompts::kConstraintsEssay;
}
inline std::string_view format_json(QuestionType t) {
  return t == QuestionType::kMultipleChoice ? prompts::kJsonMcq : prompts::kJsonEssay;
}

// Seeds per group -> questions requested per prompt.
using GenNumMap = std::map<int, int>;
inline GenNumMap default_gen_num_map() { return {{1, 10}, {2, 15}, {3, 20}}; }

struct PromptTemplate {
  std::string id;
  std::string role_assigner = "college";  // "college" | "graduate"
  int ref_num = 1;
  int gen_num = 10;
  QuestionType question_type = QuestionType::kMultipleChoice;
  std::string body{prompts::kSynthesizer};

  static PromptTemplate synthesizer(QuestionType type, int ref_num, std::string role = "college",
                                    const GenNumMap& gen_nums = default_gen_num_map()) {
    auto it = gen_nums.find(ref_num);
    if (it == gen_nums.end())
      throw Error(Errc::kArityMismatch, "no gen_num configured for ref_num " + std::to_string(ref_num));
    if (role != "college" && role != "graduate")
      throw Error(Errc::kInvalidArgument, "role assigner must be college or graduate, got '" + role + "'");
    PromptTemplate t;
    t.ref_num = ref_num;
    t.gen_num = it->second;
    t.question_type = type;
    t.role_assigner = std::move(role);
    t.id = "synth-" + std::string(question_type_name(type)) + "-r" + std::to_string(ref_num) + "-g" +
           std::to_string(t.gen_num) + "-" + t.role_assigner;
    return t;
  }
};

// Seed block: reference questions in path order.
inline std::string format_seed_data(const std::vector<std::string>& seed_texts) {
  std::string out;
  for (std::size_t i = 0; i < seed_texts.size(); ++i) {
    if (i) out += "\n\n";
    out += "Reference Question " + std::to_string(i + 1) + ":\n" + seed_texts[i];
  }
  return out;
}

inline std::string render_synthesizer(const PromptTemplate& t, const std::vector<std::string>& seed_texts) {
  if (static_cast<int>(seed_texts.size()) != t.ref_num)
    throw Error(Errc::kArityMismatch, "template expects " + std::to_string(t.ref_num) + " seeds, group has " +
                                          std::to_string(seed_texts.size()));
  return fill_placeholders(t.body, {{"Role Assigner", t.role_assigner},
                                    {"ref_num", std::to_string(t.ref_num)},
                                    {"gen_num", std::to_string(t.gen_num)},
                                    {"Format-specific Constraints", std::string(format_constraints(t.question_type))},
                                    {"Format-specified JSON", std::string(format_json(t.question_type))},
                                    {"Seed Data", format_seed_data(seed_texts)}});
}

enum class AnnotationKind { kDiscipline, kDifficulty, kKnowledgePoints };

inline std::string render_annotation_prompt(AnnotationKind kind, std::string_view item,
                                            const DisciplineTaxonomy& taxonomy = {}) {
  const std::string_view body = kind == AnnotationKind::kDiscipline   ? prompts::kDisciplineClassifier
                                : kind == AnnotationKind::kDifficulty ? prompts::kDifficultyScorer
                                                                      : prompts::kKnowledgePointAnnotator;
  return fill_placeholders(std::string(body),
                           {{"Discipline List", json(taxonomy.labels()).dump()}, {"Seed Data", std::string(item)}});
}

}  // namespace linksyn
