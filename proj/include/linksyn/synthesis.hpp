#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "linksyn/backend.hpp"
#include "linksyn/corpus.hpp"
#include "linksyn/digest.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/prompts.hpp"
#include "linksyn/rng.hpp"
#include "linksyn/selection.hpp"
#include "linksyn/text.hpp"

namespace linksyn {

using json = nlohmann::json;

struct Provenance {
  std::string group_id;
  std::vector<std::string> seed_ids;
  std::string template_id;
  std::string role;
  std::string backend_id;
  std::string prompt_sha256;
  std::string response_sha256;

  bool operator==(const Provenance&) const = default;
};

struct SynthRecord {
  std::string id;
  QuestionType question_type = QuestionType::kMultipleChoice;
  std::string question;
  std::vector<std::string> options;
  int answer_index = -1;
  std::string solution;
  std::string answer;
  bool refined = false;
  Provenance provenance;

  bool operator==(const SynthRecord&) const = default;

  // Answer text used for similarity and contamination checks.
  std::string answer_text() const {
    if (question_type == QuestionType::kMultipleChoice && answer.empty() && answer_index >= 0 &&
        answer_index < static_cast<int>(options.size()))
      return options[answer_index];
    return answer;
  }
};

inline json record_to_json(const SynthRecord& r) {
  json j = {{"id", r.id}, {"question_type", question_type_name(r.question_type)}, {"question", r.question}};
  if (r.question_type == QuestionType::kMultipleChoice) {
    j["options"] = r.options;
    j["answer_index"] = r.answer_index;
  }
  if (!r.solution.empty() || r.question_type == QuestionType::kEssay) j["solution"] = r.solution;
  if (!r.answer.empty() || r.question_type == QuestionType::kEssay) j["answer"] = r.answer;
  j["refined"] = r.refined;
  j["provenance"] = {{"group_id", r.provenance.group_id},
                     {"seed_ids", r.provenance.seed_ids},
                     {"template_id", r.provenance.template_id},
                     {"role", r.provenance.role},
                     {"backend_id", r.provenance.backend_id},
                     {"prompt_sha256", r.provenance.prompt_sha256},
                     {"response_sha256", r.provenance.response_sha256}};
  return j;
}

inline SynthRecord record_from_json(const json& j, std::size_t line_no = 0) {
  try {
    SynthRecord r;
    r.id = j.at("id").get<std::string>();
    r.question_type = parse_question_type(j.at("question_type").get<std::string>());
    r.question = j.at("question").get<std::string>();
    if (r.question_type == QuestionType::kMultipleChoice) {
      r.options = j.at("options").get<std::vector<std::string>>();
      r.answer_index = j.at("answer_index").get<int>();
    }
    r.solution = j.value("solution", "");
    r.answer = j.value("answer", "");
    r.refined = j.value("refined", false);
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      r.provenance.group_id = p.value("group_id", "");
      r.provenance.seed_ids = p.value("seed_ids", std::vector<std::string>{});
      r.provenance.template_id = p.value("template_id", "");
      r.provenance.role = p.value("role", "");
      r.provenance.backend_id = p.value("backend_id", "");
      r.provenance.prompt_sha256 = p.value("prompt_sha256", "");
      r.provenance.response_sha256 = p.value("response_sha256", "");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::kParseFailure, std::string("bad synthesized record: ") + e.what(), line_no);
  }
}

struct Quarantined {
  std::string group_id;
  std::string reason;
  std::string raw;

  json to_json() const { return {{"group_id", group_id}, {"reason", reason}, {"raw", raw}}; }
};

inline void save_records(const std::string& path, const std::vector<SynthRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  text::write_file(path, out);
}

inline void save_quarantine(const std::string& path, const std::vector<Quarantined>& items) {
  std::string out;
  for (const auto& q : items) out += q.to_json().dump() + "\n";
  text::write_file(path, out);
}

// Parses each non-blank line; lines that fail are returned in `bad` as (line number, raw) when given.
inline std::vector<SynthRecord> load_records(const std::string& path,
                                             std::vector<std::pair<std::size_t, std::string>>* bad = nullptr) {
  std::vector<SynthRecord> out;
  const auto lines = text::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const json j = json::parse(lines[i], nullptr, false);
    try {
      if (j.is_discarded()) throw Error(Errc::kParseFailure, "invalid JSON", i + 1);
      out.push_back(record_from_json(j, i + 1));
    } catch (const Error&) {
      if (!bad) throw;
      bad->emplace_back(i + 1, lines[i]);
    }
  }
  return out;
}

namespace detail {

inline std::optional<json> try_parse(std::string_view s) {
  json j = json::parse(s.begin(), s.end(), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

inline std::string strip_trailing_commas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_str = false, esc = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      out += c;
      if (esc) esc = false;
      else if (c == '\\') esc = true;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
    }
    out += c;
  }
  return out;
}

// Cuts a truncated array after its last complete top-level element and closes it.
inline std::optional<std::string> close_truncated_array(std::string_view s) {
  const auto open = s.find('[');
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_str = false, esc = false;
  std::size_t last_complete = std::string_view::npos;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (esc) esc = false;
      else if (c == '\\') esc = true;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '[' || c == '{') ++depth;
    else if (c == ']' || c == '}') {
      --depth;
      if (depth == 1 && c == '}') last_complete = i;
      if (depth == 0) return std::string(s.substr(open, i - open + 1));
    }
  }
  if (last_complete == std::string_view::npos) return std::nullopt;
  return std::string(s.substr(open, last_complete - open + 1)) + "]";
}

inline std::optional<json> as_array(json j) {
  if (j.is_array()) return j;
  if (j.is_object()) {
    for (auto& [k, v] : j.items())
      if (v.is_array() && j.size() == 1) return v;
    return json::array({j});
  }
  return std::nullopt;
}

}  // namespace detail

struct ExtractResult {
  std::optional<json> items;
  bool repaired = false;
};

// Locates a JSON array in free-form model output. Falls back to one repair pass
// (trailing commas, truncated tail) before giving up.
inline ExtractResult extract_json_array(std::string_view raw) {
  std::vector<std::string> candidates{std::string(raw)};
  for (std::size_t pos = 0; (pos = raw.find("```", pos)) != std::string_view::npos;) {
    auto body = raw.find('\n', pos);
    if (body == std::string_view::npos) break;
    auto end = raw.find("```", body);
    candidates.emplace_back(raw.substr(body + 1, end == std::string_view::npos ? std::string_view::npos : end - body - 1));
    if (end == std::string_view::npos) break;
    pos = end + 3;
  }
  const auto lb = raw.find('['), rb = raw.rfind(']');
  if (lb != std::string_view::npos && rb != std::string_view::npos && rb > lb)
    candidates.emplace_back(raw.substr(lb, rb - lb + 1));
  const auto lc = raw.find('{'), rc = raw.rfind('}');
  if (lc != std::string_view::npos && rc != std::string_view::npos && rc > lc)
    candidates.emplace_back(raw.substr(lc, rc - lc + 1));

  for (const auto& c : candidates)
    if (auto j = detail::try_parse(c))
      if (auto arr = detail::as_array(*j)) return {arr, false};
  for (const auto& c : candidates) {
    const std::string cleaned = detail::strip_trailing_commas(c);
    if (auto j = detail::try_parse(cleaned))
      if (auto arr = detail::as_array(*j)) return {arr, true};
    if (auto closed = detail::close_truncated_array(cleaned))
      if (auto j = detail::try_parse(*closed))
        if (auto arr = detail::as_array(*j)) return {arr, true};
  }
  return {};
}

struct SynthesisConfig {
  std::optional<QuestionType> question_type;  // unset: draw per group
  double mcq_fraction = 0.5;
  std::string role;  // empty: draw college/graduate per group
  GenNumMap gen_nums = default_gen_num_map();
  std::size_t concurrency = 4;
  int parse_retries = 1;
  RetryPolicy retry;
  std::uint64_t rng_seed = 0;
};

struct SynthesisResult {
  std::vector<SynthRecord> records;
  std::vector<Quarantined> quarantined;
  std::size_t prompts_sent = 0;
  std::size_t repaired = 0;
};

inline std::string group_id_for(std::size_t index) { return "g" + std::to_string(index); }

// Template and role for a group: a pure function of (config, group index, seed count).
inline PromptTemplate template_for_group(const SynthesisConfig& cfg, std::size_t group_index, int ref_num) {
  RandomStream rng = make_stream(cfg.rng_seed, "synth/template", group_index);
  QuestionType type;
  if (cfg.question_type) type = *cfg.question_type;
  else type = rng.uniform() < cfg.mcq_fraction ? QuestionType::kMultipleChoice : QuestionType::kEssay;
  std::string role = cfg.role;
  if (role.empty()) role = rng.below(2) == 0 ? "college" : "graduate";
  return PromptTemplate::synthesizer(type, ref_num, role, cfg.gen_nums);
}

inline std::vector<std::string> seed_texts(const SeedGroup& g, const Corpus& corpus) {
  std::vector<std::string> out;
  for (const auto& id : g.seed_ids) {
    const auto pos = corpus.find(id);
    if (!pos) throw Error(Errc::kInvalidArgument, "seed id '" + id + "' not found in corpus");
    out.push_back(corpus[*pos].text);
  }
  return out;
}

// Checks one generated item; returns an empty string when valid, else the rejection reason.
inline std::string validate_item(const json& item, QuestionType type) {
  if (!item.is_object()) return "item is not an object";
  if (!item.contains("question") || !item["question"].is_string() || item["question"].get<std::string>().empty())
    return "missing question";
  if (type == QuestionType::kMultipleChoice) {
    if (!item.contains("options") || !item["options"].is_array()) return "missing options";
    const auto& opts = item["options"];
    if (opts.size() != 4) return "expected 4 options, got " + std::to_string(opts.size());
    for (const auto& o : opts)
      if (!o.is_string() || o.get<std::string>().empty()) return "empty option";
    if (!item.contains("answer_index") || !item["answer_index"].is_number_integer()) return "missing answer_index";
    const int idx = item["answer_index"].get<int>();
    if (idx < 0 || idx > 3) return "answer_index out of range";
  } else {
    for (const char* key : {"solution", "answer"})
      if (!item.contains(key) || !item[key].is_string() || item[key].get<std::string>().empty())
        return std::string("missing ") + key;
  }
  return {};
}

// One prompt per group; responses become records or quarantine entries. Records
// come back in group order regardless of concurrency.
inline SynthesisResult synthesize(const std::vector<SeedGroup>& groups, const Corpus& corpus,
                                  const SynthesisConfig& cfg, Backend& backend,
                                  std::size_t first_group_index = 0) {
  struct Out {
    std::vector<SynthRecord> records;
    std::vector<Quarantined> quarantined;
    bool sent = false;
    bool repaired = false;
  };
  auto work = [&](std::size_t i) {
    Out out;
    const SeedGroup& g = groups[i];
    const std::size_t gi = first_group_index + i;
    const std::string gid = group_id_for(gi);
    const int ref_num = static_cast<int>(g.seed_ids.size());
    if (ref_num == 0) {
      out.quarantined.push_back({gid, "group has no seeds", ""});
      return out;
    }
    if (!cfg.gen_nums.count(ref_num)) {
      out.quarantined.push_back({gid, "ArityMismatch: no template for " + std::to_string(ref_num) + " seeds", ""});
      return out;
    }
    const PromptTemplate t = template_for_group(cfg, gi, ref_num);
    const std::string prompt = render_synthesizer(t, seed_texts(g, corpus));
    out.sent = true;
    std::string raw;
    ExtractResult extracted;
    for (int attempt = 0; attempt <= cfg.parse_retries; ++attempt) {
      raw = complete_with_retry(backend, prompt, cfg.retry);
      extracted = extract_json_array(raw);
      if (extracted.items) break;
    }
    if (!extracted.items) {
      out.quarantined.push_back({gid, "ParseFailure: no JSON array in response", raw});
      return out;
    }
    out.repaired = extracted.repaired;
    Provenance prov{gid, g.seed_ids, t.id, t.role_assigner, backend.id(), sha256_hex(prompt), sha256_hex(raw)};
    const auto& items = *extracted.items;
    for (std::size_t k = 0; k < items.size() && k < static_cast<std::size_t>(t.gen_num); ++k) {
      const json& item = items[k];
      if (auto why = validate_item(item, t.question_type); !why.empty()) {
        out.quarantined.push_back({gid, why, item.dump()});
        continue;
      }
      SynthRecord r;
      r.id = gid + "-q" + std::to_string(k);
      r.question_type = t.question_type;
      r.question = item["question"].get<std::string>();
      if (t.question_type == QuestionType::kMultipleChoice) {
        r.options = item["options"].get<std::vector<std::string>>();
        r.answer_index = item["answer_index"].get<int>();
      } else {
        r.solution = item["solution"].get<std::string>();
        r.answer = item["answer"].get<std::string>();
      }
      r.provenance = prov;
      out.records.push_back(std::move(r));
    }
    return out;
  };
  auto outs = run_bounded<Out>(groups.size(), cfg.concurrency, work);
  SynthesisResult result;
  for (auto& o : outs) {
    result.prompts_sent += o.sent;
    result.repaired += o.repaired;
    for (auto& r : o.records) result.records.push_back(std::move(r));
    for (auto& q : o.quarantined) result.quarantined.push_back(std::move(q));
  }
  return result;
}

// Prompt bytes are reproducible from a record's provenance plus the corpus.
inline std::string reconstruct_prompt(const SynthRecord& r, const Corpus& corpus, const GenNumMap& gen_nums = default_gen_num_map()) {
  SeedGroup g;
  g.seed_ids = r.provenance.seed_ids;
  const PromptTemplate t = PromptTemplate::synthesizer(r.question_type, static_cast<int>(g.seed_ids.size()),
                                                       r.provenance.role, gen_nums);
  if (t.id != r.provenance.template_id)
    throw Error(Errc::kInvalidArgument, "template id mismatch: " + t.id + " vs " + r.provenance.template_id);
  return render_synthesizer(t, seed_texts(g, corpus));
}

inline std::string render_refine_prompt(const SynthRecord& r) {
  json input = {{"question", r.question}};
  if (r.question_type == QuestionType::kMultipleChoice) {
    input["options"] = r.options;
    input["answer_index"] = r.answer_index;
  } else {
    input["solution"] = r.solution;
    input["answer"] = r.answer;
  }
  const std::string_view schema =
      r.question_type == QuestionType::kMultipleChoice ? prompts::kRefineJsonMcq : prompts::kRefineJsonEssay;
  return fill_placeholders(std::string(prompts::kAnswerRegenerator),
                           {{"Format-specific Constraints", std::string(format_constraints(r.question_type))},
                            {"Format-specified JSON", std::string(schema)},
                            {"Question", input.dump()}});
}

struct RefineConfig {
  std::size_t concurrency = 4;
  int parse_retries = 1;
  RetryPolicy retry;
};

struct RefineResult {
  std::vector<SynthRecord> records;
  std::vector<Quarantined> quarantined;
  std::size_t options_added = 0;
};

namespace detail {
inline std::string first_string(const json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (j.contains(k) && j[k].is_string()) return j[k].get<std::string>();
  return {};
}
}  // namespace detail

// Applies one regenerated answer to a record. Returns an empty string on success, else the rejection reason.
inline std::string apply_refinement(SynthRecord& r, const json& reply, bool* added_option = nullptr) {
  if (!reply.is_object()) return "refinement is not an object";
  const std::string steps = detail::first_string(reply, {"Solution Steps", "solution_steps", "solution"});
  const std::string final_answer = detail::first_string(reply, {"Final Answer", "final_answer", "answer"});
  if (steps.empty() || final_answer.empty()) return "refinement missing Solution Steps or Final Answer";
  if (r.question_type == QuestionType::kMultipleChoice) {
    int idx = r.answer_index;
    if (reply.contains("answer_index") && reply["answer_index"].is_number_integer()) idx = reply["answer_index"].get<int>();
    const bool missing = idx == 4 || reply.value("correct_option_missing", false);
    if (missing) {
      if (r.options.size() == 4) {
        r.options.push_back("(E) " + final_answer);
        if (added_option) *added_option = true;
      }
      idx = 4;
    }
    if (idx < 0 || idx >= static_cast<int>(r.options.size())) return "refined answer_index out of range";
    r.answer_index = idx;
  }
  r.solution = steps;
  r.answer = final_answer;
  r.refined = true;
  return {};
}

inline RefineResult refine_answers(const std::vector<SynthRecord>& records, const RefineConfig& cfg, Backend& backend) {
  struct Out {
    std::optional<SynthRecord> record;
    std::optional<Quarantined> quarantined;
    bool added = false;
  };
  auto work = [&](std::size_t i) {
    Out out;
    SynthRecord r = records[i];
    const std::string prompt = render_refine_prompt(r);
    std::string raw;
    std::optional<json> reply;
    for (int attempt = 0; attempt <= cfg.parse_retries && !reply; ++attempt) {
      raw = complete_with_retry(backend, prompt, cfg.retry);
      auto ex = extract_json_array(raw);
      if (ex.items && ex.items->size() == 1) reply = (*ex.items)[0];
    }
    if (!reply) {
      out.quarantined = Quarantined{r.id, "ParseFailure: no refinement object in response", raw};
      return out;
    }
    if (auto why = apply_refinement(r, *reply, &out.added); !why.empty()) {
      out.quarantined = Quarantined{r.id, why, raw};
      return out;
    }
    out.record = std::move(r);
    return out;
  };
  auto outs = run_bounded<Out>(records.size(), cfg.concurrency, work);
  RefineResult result;
  for (auto& o : outs) {
    if (o.record) result.records.push_back(std::move(*o.record));
    if (o.quarantined) result.quarantined.push_back(std::move(*o.quarantined));
    result.options_added += o.added;
  }
  return result;
}

}  // namespace linksyn
