#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "linksyn/errors.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/text.hpp"

namespace linksyn {

using json = nlohmann::json;

// First-level discipline labels (GB/T 13745-2008 style, 62 entries).
inline const std::vector<std::string>& default_discipline_labels() {
  static const std::vector<std::string> kLabels = {
      "Mathematics",
      "Computer Science and Technology",
      "Clinical Medicine",
      "Chemistry",
      "Economics",
      "Information Science and Systems Science",
      "Physics",
      "Biology",
      "Law",
      "Philosophy",
      "Sociology",
      "Literature",
      "Psychology",
      "Statistics",
      "History",
      "Power and Electrical Engineering",
      "Earth Science",
      "Management Science",
      "Electronics and Communication Technology",
      "Linguistics",
      "Preventive Medicine and Public Health",
      "Political Science",
      "Education Science",
      "Aerospace Science and Technology",
      "Astronomy",
      "Materials Science",
      "Mechanics",
      "Sports Science",
      "Ethnology and Cultural Studies",
      "Basic Medicine",
      "Environmental Science and Resource Science",
      "Journalism and Communication",
      "Religious Studies",
      "Engineering and Technology Related to Information and Systems Science",
      "Food Science and Technology",
      "Engineering and Technology",
      "Art Studies",
      "Mechanical Engineering",
      "Traditional Chinese Medicine and Chinese Materia Medica",
      "Pharmacy",
      "Civil and Architectural Engineering",
      "Chemical Engineering",
      "Nuclear Science and Technology",
      "Marxism",
      "Agronomy",
      "Energy Science and Technology",
      "Transportation Engineering",
      "Military Science",
      "Safety Science and Technology",
      "Animal Husbandry and Veterinary Science",
      "Archaeology",
      "Engineering and Technology Related to Product Applications",
      "Library, Information and Documentation Science",
      "Geomatics Science and Technology",
      "Aquaculture Science",
      "Metallurgical Engineering Technology",
      "Hydraulic Engineering",
      "Military Medicine and Special Medicine",
      "Textile Science and Technology",
      "Mining Engineering Technology",
      "Forestry",
      "Engineering and Technology Related to Natural Sciences",
  };
  return kLabels;
}

class DisciplineTaxonomy {
 public:
  DisciplineTaxonomy() : DisciplineTaxonomy(default_discipline_labels()) {}

  explicit DisciplineTaxonomy(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw Error(Errc::kInvalidArgument, "taxonomy has no labels");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].empty()) throw Error(Errc::kInvalidArgument, "taxonomy label is empty");
      if (!index_.emplace(labels_[i], i).second)
        throw Error(Errc::kInvalidArgument, "duplicate taxonomy label: " + labels_[i]);
    }
  }

  static DisciplineTaxonomy from_file(const std::string& path) {
    json doc;
    try {
      doc = json::parse(text::read_file(path));
    } catch (const json::exception& e) {
      throw Error(Errc::kInvalidArgument, "taxonomy " + path + ": " + e.what());
    }
    if (!doc.is_array()) throw Error(Errc::kInvalidArgument, "taxonomy must be a JSON array of strings");
    std::vector<std::string> labels;
    for (const auto& v : doc) {
      if (!v.is_string()) throw Error(Errc::kInvalidArgument, "taxonomy must be a JSON array of strings");
      labels.push_back(v.get<std::string>());
    }
    return DisciplineTaxonomy(std::move(labels));
  }

  const std::vector<std::string>& labels() const { return labels_; }
  bool contains(std::string_view label) const { return index_.count(std::string(label)) != 0; }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One annotated seed item. `extra` carries unknown JSON fields verbatim.
struct QAInstance {
  std::string id;
  std::string text;
  std::string discipline;
  int difficulty = 1;  // 1..5 for H1..H5
  std::vector<std::string> kps;
  json extra = json::object();

  bool operator==(const QAInstance&) const = default;
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<QAInstance> instances, DisciplineTaxonomy taxonomy)
      : instances_(std::move(instances)), taxonomy_(std::move(taxonomy)) {
    reindex();
  }

  const std::vector<QAInstance>& instances() const { return instances_; }
  const DisciplineTaxonomy& taxonomy() const { return taxonomy_; }
  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  const QAInstance& operator[](std::size_t i) const { return instances_[i]; }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  // Distinct KP labels in first-appearance order.
  std::vector<std::string> kp_universe() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& inst : instances_)
      for (const auto& k : inst.kps)
        if (seen.insert(k).second) out.push_back(k);
    return out;
  }

 private:
  void reindex() {
    by_id_.clear();
    by_id_.reserve(instances_.size());
    for (std::size_t i = 0; i < instances_.size(); ++i)
      if (!by_id_.emplace(instances_[i].id, i).second)
        throw Error(Errc::kDuplicateId, "duplicate instance id " + instances_[i].id);
  }

  std::vector<QAInstance> instances_;
  DisciplineTaxonomy taxonomy_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Accepts 1..5 or "H1".."H5"; nullopt otherwise.
inline std::optional<int> parse_difficulty(const json& v) {
  if (v.is_number_integer()) {
    const auto h = v.get<std::int64_t>();
    if (h >= 1 && h <= 5) return static_cast<int>(h);
    return std::nullopt;
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s.size() == 2 && s[0] == 'H' && s[1] >= '1' && s[1] <= '5') return s[1] - '0';
  }
  return std::nullopt;
}

// Validate one JSONL line. Taxonomy membership is checked here; id
// uniqueness is checked by the caller, which sees all lines.
inline QAInstance parse_instance(std::string_view line, const DisciplineTaxonomy& taxonomy,
                                 std::size_t line_no) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformedLine, std::string("invalid JSON: ") + e.what(), line_no);
  }
  if (!doc.is_object()) throw Error(Errc::kMalformedLine, "line is not a JSON object", line_no);

  auto field = [&](const char* name) -> const json& {
    auto it = doc.find(name);
    if (it == doc.end()) throw Error(Errc::kMalformedLine, std::string("missing field '") + name + "'", line_no);
    return *it;
  };

  QAInstance inst;
  const json& id = field("id");
  if (!id.is_string() || id.get_ref<const std::string&>().empty())
    throw Error(Errc::kMalformedLine, "field 'id' must be a non-empty string", line_no);
  inst.id = id.get<std::string>();

  const json& body = field("text");
  if (!body.is_string()) throw Error(Errc::kMalformedLine, "field 'text' must be a string", line_no);
  inst.text = body.get<std::string>();

  const json& disc = field("discipline");
  if (!disc.is_string()) throw Error(Errc::kMalformedLine, "field 'discipline' must be a string", line_no);
  inst.discipline = disc.get<std::string>();
  if (!taxonomy.contains(inst.discipline))
    throw Error(Errc::kUnknownDiscipline, "discipline '" + inst.discipline + "' not in taxonomy", line_no);

  auto h = parse_difficulty(field("difficulty"));
  if (!h) throw Error(Errc::kMalformedLine, "field 'difficulty' must be 1..5 or \"H1\"..\"H5\"", line_no);
  inst.difficulty = *h;

  const json& kps = field("kps");
  if (!kps.is_array()) throw Error(Errc::kMalformedLine, "field 'kps' must be an array of strings", line_no);
  if (kps.empty()) throw Error(Errc::kEmptyKpSet, "field 'kps' is empty", line_no);
  std::unordered_set<std::string> seen;
  for (const auto& k : kps) {
    if (!k.is_string() || k.get_ref<const std::string&>().empty())
      throw Error(Errc::kMalformedLine, "field 'kps' must hold non-empty strings", line_no);
    if (!seen.insert(k.get<std::string>()).second)
      throw Error(Errc::kMalformedLine, "field 'kps' repeats '" + k.get<std::string>() + "'", line_no);
    inst.kps.push_back(k.get<std::string>());
  }

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& key = it.key();
    if (key == "id" || key == "text" || key == "discipline" || key == "difficulty" || key == "kps") continue;
    inst.extra[key] = it.value();
  }
  return inst;
}

struct LoadOptions {
  bool lenient = false;
  unsigned threads = default_threads();
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t loaded = 0;
  std::map<std::string, std::size_t> dropped;  // by error kind, lenient mode only
};

inline Corpus load_corpus_lines(const std::vector<std::string>& lines, const DisciplineTaxonomy& taxonomy,
                                const LoadOptions& options = {}, LoadReport* report = nullptr) {
  std::vector<std::optional<QAInstance>> parsed(lines.size());
  std::vector<std::optional<Error>> failures(lines.size());
  parallel_for(lines.size(), options.threads, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t i = begin; i < end; ++i) {
      if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
      try {
        parsed[i] = parse_instance(lines[i], taxonomy, i + 1);
      } catch (const Error& e) {
        failures[i] = e;
      }
    }
  });

  LoadReport local;
  std::vector<QAInstance> instances;
  instances.reserve(lines.size());
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (failures[i]) {
      if (!options.lenient) throw *failures[i];
      ++local.dropped[std::string(errc_name(failures[i]->code()))];
      ++local.lines;
      continue;
    }
    if (!parsed[i]) continue;
    ++local.lines;
    if (!ids.insert(parsed[i]->id).second) {
      if (!options.lenient) throw Error(Errc::kDuplicateId, "duplicate instance id " + parsed[i]->id, i + 1);
      ++local.dropped[std::string(errc_name(Errc::kDuplicateId))];
      continue;
    }
    instances.push_back(std::move(*parsed[i]));
  }
  local.loaded = instances.size();
  if (report) *report = local;
  return Corpus(std::move(instances), taxonomy);
}

inline Corpus load_corpus(const std::string& path, const DisciplineTaxonomy& taxonomy = {},
                          const LoadOptions& options = {}, LoadReport* report = nullptr) {
  return load_corpus_lines(text::read_lines(path), taxonomy, options, report);
}

// Canonical fields first in fixed order, then any pass-through fields.
inline std::string to_jsonl_line(const QAInstance& inst) {
  std::string out = "{\"id\":" + json(inst.id).dump() + ",\"text\":" + json(inst.text).dump() +
                    ",\"discipline\":" + json(inst.discipline).dump() +
                    ",\"difficulty\":" + std::to_string(inst.difficulty) + ",\"kps\":" + json(inst.kps).dump();
  if (inst.extra.is_object())
    for (auto it = inst.extra.begin(); it != inst.extra.end(); ++it)
      out += "," + json(it.key()).dump() + ":" + it.value().dump();
  out += "}";
  return out;
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  for (const auto& inst : corpus.instances()) out << to_jsonl_line(inst) << '\n';
}

inline double multi_kp_fraction(const Corpus& corpus) {
  if (corpus.empty()) throw Error(Errc::kEmptyCorpus, "corpus has no instances");
  std::size_t multi = 0;
  for (const auto& inst : corpus.instances()) multi += inst.kps.size() >= 2 ? 1 : 0;
  return static_cast<double>(multi) / static_cast<double>(corpus.size());
}

}  // namespace linksyn
