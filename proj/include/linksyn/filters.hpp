#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "linksyn/corpus.hpp"
#include "linksyn/digest.hpp"
#include "linksyn/embedding.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/graph.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/synthesis.hpp"
#include "linksyn/text.hpp"

namespace linksyn {

using json = nlohmann::json;

// Text of one benchmark line: a JSON record contributes its string leaves in document order, anything else is taken verbatim.
inline std::string benchmark_line_text(const std::string& line) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_structured()) return line;
  std::string out;
  auto walk = [&](auto& self, const json& v) -> void {
    if (v.is_string()) {
      if (!out.empty()) out += ' ';
      out += v.get<std::string>();
    } else if (v.is_structured()) {
      for (const auto& child : v) self(self, child);
    }
  };
  walk(walk, j);
  return out;
}

struct BenchmarkSource {
  std::string path;
  std::string sha256;
};

// Expands files and directories (recursively, sorted) into benchmark texts.
inline std::vector<std::string> load_benchmark_texts(const std::vector<std::string>& inputs,
                                                     std::vector<BenchmarkSource>* sources = nullptr) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::is_directory(in, ec)) {
      std::vector<std::string> found;
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file()) found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in, ec)) {
      files.push_back(in);
    } else {
      throw Error(Errc::kIoError, "benchmark input not found: " + in);
    }
  }
  std::vector<std::string> texts;
  for (const auto& f : files) {
    if (sources) sources->push_back({f, file_sha256_hex(f)});
    for (const auto& line : text::read_lines(f))
      if (line.find_first_not_of(" \t") != std::string::npos) texts.push_back(benchmark_line_text(line));
  }
  return texts;
}

inline std::vector<std::string> ngrams(std::string_view s, std::size_t n) {
  const auto toks = text::tokenize(s);
  std::vector<std::string> out;
  if (n == 0 || toks.size() < n) return out;
  out.reserve(toks.size() - n + 1);
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (std::size_t k = 1; k < n; ++k) g += ' ' + toks[i + k];
    out.push_back(std::move(g));
  }
  return out;
}

inline std::uint64_t gram_fingerprint(std::string_view gram) { return mix64(fnv1a64(gram)); }

inline constexpr char kNgramMagic[8] = {'L', 'K', 'S', 'N', 'G', 'R', 'A', 'M'};
inline constexpr std::uint32_t kNgramVersion = 1;

// Exact n-gram membership: 64-bit fingerprints narrow the search, the stored gram confirms.
class NgramIndex {
 public:
  NgramIndex() = default;

  static NgramIndex build(const std::vector<std::string>& texts, std::size_t n, unsigned threads = default_threads()) {
    if (n == 0) throw Error(Errc::kInvalidArgument, "n-gram length must be positive");
    NgramIndex idx;
    idx.n_ = n;
    std::vector<std::vector<std::pair<std::uint64_t, std::string>>> shards(std::max(1u, threads));
    parallel_for(texts.size(), threads, [&](std::size_t b, std::size_t e, unsigned shard) {
      auto& out = shards[shard];
      for (std::size_t i = b; i < e; ++i)
        for (auto& g : ngrams(texts[i], n)) {
          const auto fp = gram_fingerprint(g);
          out.emplace_back(fp, std::move(g));
        }
    });
    for (auto& s : shards) {
      idx.entries_.insert(idx.entries_.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
      s.clear();
      s.shrink_to_fit();
    }
    std::sort(idx.entries_.begin(), idx.entries_.end());
    idx.entries_.erase(std::unique(idx.entries_.begin(), idx.entries_.end()), idx.entries_.end());
    idx.entries_.shrink_to_fit();
    return idx;
  }

  std::size_t n() const { return n_; }
  std::size_t size() const { return entries_.size(); }
  const std::string& tokenizer() const { return tokenizer_; }
  std::vector<BenchmarkSource>& sources() { return sources_; }
  const std::vector<BenchmarkSource>& sources() const { return sources_; }

  bool contains(std::string_view gram) const {
    const auto fp = gram_fingerprint(gram);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), fp,
                               [](const auto& e, std::uint64_t v) { return e.first < v; });
    for (; it != entries_.end() && it->first == fp; ++it)
      if (it->second == gram) return true;
    return false;
  }

  // First n-gram of `s` present in the index.
  std::optional<std::string> first_hit(std::string_view s) const {
    for (auto& g : ngrams(s, n_))
      if (contains(g)) return g;
    return std::nullopt;
  }

  void save(const std::string& path) const {
    detail::ByteWriter payload;
    for (const auto& [fp, g] : entries_) payload.put(fp);
    for (const auto& [fp, g] : entries_) payload.put_string(g);
    json srcs = json::array();
    for (const auto& s : sources_) srcs.push_back({{"path", s.path}, {"sha256", s.sha256}});
    const std::string header =
        json{{"n", n_}, {"tokenizer", tokenizer_}, {"grams", entries_.size()}, {"sources", srcs}}.dump();
    detail::ByteWriter file;
    file.bytes().append(kNgramMagic, sizeof(kNgramMagic));
    file.put<std::uint32_t>(kNgramVersion);
    file.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
    file.bytes().append(header);
    file.put<std::uint64_t>(payload.bytes().size());
    file.bytes().append(payload.bytes());
    const auto digest = Sha256().update(header).update(payload.bytes()).finish();
    file.bytes().append(reinterpret_cast<const char*>(digest.data()), digest.size());
    text::write_file(path, file.bytes());
  }

  static NgramIndex load(const std::string& path) {
    const std::string data = text::read_file(path);
    detail::ByteReader in(data, "n-gram index");
    if (in.take(sizeof(kNgramMagic)) != std::string_view(kNgramMagic, sizeof(kNgramMagic)))
      throw Error(Errc::kCorruptFile, path + " is not an n-gram index (bad magic)");
    const auto version = in.get<std::uint32_t>();
    if (version != kNgramVersion)
      throw Error(Errc::kCorruptFile, "unsupported n-gram index version " + std::to_string(version));
    const auto header_text = in.take(in.get<std::uint32_t>());
    const auto payload = in.take(in.get<std::uint64_t>());
    const auto stored = in.take(32);
    if (!in.done()) throw Error(Errc::kCorruptFile, "trailing bytes after n-gram index checksum");
    const auto digest = Sha256().update(header_text).update(payload).finish();
    if (std::memcmp(digest.data(), stored.data(), 32) != 0)
      throw Error(Errc::kCorruptFile, "n-gram index checksum mismatch");
    NgramIndex idx;
    try {
      const json h = json::parse(header_text);
      idx.n_ = h.at("n").get<std::size_t>();
      idx.tokenizer_ = h.at("tokenizer").get<std::string>();
      for (const auto& s : h.value("sources", json::array()))
        idx.sources_.push_back({s.at("path").get<std::string>(), s.at("sha256").get<std::string>()});
      if (idx.tokenizer_ != text::kTokenizerVersion)
        throw Error(Errc::kCorruptFile, "n-gram index built with tokenizer '" + idx.tokenizer_ + "', expected '" +
                                            std::string(text::kTokenizerVersion) + "'; rebuild the index");
      const auto count = h.at("grams").get<std::uint64_t>();
      detail::ByteReader body(payload, "n-gram index");
      const auto fps = body.get_array<std::uint64_t>(count);
      idx.entries_.reserve(count);
      for (std::uint64_t i = 0; i < count; ++i) idx.entries_.emplace_back(fps[i], body.get_string());
      if (!body.done()) throw Error(Errc::kCorruptFile, "n-gram index payload has trailing bytes");
    } catch (const json::exception& e) {
      throw Error(Errc::kCorruptFile, std::string("n-gram index header: ") + e.what());
    }
    for (std::size_t i = 0; i < idx.entries_.size(); ++i)
      if (gram_fingerprint(idx.entries_[i].second) != idx.entries_[i].first ||
          (i && !(idx.entries_[i - 1] < idx.entries_[i])))
        throw Error(Errc::kCorruptFile, "n-gram index entries are inconsistent");
    return idx;
  }

 private:
  std::size_t n_ = 10;
  std::string tokenizer_{text::kTokenizerVersion};
  std::vector<std::pair<std::uint64_t, std::string>> entries_;
  std::vector<BenchmarkSource> sources_;
};

inline std::string record_check_text(const SynthRecord& r) { return r.question + " " + r.answer_text(); }

inline bool check_contamination(const SynthRecord& r, const NgramIndex& index) {
  return index.first_hit(record_check_text(r)).has_value();
}

struct FilterConfig {
  std::size_t min_question_tokens = 5;
  std::size_t min_answer_tokens = 1;
  double embed_threshold = 0.95;
  bool dedup = true;
};

struct Verdict {
  std::string id;
  std::vector<std::string> reasons;
  std::optional<double> max_benchmark_cosine;
  std::string detail;

  bool passed() const { return reasons.empty(); }
  json to_json() const {
    json j = {{"id", id}, {"passed", passed()}, {"reasons", reasons}};
    if (max_benchmark_cosine) j["max_benchmark_cosine"] = *max_benchmark_cosine;
    if (!detail.empty()) j["detail"] = detail;
    return j;
  }
};

struct EmbeddingCheck {
  Embedder* embedder = nullptr;
  const std::vector<std::string>* benchmark_texts = nullptr;
};

struct FilterReport {
  std::vector<SynthRecord> kept;
  std::vector<Verdict> verdicts;
  std::map<std::string, std::size_t> reason_counts;
  std::vector<std::string> warnings;

  json summary() const {
    return {{"records", verdicts.size()}, {"kept", kept.size()}, {"reasons", reason_counts}, {"warnings", warnings}};
  }
};

inline std::string dedup_key(const SynthRecord& r) {
  std::string key;
  for (const auto& t : text::tokenize(r.question)) key += t + ' ';
  key += '\x1f';
  for (const auto& t : text::tokenize(r.answer_text())) key += t + ' ';
  return key;
}

// Applies every enabled check to every record. `unparsable` lists (line, raw) pairs that never became records.
inline FilterReport filter_records(const std::vector<SynthRecord>& records, const FilterConfig& cfg,
                                   const NgramIndex* index = nullptr, EmbeddingCheck embed = {},
                                   const std::vector<std::pair<std::size_t, std::string>>& unparsable = {}) {
  FilterReport rep;
  rep.verdicts.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto& v = rep.verdicts[i];
    v.id = r.id;
    if (text::tokenize(r.question).size() < cfg.min_question_tokens ||
        text::tokenize(r.answer_text()).size() < cfg.min_answer_tokens)
      v.reasons.push_back("TooShort");
    if (index) {
      if (auto hit = index->first_hit(record_check_text(r))) {
        v.reasons.push_back("NgramContamination");
        v.detail = *hit;
      }
    }
  }

  if (embed.embedder && embed.benchmark_texts) {
    try {
      EmbeddingIndex bench(embed.embedder->embed(*embed.benchmark_texts));
      std::vector<std::string> texts;
      texts.reserve(records.size());
      for (const auto& r : records) texts.push_back(record_check_text(r));
      const auto vecs = embed.embedder->embed(texts);
      for (std::size_t i = 0; i < records.size(); ++i) {
        const double best = bench.size() ? bench.max_cosine(vecs[i]).first : 0.0;
        rep.verdicts[i].max_benchmark_cosine = best;
        if (best >= cfg.embed_threshold) rep.verdicts[i].reasons.push_back("EmbeddingContamination");
      }
    } catch (const Error& e) {
      if (e.code() != Errc::kEmbedderUnavailable) throw;
      rep.warnings.push_back(std::string("EmbedderUnavailable: embedding filter skipped: ") + e.what());
    }
  }

  if (cfg.dedup) {
    // smallest id wins within each duplicate class
    std::unordered_map<std::string, std::size_t> winner;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto [it, fresh] = winner.emplace(dedup_key(records[i]), i);
      if (!fresh && records[i].id < records[it->second].id) it->second = i;
    }
    for (std::size_t i = 0; i < records.size(); ++i)
      if (winner.at(dedup_key(records[i])) != i) rep.verdicts[i].reasons.push_back("DuplicateOfOutput");
  }

  for (const auto& [line, raw] : unparsable) {
    Verdict v;
    v.id = "line:" + std::to_string(line);
    v.reasons.push_back("NonParsable");
    rep.verdicts.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < rep.verdicts.size(); ++i) {
    for (const auto& reason : rep.verdicts[i].reasons) ++rep.reason_counts[reason];
    if (i < records.size() && rep.verdicts[i].passed()) rep.kept.push_back(records[i]);
  }
  return rep;
}

inline void save_verdicts(const std::string& path, const std::vector<Verdict>& verdicts) {
  std::string out;
  for (const auto& v : verdicts) out += v.to_json().dump() + "\n";
  text::write_file(path, out);
}

struct SimilarityStats {
  std::size_t groups = 0;
  std::size_t groups_with_pairs = 0;
  std::size_t records = 0;
  double mean_pairwise = 0;
  double mean_max_seed = 0;
  double mean_min_seed = 0;

  json to_json() const {
    auto num = [](std::size_t n, double v) { return n ? json(v) : json(nullptr); };
    return {{"groups", groups},
            {"groups_with_pairs", groups_with_pairs},
            {"records", records},
            {"mean_pairwise_similarity", num(groups_with_pairs, mean_pairwise)},
            {"mean_max_seed_similarity", num(groups, mean_max_seed)},
            {"mean_min_seed_similarity", num(groups, mean_min_seed)}};
  }
};

struct SimilarityReport {
  SimilarityStats overall;
  std::map<std::size_t, SimilarityStats> by_seed_count;
  std::string embedder_id;

  json to_json() const {
    json by = json::object();
    for (const auto& [k, s] : by_seed_count) by[std::to_string(k)] = s.to_json();
    return {{"embedder", embedder_id}, {"overall", overall.to_json()}, {"by_seed_count", by}};
  }
};

// Per group: mean pairwise cosine among its records, and for each record the
// max and min cosine to the group's seeds. Group values are averaged.
inline SimilarityReport similarity_report(const std::vector<SynthRecord>& records, const Corpus& corpus,
                                          Embedder& embedder) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].provenance.group_id].push_back(i);

  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(record_check_text(r));
  std::map<std::string, std::size_t> seed_slot;
  for (const auto& r : records)
    for (const auto& id : r.provenance.seed_ids)
      if (!seed_slot.count(id)) {
        const auto pos = corpus.find(id);
        if (!pos) throw Error(Errc::kInvalidArgument, "seed id '" + id + "' not found in corpus");
        seed_slot.emplace(id, texts.size());
        texts.push_back(corpus[*pos].text);
      }
  const auto vecs = embedder.embed(texts);

  struct Acc {
    SimilarityStats s;
    double pair_sum = 0, max_sum = 0, min_sum = 0;
  };
  Acc overall;
  std::map<std::size_t, Acc> by;
  for (const auto& [gid, members] : groups) {
    const auto& seeds = records[members.front()].provenance.seed_ids;
    std::optional<double> pairwise;
    if (members.size() >= 2) {
      double sum = 0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b, ++pairs) sum += cosine(vecs[members[a]], vecs[members[b]]);
      pairwise = sum / pairs;
    }
    double max_mean = 0, min_mean = 0;
    if (!seeds.empty()) {
      for (auto m : members) {
        double hi = -1e300, lo = 1e300;
        for (const auto& sid : seeds) {
          const double c = cosine(vecs[m], vecs[seed_slot.at(sid)]);
          hi = std::max(hi, c);
          lo = std::min(lo, c);
        }
        max_mean += hi;
        min_mean += lo;
      }
      max_mean /= members.size();
      min_mean /= members.size();
    }
    for (Acc* acc : {&overall, &by[seeds.size()]}) {
      acc->s.records += members.size();
      if (pairwise) {
        ++acc->s.groups_with_pairs;
        acc->pair_sum += *pairwise;
      }
      if (!seeds.empty()) {
        ++acc->s.groups;
        acc->max_sum += max_mean;
        acc->min_sum += min_mean;
      }
    }
  }
  auto finish = [](Acc& a) {
    if (a.s.groups_with_pairs) a.s.mean_pairwise = a.pair_sum / a.s.groups_with_pairs;
    if (a.s.groups) {
      a.s.mean_max_seed = a.max_sum / a.s.groups;
      a.s.mean_min_seed = a.min_sum / a.s.groups;
    }
    return a.s;
  };
  SimilarityReport rep;
  rep.embedder_id = embedder.id();
  rep.overall = finish(overall);
  for (auto& [k, a] : by) rep.by_seed_count[k] = finish(a);
  return rep;
}

}  // namespace linksyn
