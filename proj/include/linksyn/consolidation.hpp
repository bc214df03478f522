#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "linksyn/corpus.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/text.hpp"

namespace linksyn {

using Cluster = std::vector<std::string>;

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

struct ConsolidationConfig {
  std::size_t prefix_len = 3;
  std::size_t min_edit_threshold = 3;
  double edit_length_ratio = 0.5;
  double cosine_threshold = 0.9;
  unsigned threads = default_threads();
};

// Largest edit distance two labels may have and still share a surface cluster.
inline std::size_t surface_threshold(std::size_t len_a, std::size_t len_b, const ConsolidationConfig& cfg = {}) {
  const auto scaled = static_cast<std::size_t>(std::floor(cfg.edit_length_ratio * static_cast<double>(std::max(len_a, len_b))));
  return std::max(cfg.min_edit_threshold, scaled);
}

// Stage 1: group case-folded labels by their first `prefix_len` code points,
// then greedily grow clusters in sorted order, admitting a label only if it is
// within threshold of every member already there.
inline std::vector<Cluster> stage1_surface_cluster(const std::vector<std::string>& kps,
                                                   const ConsolidationConfig& cfg = {}) {
  struct Item {
    std::string raw;
    std::string lowered;
    std::u32string points;
  };
  std::map<std::u32string, std::vector<Item>> groups;
  {
    std::set<std::string> unique(kps.begin(), kps.end());
    for (const auto& raw : unique) {
      Item item{raw, text::ascii_lower(raw), {}};
      item.points = text::decode_utf8(item.lowered);
      std::u32string key = item.points.substr(0, std::min(cfg.prefix_len, item.points.size()));
      groups[key].push_back(std::move(item));
    }
  }

  std::vector<std::vector<Item>*> ordered;
  ordered.reserve(groups.size());
  for (auto& [key, items] : groups) ordered.push_back(&items);

  std::vector<std::vector<Cluster>> per_group(ordered.size());
  parallel_for(ordered.size(), cfg.threads, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t g = begin; g < end; ++g) {
      auto& items = *ordered[g];
      std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        return std::tie(a.lowered, a.raw) < std::tie(b.lowered, b.raw);
      });
      std::vector<std::vector<const Item*>> clusters;
      for (const auto& item : items) {
        bool placed = false;
        for (auto& cluster : clusters) {
          const bool fits = std::all_of(cluster.begin(), cluster.end(), [&](const Item* member) {
            const std::size_t limit = surface_threshold(item.points.size(), member->points.size(), cfg);
            const std::size_t len_gap = item.points.size() > member->points.size()
                                            ? item.points.size() - member->points.size()
                                            : member->points.size() - item.points.size();
            return len_gap <= limit && text::edit_distance(item.points, member->points) <= limit;
          });
          if (fits) {
            cluster.push_back(&item);
            placed = true;
            break;
          }
        }
        if (!placed) clusters.push_back({&item});
      }
      for (auto& cluster : clusters) {
        Cluster out;
        for (const Item* m : cluster) out.push_back(m->raw);
        per_group[g].push_back(std::move(out));
      }
    }
  });

  std::vector<Cluster> result;
  for (auto& g : per_group)
    for (auto& c : g) result.push_back(std::move(c));
  return result;
}

// Sparse co-occurrence counts of one KP against every other KP; entries are
// sorted by neighbor label, strictly positive, and never include the KP itself.
struct CooccurrenceVector {
  std::string kp;
  std::vector<std::pair<std::string, std::uint64_t>> counts;
};

inline std::vector<CooccurrenceVector> cooccurrence_vectors(const Corpus& corpus) {
  const auto universe = corpus.kp_universe();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < universe.size(); ++i) index.emplace(universe[i], i);
  std::vector<std::map<std::string, std::uint64_t>> acc(universe.size());
  for (const auto& inst : corpus.instances())
    for (const auto& a : inst.kps)
      for (const auto& b : inst.kps)
        if (a != b) ++acc[index.at(a)][b];
  std::vector<CooccurrenceVector> out(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i) {
    out[i].kp = universe[i];
    out[i].counts.assign(acc[i].begin(), acc[i].end());
  }
  return out;
}

inline double cosine_similarity(const CooccurrenceVector& a, const CooccurrenceVector& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [_, c] : a.counts) na += static_cast<double>(c) * static_cast<double>(c);
  for (const auto& [_, c] : b.counts) nb += static_cast<double>(c) * static_cast<double>(c);
  auto ia = a.counts.begin();
  auto ib = b.counts.begin();
  while (ia != a.counts.end() && ib != b.counts.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += static_cast<double>(ia->second) * static_cast<double>(ib->second);
      ++ia;
      ++ib;
    }
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Stage 2: single-linkage over the graph of pairs with cosine > threshold.
// Candidate pairs come from an inverted index over neighbor labels, so only
// vectors sharing support are ever compared. Clusters are ordered by their
// first member's input position; members keep input order.
inline std::vector<Cluster> stage2_cooccurrence_cluster(const std::vector<CooccurrenceVector>& vectors,
                                                        double threshold = 0.9,
                                                        unsigned threads = default_threads()) {
  const std::size_t n = vectors.size();
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, double>>> postings;
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [nb, c] : vectors[i].counts) {
      postings[nb].emplace_back(i, static_cast<double>(c));
      norms[i] += static_cast<double>(c) * static_cast<double>(c);
    }
    norms[i] = std::sqrt(norms[i]);
  }

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> shard_pairs(std::max(1u, threads));
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end, unsigned shard) {
    std::unordered_map<std::size_t, double> dots;
    for (std::size_t i = begin; i < end; ++i) {
      if (norms[i] == 0) continue;
      dots.clear();
      for (const auto& [nb, c] : vectors[i].counts)
        for (const auto& [j, cj] : postings.at(nb))
          if (j > i) dots[j] += static_cast<double>(c) * cj;
      for (const auto& [j, dot] : dots)
        if (dot / (norms[i] * norms[j]) > threshold) shard_pairs[shard].emplace_back(i, j);
    }
  });

  UnionFind uf(n);
  for (const auto& pairs : shard_pairs)
    for (const auto& [a, b] : pairs) uf.unite(a, b);

  std::vector<Cluster> clusters;
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = uf.find(i);
    auto [it, fresh] = slot.emplace(root, clusters.size());
    if (fresh) clusters.emplace_back();
    clusters[it->second].push_back(vectors[i].kp);
  }
  return clusters;
}

// Pluggable canonical-label generator (e.g. an LLM that names a cluster).
// Implementations throw Error(kSummarizerUnavailable) when they cannot answer.
class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string summarize(const Cluster& cluster) = 0;
};

using KpFrequency = std::unordered_map<std::string, std::size_t>;

inline KpFrequency kp_frequency(const Corpus& corpus) {
  KpFrequency freq;
  for (const auto& inst : corpus.instances())
    for (const auto& k : inst.kps) ++freq[k];
  return freq;
}

// Default rule: highest frequency, then fewest code points, then byte order.
inline std::string choose_canonical(const Cluster& cluster, const KpFrequency& freq,
                                    Summarizer* summarizer = nullptr, bool fallback = true) {
  if (cluster.empty()) throw Error(Errc::kInvalidArgument, "cannot choose a canonical label for an empty cluster");
  if (cluster.size() == 1) return cluster.front();
  if (summarizer) {
    try {
      std::string label = summarizer->summarize(cluster);
      if (!label.empty()) return label;
      throw Error(Errc::kSummarizerUnavailable, "summarizer returned an empty label");
    } catch (const Error& e) {
      if (!fallback || e.code() != Errc::kSummarizerUnavailable) throw;
    }
  }
  auto count = [&](const std::string& k) {
    auto it = freq.find(k);
    return it == freq.end() ? std::size_t{0} : it->second;
  };
  return *std::min_element(cluster.begin(), cluster.end(), [&](const std::string& a, const std::string& b) {
    const auto fa = count(a), fb = count(b);
    if (fa != fb) return fa > fb;
    const auto la = text::utf8_length(a), lb = text::utf8_length(b);
    if (la != lb) return la < lb;
    return a < b;
  });
}

inline std::string choose_canonical(const Cluster& cluster, const Corpus& corpus, Summarizer* summarizer = nullptr,
                                    bool fallback = true) {
  return choose_canonical(cluster, kp_frequency(corpus), summarizer, fallback);
}

class KpAliasMap {
 public:
  KpAliasMap() = default;

  // Labels absent from the map are their own canonical form.
  const std::string& canonical(const std::string& label) const {
    auto it = map_.find(label);
    return it == map_.end() ? label : it->second;
  }

  void set(const std::string& raw, const std::string& canonical) { map_[raw] = canonical; }

  const std::map<std::string, std::string>& entries() const { return map_; }
  bool empty() const { return map_.empty(); }

  bool is_idempotent() const {
    for (const auto& [raw, canon] : map_)
      if (canonical(canon) != canon) return false;
    return true;
  }

  // Resolve chains (a->b, b->c) so every entry points at a fixed point.
  // A cycle collapses onto its smallest label.
  void close() {
    for (auto& [raw, canon] : map_) {
      std::set<std::string> seen{raw};
      std::string cur = canon;
      while (true) {
        auto it = map_.find(cur);
        if (it == map_.end() || it->second == cur) break;
        if (!seen.insert(cur).second) {
          cur = *seen.begin();
          break;
        }
        cur = it->second;
      }
      canon = cur;
    }
    for (const auto& [raw, canon] : std::map<std::string, std::string>(map_))
      if (map_.count(canon) == 0) map_[canon] = canon;
  }

  // (canonical, members) ordered by canonical label.
  std::vector<std::pair<std::string, Cluster>> clusters() const {
    std::map<std::string, Cluster> grouped;
    for (const auto& [raw, canon] : map_) grouped[canon].push_back(raw);
    return {grouped.begin(), grouped.end()};
  }

  json to_json() const { return json{{"canonical", map_}}; }

  static KpAliasMap from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("canonical") || !doc["canonical"].is_object())
      throw Error(Errc::kCorruptFile, "alias map needs a \"canonical\" object");
    KpAliasMap m;
    for (auto it = doc["canonical"].begin(); it != doc["canonical"].end(); ++it) {
      if (!it.value().is_string()) throw Error(Errc::kCorruptFile, "alias map values must be strings");
      m.map_[it.key()] = it.value().get<std::string>();
    }
    return m;
  }

  bool operator==(const KpAliasMap&) const = default;

 private:
  std::map<std::string, std::string> map_;
};

inline void save_alias_map(const std::string& path, const KpAliasMap& map) {
  text::write_file(path, map.to_json().dump(2) + "\n");
}

inline KpAliasMap load_alias_map(const std::string& path) {
  try {
    return KpAliasMap::from_json(json::parse(text::read_file(path)));
  } catch (const json::exception& e) {
    throw Error(Errc::kCorruptFile, path + ": " + e.what());
  }
}

inline Corpus apply_alias_map(const Corpus& corpus, const KpAliasMap& map) {
  std::vector<QAInstance> out = corpus.instances();
  for (auto& inst : out) {
    std::vector<std::string> kps;
    std::unordered_set<std::string> seen;
    for (const auto& k : inst.kps) {
      const auto& c = map.canonical(k);
      if (seen.insert(c).second) kps.push_back(c);
    }
    inst.kps = std::move(kps);
  }
  return Corpus(std::move(out), corpus.taxonomy());
}

struct ConsolidationResult {
  KpAliasMap map;
  Corpus corpus;
  std::size_t kps_before = 0;
  std::size_t kps_after_stage1 = 0;
  std::size_t kps_after = 0;
};

// Full two-stage consolidation: surface clusters, rewrite, co-occurrence
// clusters over the rewritten corpus, rewrite again.
inline ConsolidationResult consolidate(const Corpus& corpus, const ConsolidationConfig& cfg = {},
                                       Summarizer* summarizer = nullptr, bool fallback = true) {
  ConsolidationResult result;
  const auto universe = corpus.kp_universe();
  result.kps_before = universe.size();

  KpAliasMap stage1;
  {
    const auto freq = kp_frequency(corpus);
    for (const auto& cluster : stage1_surface_cluster(universe, cfg)) {
      const std::string canon = choose_canonical(cluster, freq, summarizer, fallback);
      for (const auto& member : cluster) stage1.set(member, canon);
    }
    stage1.close();
  }
  Corpus rewritten = apply_alias_map(corpus, stage1);
  result.kps_after_stage1 = rewritten.kp_universe().size();

  KpAliasMap stage2;
  {
    const auto freq = kp_frequency(rewritten);
    const auto vectors = cooccurrence_vectors(rewritten);
    for (const auto& cluster : stage2_cooccurrence_cluster(vectors, cfg.cosine_threshold, cfg.threads)) {
      const std::string canon = choose_canonical(cluster, freq, summarizer, fallback);
      for (const auto& member : cluster) stage2.set(member, canon);
    }
    stage2.close();
  }

  for (const auto& raw : universe) result.map.set(raw, stage2.canonical(stage1.canonical(raw)));
  result.map.close();
  result.corpus = apply_alias_map(corpus, result.map);
  result.kps_after = result.corpus.kp_universe().size();
  return result;
}

}  // namespace linksyn
