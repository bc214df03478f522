#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "linksyn/errors.hpp"
#include "linksyn/graph.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/rng.hpp"
#include "linksyn/sampling.hpp"

namespace linksyn {

// Target laws for seed attributes: ρ_h over H1..H5 and ρ_s over disciplines.
struct AttributeDistribution {
  std::array<double, 5> difficulty{0.10, 0.15, 0.25, 0.25, 0.25};
  std::vector<std::pair<std::string, double>> discipline;

  void validate() const {
    double sum = 0;
    for (double p : difficulty) {
      if (!(p >= 0.0)) throw Error(Errc::kInvalidArgument, "difficulty probabilities must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(Errc::kInvalidArgument, "difficulty probabilities sum to " + std::to_string(sum) + ", not 1");
    if (discipline.empty()) throw Error(Errc::kInvalidArgument, "discipline distribution is empty");
    sum = 0;
    for (const auto& [label, p] : discipline) {
      if (!(p >= 0.0)) throw Error(Errc::kInvalidArgument, "discipline probabilities must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(Errc::kInvalidArgument, "discipline probabilities sum to " + std::to_string(sum) + ", not 1");
  }

  static AttributeDistribution point_mass(std::string discipline_label, std::array<double, 5> h = {0.10, 0.15, 0.25, 0.25, 0.25}) {
    AttributeDistribution d;
    d.difficulty = h;
    d.discipline = {{std::move(discipline_label), 1.0}};
    return d;
  }
};

inline std::array<double, 5> parse_difficulty_law(const std::string& csv) {
  std::array<double, 5> out{};
  std::stringstream ss(csv);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 5) throw Error(Errc::kInvalidArgument, "difficulty law needs exactly 5 values");
    try {
      out[i++] = std::stod(item);
    } catch (const std::exception&) {
      throw Error(Errc::kInvalidArgument, "bad difficulty probability '" + item + "'");
    }
  }
  if (i != 5) throw Error(Errc::kInvalidArgument, "difficulty law needs exactly 5 values");
  return out;
}

// Discipline shares of the graph's instances, in the graph's discipline order.
inline std::vector<std::pair<std::string, double>> empirical_discipline_law(const KpGraph& g) {
  std::vector<std::size_t> counts(g.disciplines().size(), 0);
  for (InstanceIndex i = 0; i < g.instance_count(); ++i) ++counts[g.instance_discipline_index(i)];
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t d = 0; d < counts.size(); ++d)
    out.emplace_back(g.disciplines()[d], static_cast<double>(counts[d]) / static_cast<double>(g.instance_count()));
  return out;
}

inline std::vector<std::pair<std::string, double>> discipline_law_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::kInvalidArgument, "discipline distribution must be a JSON object");
  std::vector<std::pair<std::string, double>> out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_number()) throw Error(Errc::kInvalidArgument, "discipline probability must be a number");
    out.emplace_back(it.key(), it.value().get<double>());
  }
  return out;
}

struct Targets {
  int difficulty = 1;
  std::string discipline;
};

// h ~ ρ_h and s ~ ρ_s, independently, by inverse CDF on one uniform each.
inline Targets draw_targets(const AttributeDistribution& dist, RandomStream& rng) {
  Targets t;
  auto pick = [&](auto weight_of, std::size_t n) {
    const double u = rng.uniform();
    double run = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weight_of(i);
      if (w <= 0.0) continue;
      last_positive = i;
      run += w;
      if (u < run) return i;
    }
    return last_positive;
  };
  t.difficulty = static_cast<int>(pick([&](std::size_t i) { return dist.difficulty[i]; }, 5)) + 1;
  t.discipline = dist.discipline[pick([&](std::size_t i) { return dist.discipline[i].second; }, dist.discipline.size())].first;
  return t;
}

// Per-node candidate orderings for instance selection, built once per graph:
// each Φ row sorted by (difficulty, corpus position) and by
// (discipline, difficulty, corpus position).
class CandidateIndex {
 public:
  explicit CandidateIndex(const KpGraph& graph, unsigned threads = default_threads())
      : graph_(graph), by_difficulty_(graph.posting_count()), by_discipline_(graph.posting_count()) {
    parallel_for(graph.node_count(), threads, [&](std::size_t begin, std::size_t end, unsigned) {
      for (std::size_t v = begin; v < end; ++v) {
        const auto phi = graph.phi(static_cast<NodeId>(v));
        const std::size_t base = static_cast<std::size_t>(phi.data() - graph.phi(0).data());
        auto d_row = by_difficulty_.begin() + static_cast<std::ptrdiff_t>(base);
        auto s_row = by_discipline_.begin() + static_cast<std::ptrdiff_t>(base);
        std::copy(phi.begin(), phi.end(), d_row);
        std::copy(phi.begin(), phi.end(), s_row);
        std::stable_sort(d_row, d_row + static_cast<std::ptrdiff_t>(phi.size()), [&](InstanceIndex a, InstanceIndex b) {
          return graph.instance_difficulty(a) < graph.instance_difficulty(b);
        });
        std::stable_sort(s_row, s_row + static_cast<std::ptrdiff_t>(phi.size()), [&](InstanceIndex a, InstanceIndex b) {
          return std::pair(graph.instance_discipline_index(a), graph.instance_difficulty(a)) <
                 std::pair(graph.instance_discipline_index(b), graph.instance_difficulty(b));
        });
      }
    });
  }

  const KpGraph& graph() const { return graph_; }

  // Among Φ(node) minus `excluded`, restrict to
  // discipline `discipline` when that leaves anything, then take the smallest
  // |h_D − h|, ties to the earlier corpus position.
  std::optional<InstanceIndex> select(NodeId node, int h, std::optional<std::uint16_t> discipline,
                                      std::span<const InstanceIndex> excluded) const {
    const auto phi = graph_.phi(node);
    const std::size_t base = static_cast<std::size_t>(phi.data() - graph_.phi(0).data());
    auto is_excluded = [&](InstanceIndex i) { return std::find(excluded.begin(), excluded.end(), i) != excluded.end(); };
    auto in_phi = [&](InstanceIndex i) { return std::binary_search(phi.begin(), phi.end(), i); };

    if (discipline) {
      const auto* row = by_discipline_.data() + base;
      auto [lo, hi] = std::equal_range(row, row + phi.size(), *discipline, DisciplineKey{graph_});
      std::size_t excluded_here = 0;
      for (auto e : excluded)
        if (graph_.instance_discipline_index(e) == *discipline && in_phi(e)) ++excluded_here;
      if (static_cast<std::size_t>(hi - lo) > excluded_here) return closest(lo, hi, h, is_excluded);
    }
    std::size_t excluded_here = 0;
    for (auto e : excluded)
      if (in_phi(e)) ++excluded_here;
    if (phi.size() <= excluded_here) return std::nullopt;
    const auto* row = by_difficulty_.data() + base;
    return closest(row, row + phi.size(), h, is_excluded);
  }

 private:
  struct DisciplineKey {
    const KpGraph& g;
    bool operator()(InstanceIndex a, std::uint16_t d) const { return g.instance_discipline_index(a) < d; }
    bool operator()(std::uint16_t d, InstanceIndex a) const { return d < g.instance_discipline_index(a); }
  };
  struct DifficultyKey {
    const KpGraph& g;
    bool operator()(InstanceIndex a, int h) const { return g.instance_difficulty(a) < h; }
    bool operator()(int h, InstanceIndex a) const { return h < g.instance_difficulty(a); }
  };

  // [lo, hi) sorted by difficulty then corpus position, with at least one
  // non-excluded entry.
  template <typename Excluded>
  std::optional<InstanceIndex> closest(const InstanceIndex* lo, const InstanceIndex* hi, int h,
                                       Excluded is_excluded) const {
    auto first_free = [&](int level) -> std::optional<InstanceIndex> {
      if (level < 1 || level > 5) return std::nullopt;
      auto [a, b] = std::equal_range(lo, hi, level, DifficultyKey{graph_});
      for (auto it = a; it != b; ++it)
        if (!is_excluded(*it)) return *it;
      return std::nullopt;
    };
    for (int d = 0; d <= 4; ++d) {
      auto below = first_free(h - d);
      auto above = d == 0 ? std::nullopt : first_free(h + d);
      if (below && above) return std::min(*below, *above);
      if (below) return below;
      if (above) return above;
    }
    return std::nullopt;
  }

  const KpGraph& graph_;
  std::vector<InstanceIndex> by_difficulty_;
  std::vector<InstanceIndex> by_discipline_;
};

// Label-level convenience wrapper; throws NoCandidate when Φ(kp) is exhausted.
inline std::string select_instance(const CandidateIndex& index, std::string_view kp, int h, std::string_view discipline,
                                   const std::vector<std::string>& excluded_ids = {}) {
  const KpGraph& g = index.graph();
  const NodeId node = g.require(kp);
  std::vector<InstanceIndex> excluded;
  for (const auto& id : excluded_ids)
    for (auto i : g.phi(node))
      if (g.instance_id(i) == id) excluded.push_back(i);
  auto pick = index.select(node, h, g.discipline_index(discipline), excluded);
  if (!pick) throw Error(Errc::kNoCandidate, "no remaining instance for '" + std::string(kp) + "'");
  return g.instance_id(*pick);
}

struct SeedGroup {
  std::vector<std::string> kps;
  int target_h = 1;
  std::string target_s;
  std::vector<std::string> seed_ids;
  std::vector<std::string> skipped;

  bool operator==(const SeedGroup&) const = default;

  json to_json() const {
    return {{"kps", kps}, {"target_h", target_h}, {"target_s", target_s}, {"seed_ids", seed_ids}, {"skipped", skipped}};
  }
};

inline std::string seed_group_to_json_line(const SeedGroup& g) {
  return "{\"kps\":" + json(g.kps).dump() + ",\"target_h\":" + std::to_string(g.target_h) +
         ",\"target_s\":" + json(g.target_s).dump() + ",\"seed_ids\":" + json(g.seed_ids).dump() +
         ",\"skipped\":" + json(g.skipped).dump() + "}";
}

inline SeedGroup seed_group_from_json(const json& doc, std::size_t line_no = 0) {
  try {
    SeedGroup g;
    g.kps = doc.at("kps").get<std::vector<std::string>>();
    g.target_h = doc.at("target_h").get<int>();
    g.target_s = doc.at("target_s").get<std::string>();
    g.seed_ids = doc.at("seed_ids").get<std::vector<std::string>>();
    g.skipped = doc.value("skipped", std::vector<std::string>{});
    if (g.target_h < 1 || g.target_h > 5) throw Error(Errc::kMalformedLine, "target_h must be 1..5", line_no);
    if (g.seed_ids.size() + g.skipped.size() != g.kps.size())
      throw Error(Errc::kMalformedLine, "seed_ids + skipped must cover every path node", line_no);
    return g;
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformedLine, std::string("seed group: ") + e.what(), line_no);
  }
}

inline void save_seed_groups(const std::string& path, const std::vector<SeedGroup>& groups) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  for (const auto& g : groups) out << seed_group_to_json_line(g) << '\n';
}

inline std::vector<SeedGroup> load_seed_groups(const std::string& path) {
  std::vector<SeedGroup> out;
  const auto lines = text::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(seed_group_from_json(json::parse(lines[i]), i + 1));
    } catch (const json::exception& e) {
      throw Error(Errc::kMalformedLine, e.what(), i + 1);
    }
  }
  return out;
}

struct SeedGroupResult {
  std::vector<SeedGroup> groups;
  std::size_t duplicates_dropped = 0;
  std::size_t empty_groups = 0;  // groups emitted with no seeds at all
};

// Attribute-guided selection along each path. Path i draws its targets from
// stream (seed, "targets", i); groups whose seed sequence repeats an earlier
// group's are dropped.
inline SeedGroupResult build_seed_groups(const CandidateIndex& index, const std::vector<Path>& paths,
                                         const AttributeDistribution& dist, std::uint64_t rng_seed,
                                         unsigned threads = default_threads()) {
  dist.validate();
  const KpGraph& g = index.graph();
  struct Draft {
    Targets targets;
    std::vector<InstanceIndex> seeds;
    std::vector<NodeId> skipped;
  };
  std::vector<Draft> drafts(paths.size());
  parallel_for(paths.size(), threads, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t i = begin; i < end; ++i) {
      auto rng = make_stream(rng_seed, "targets", i);
      Draft& d = drafts[i];
      d.targets = draw_targets(dist, rng);
      const auto disc = g.discipline_index(d.targets.discipline);
      for (NodeId node : paths[i].nodes) {
        auto pick = index.select(node, d.targets.difficulty, disc, d.seeds);
        if (pick)
          d.seeds.push_back(*pick);
        else
          d.skipped.push_back(node);
      }
    }
  });

  SeedGroupResult result;
  result.groups.reserve(paths.size());
  std::unordered_set<std::vector<InstanceIndex>, SequenceHash> seen;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    Draft& d = drafts[i];
    if (!seen.insert(d.seeds).second) {
      ++result.duplicates_dropped;
      continue;
    }
    SeedGroup group;
    group.kps = paths[i].labels(g);
    group.target_h = d.targets.difficulty;
    group.target_s = d.targets.discipline;
    for (auto s : d.seeds) group.seed_ids.push_back(g.instance_id(s));
    for (auto v : d.skipped) group.skipped.push_back(g.label(v));
    if (group.seed_ids.empty()) ++result.empty_groups;
    result.groups.push_back(std::move(group));
  }
  return result;
}

}  // namespace linksyn
