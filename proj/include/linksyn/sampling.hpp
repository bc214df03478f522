#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "linksyn/discrete.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/graph.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/rng.hpp"

namespace linksyn {

// ---------------------------------------------------------------------------
// Knowledge distributions and the KV objective
// ---------------------------------------------------------------------------

struct Distribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  bool is_valid(double tol = 1e-9) const {
    double sum = 0;
    for (double p : probs) {
      if (!(p >= 0.0)) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
  }
};

// p^a: uniform over all KPs, the coverage-maximising law.
inline Distribution uniform_distribution(std::size_t n) {
  if (n == 0) throw Error(Errc::kEmptyGraph, "graph has no knowledge points");
  return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
}
inline Distribution uniform_distribution(const KpGraph& g) { return uniform_distribution(g.node_count()); }

// p^b: |Φ(k)| / Σ_j |Φ(k_j)|.
inline Distribution empirical_distribution(const KpGraph& g) {
  if (g.node_count() == 0 || g.posting_count() == 0) throw Error(Errc::kEmptyGraph, "graph has no postings");
  Distribution d;
  d.probs.resize(g.node_count());
  const auto total = static_cast<double>(g.posting_count());
  for (NodeId v = 0; v < g.node_count(); ++v) d.probs[v] = static_cast<double>(g.node_freq(v)) / total;
  return d;
}

// Σ_i [1 − (1 − p_i)^M]: expected number of distinct KPs hit by M draws.
inline double expected_coverage(const Distribution& p, std::uint64_t draws) {
  if (draws == 0) throw Error(Errc::kInvalidArgument, "expected_coverage needs at least one draw");
  double total = 0.0;
  const auto m = static_cast<double>(draws);
  for (double pi : p.probs) total += -std::expm1(m * std::log1p(-pi));
  return total;
}

enum class Divergence { kSquaredEuclidean, kReverseKL };

struct KvConfig {
  double lambda = 0.5;
  Divergence divergence = Divergence::kSquaredEuclidean;
};

namespace detail {

inline void check_dims(const Distribution& a, const Distribution& b, const Distribution& c) {
  if (a.size() != b.size() || a.size() != c.size())
    throw Error(Errc::kDimensionMismatch, "distributions have different dimensions");
}

// KL(q || p) = Σ q_i log(q_i / p_i), with 0·log 0 = 0.
inline double kl(const Distribution& q, const Distribution& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) throw Error(Errc::kSupportViolation, "p has zero mass where the reference distribution does not");
    total += q[i] * std::log(q[i] / p[i]);
  }
  return total;
}

}  // namespace detail

// λ·D(p‖p^a) + (1−λ)·D(p‖p^b). For the KL case the divergence is taken in the
// reverse direction, KL(p^a‖p) and KL(p^b‖p).
inline double kv_value(const Distribution& p, const KvConfig& kv, const Distribution& pa, const Distribution& pb) {
  detail::check_dims(p, pa, pb);
  if (!(kv.lambda >= 0.0 && kv.lambda <= 1.0)) throw Error(Errc::kInvalidArgument, "lambda must lie in [0, 1]");
  if (kv.divergence == Divergence::kSquaredEuclidean) {
    double da = 0, db = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      da += (p[i] - pa[i]) * (p[i] - pa[i]);
      db += (p[i] - pb[i]) * (p[i] - pb[i]);
    }
    return kv.lambda * da + (1.0 - kv.lambda) * db;
  }
  double value = 0.0;
  if (kv.lambda > 0.0) value += kv.lambda * detail::kl(pa, p);
  if (kv.lambda < 1.0) value += (1.0 - kv.lambda) * detail::kl(pb, p);
  return value;
}

// Closed-form KV minimiser, identical for both divergences: λ·p^a + (1−λ)·p^b.
inline Distribution optimal_mixture(const KvConfig& kv, const Distribution& pa, const Distribution& pb) {
  if (pa.size() != pb.size()) throw Error(Errc::kDimensionMismatch, "distributions have different dimensions");
  if (!(kv.lambda >= 0.0 && kv.lambda <= 1.0)) throw Error(Errc::kInvalidArgument, "lambda must lie in [0, 1]");
  Distribution out;
  out.probs.resize(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) out.probs[i] = kv.lambda * pa[i] + (1.0 - kv.lambda) * pb[i];
  return out;
}

// ---------------------------------------------------------------------------
// Random walks
// ---------------------------------------------------------------------------

enum class Policy { kCoverage, kPopularity };

inline std::string_view policy_name(Policy p) { return p == Policy::kCoverage ? "coverage" : "popularity"; }

inline Policy parse_policy(std::string_view name) {
  if (name == "coverage") return Policy::kCoverage;
  if (name == "popularity") return Policy::kPopularity;
  throw Error(Errc::kInvalidArgument, "unknown policy '" + std::string(name) + "'");
}

struct WalkConfig {
  std::size_t length = 3;
  std::size_t count = 1;
  Policy policy = Policy::kCoverage;
  std::uint64_t rng_seed = 0;
  std::size_t max_length = 3;
  std::size_t retry_factor = 20;  // attempt budget = retry_factor · count
  unsigned threads = default_threads();

  void validate() const {
    if (length < 1 || length > max_length)
      throw Error(Errc::kInvalidArgument,
                  "walk length must lie in [1, " + std::to_string(max_length) + "], got " + std::to_string(length));
    if (count < 1) throw Error(Errc::kInvalidArgument, "path count must be at least 1");
    if (retry_factor < 1) throw Error(Errc::kInvalidArgument, "retry factor must be at least 1");
  }
};

struct Path {
  std::vector<NodeId> nodes;
  Policy policy = Policy::kCoverage;
  bool truncated = false;

  std::size_t size() const { return nodes.size(); }
  bool same_sequence(const Path& o) const { return nodes == o.nodes; }
  bool operator==(const Path&) const = default;

  std::vector<std::string> labels(const KpGraph& g) const {
    std::vector<std::string> out;
    out.reserve(nodes.size());
    for (auto v : nodes) out.push_back(g.label(v));
    return out;
  }
};

struct SequenceHash {
  std::size_t operator()(const std::vector<NodeId>& seq) const {
    std::uint64_t h = 0x84222325cbf29ce4ull;
    for (auto v : seq) h = mix64(h ^ v);
    return static_cast<std::size_t>(h);
  }
};

// Transition machinery over a frozen graph. Start tables and per-row
// cumulative weights are built on first use; rows with degree above
// kAliasDegree additionally get an alias table on first visit. All lazy
// state is guarded so one sampler can serve many threads.
class WalkSampler {
 public:
  static constexpr std::size_t kAliasDegree = 64;

  explicit WalkSampler(const KpGraph& graph) : graph_(graph) {}

  const KpGraph& graph() const { return graph_; }

  NodeId draw_start(Policy policy, RandomStream& rng) const {
    if (graph_.node_count() == 0) throw Error(Errc::kEmptyGraph, "graph has no knowledge points");
    if (policy == Policy::kCoverage) return static_cast<NodeId>(rng.below(graph_.node_count()));
    std::call_once(start_once_, [this] {
      std::vector<std::uint64_t> freq(graph_.node_count());
      for (NodeId v = 0; v < graph_.node_count(); ++v) freq[v] = graph_.node_freq(v);
      start_alias_ = AliasTable(std::span<const std::uint64_t>(freq));
    });
    return static_cast<NodeId>(start_alias_.sample(rng));
  }

  // Next hop from `node`; nullopt at a dead end.
  std::optional<NodeId> draw_next(NodeId node, Policy policy, RandomStream& rng) const {
    const std::size_t deg = graph_.degree(node);
    if (deg == 0) return std::nullopt;
    const auto ids = graph_.neighbor_ids(node);
    if (policy == Policy::kCoverage) return ids[rng.below(deg)];
    if (deg > kAliasDegree) return ids[heavy_table(node).sample(rng)];
    return ids[sample_cumulative(cumulative_row(node), rng)];
  }

  Path walk(Policy policy, std::size_t length, RandomStream& rng) const {
    Path path;
    path.policy = policy;
    path.nodes.reserve(length);
    path.nodes.push_back(draw_start(policy, rng));
    while (path.nodes.size() < length) {
      auto next = draw_next(path.nodes.back(), policy, rng);
      if (!next) {
        path.truncated = true;
        break;
      }
      path.nodes.push_back(*next);
    }
    return path;
  }

  // Exact next-hop law from `node` under `policy`, aligned with neighbor_ids.
  std::vector<double> transition_law(NodeId node, Policy policy) const {
    const auto ws = graph_.neighbor_weights(node);
    std::vector<double> law(ws.size());
    if (ws.empty()) return law;
    if (policy == Policy::kCoverage) {
      std::fill(law.begin(), law.end(), 1.0 / static_cast<double>(ws.size()));
    } else {
      const double total = std::accumulate(ws.begin(), ws.end(), 0.0);
      for (std::size_t i = 0; i < ws.size(); ++i) law[i] = ws[i] / total;
    }
    return law;
  }

 private:
  std::span<const std::uint64_t> cumulative_row(NodeId node) const {
    std::call_once(cumulative_once_, [this] {
      const auto n = graph_.node_count();
      cumulative_.resize(2 * graph_.edge_count());
      std::size_t pos = 0;
      heavy_slot_.assign(n, kNoSlot);
      std::size_t heavy = 0;
      for (NodeId v = 0; v < n; ++v) {
        std::uint64_t run = 0;
        for (auto w : graph_.neighbor_weights(v)) cumulative_[pos++] = run += w;
        if (graph_.degree(v) > kAliasDegree) heavy_slot_[v] = static_cast<std::uint32_t>(heavy++);
      }
      heavy_tables_.resize(heavy);
      heavy_once_ = std::make_unique<std::once_flag[]>(heavy);
    });
    return {cumulative_.data() + graph_.row_begin(node), graph_.degree(node)};
  }

  const AliasTable& heavy_table(NodeId node) const {
    cumulative_row(node);
    const auto slot = heavy_slot_[node];
    std::call_once(heavy_once_[slot], [&] { heavy_tables_[slot] = AliasTable(graph_.neighbor_weights(node)); });
    return heavy_tables_[slot];
  }

  static constexpr std::uint32_t kNoSlot = 0xFFFFFFFFu;

  const KpGraph& graph_;
  mutable std::once_flag start_once_;
  mutable AliasTable start_alias_;
  mutable std::once_flag cumulative_once_;
  mutable std::vector<std::uint64_t> cumulative_;
  mutable std::vector<std::uint32_t> heavy_slot_;
  mutable std::vector<AliasTable> heavy_tables_;
  mutable std::unique_ptr<std::once_flag[]> heavy_once_;
};

struct SampleResult {
  std::vector<Path> paths;
  std::size_t attempts = 0;
  bool budget_exhausted = false;  // fewer than `count` unique paths were found
};

inline std::string walk_purpose(Policy policy, std::size_t length) {
  return "walk/" + std::string(policy_name(policy)) + "/l" + std::to_string(length);
}

// Draw up to config.count unique paths. Attempt i always uses the stream
// (seed, walk_purpose, i), and attempts are accepted strictly in index order,
// so the output does not depend on the thread count.
inline SampleResult sample_paths(const WalkSampler& sampler, const WalkConfig& config) {
  config.validate();
  if (sampler.graph().node_count() == 0) throw Error(Errc::kEmptyGraph, "graph has no knowledge points");
  const std::string purpose = walk_purpose(config.policy, config.length);
  const std::size_t budget = config.retry_factor * config.count;

  SampleResult result;
  result.paths.reserve(config.count);
  std::unordered_set<std::vector<NodeId>, SequenceHash> seen;
  seen.reserve(config.count * 2);
  std::vector<Path> batch;
  while (result.paths.size() < config.count && result.attempts < budget) {
    const std::size_t want = config.count - result.paths.size();
    const std::size_t size = std::min(budget - result.attempts, std::max<std::size_t>(want + want / 4, 64));
    const std::size_t first = result.attempts;
    batch.assign(size, Path{});
    parallel_for(size, config.threads, [&](std::size_t begin, std::size_t end, unsigned) {
      for (std::size_t k = begin; k < end; ++k) {
        auto rng = make_stream(config.rng_seed, purpose, first + k);
        batch[k] = sampler.walk(config.policy, config.length, rng);
      }
    });
    for (auto& path : batch) {
      ++result.attempts;
      if (seen.insert(path.nodes).second) {
        result.paths.push_back(std::move(path));
        if (result.paths.size() == config.count) break;
      }
    }
  }
  result.budget_exhausted = result.paths.size() < config.count;
  return result;
}

inline SampleResult sample_paths(const KpGraph& graph, const WalkConfig& config) {
  return sample_paths(WalkSampler(graph), config);
}

inline std::size_t blend_share(double alpha, std::size_t total) {
  return static_cast<std::size_t>(std::llround(alpha * static_cast<double>(total)));
}

// Π_hybrid = α·Π_a + (1−α)·Π_b: round(α·total) paths drawn without
// replacement from pi_a, the rest from pi_b. A pi_b draw that repeats a
// sequence already taken is discarded and refilled from pi_b.
inline std::vector<Path> hybrid_blend(const std::vector<Path>& pi_a, const std::vector<Path>& pi_b, double alpha,
                                      std::size_t total, std::uint64_t rng_seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::kInvalidArgument, "alpha must lie in [0, 1]");
  const std::size_t from_a = blend_share(alpha, total);
  const std::size_t from_b = total - from_a;
  if (pi_a.size() < from_a)
    throw Error(Errc::kInsufficientPaths, "need " + std::to_string(from_a) + " coverage paths, have " +
                                              std::to_string(pi_a.size()));
  if (pi_b.size() < from_b)
    throw Error(Errc::kInsufficientPaths, "need " + std::to_string(from_b) + " popularity paths, have " +
                                              std::to_string(pi_b.size()));

  auto draw_order = [&](std::size_t n, std::string_view purpose) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_stream(rng_seed, purpose, total);
    for (std::size_t i = 0; i + 1 < n; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
    return order;
  };

  std::vector<Path> out;
  out.reserve(total);
  std::unordered_set<std::vector<NodeId>, SequenceHash> taken;
  const auto order_a = draw_order(pi_a.size(), "blend/a");
  for (std::size_t k = 0; k < from_a; ++k) {
    const Path& p = pi_a[order_a[k]];
    taken.insert(p.nodes);
    out.push_back(p);
  }
  const auto order_b = draw_order(pi_b.size(), "blend/b");
  std::size_t got_b = 0;
  for (std::size_t k = 0; k < order_b.size() && got_b < from_b; ++k) {
    const Path& p = pi_b[order_b[k]];
    if (!taken.insert(p.nodes).second) continue;
    out.push_back(p);
    ++got_b;
  }
  if (got_b < from_b)
    throw Error(Errc::kInsufficientPaths, "popularity paths exhausted after removing cross-set duplicates (" +
                                              std::to_string(got_b) + " of " + std::to_string(from_b) + ")");
  return out;
}

// ---------------------------------------------------------------------------
// Path records: {"kps": [...], "policy": "coverage|popularity", "truncated": bool}
// ---------------------------------------------------------------------------

inline std::string path_to_json_line(const Path& p, const KpGraph& g) {
  return "{\"kps\":" + json(p.labels(g)).dump() + ",\"policy\":\"" + std::string(policy_name(p.policy)) +
         "\",\"truncated\":" + (p.truncated ? "true" : "false") + "}";
}

inline void save_paths(const std::string& path, const std::vector<Path>& paths, const KpGraph& g) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  for (const auto& p : paths) out << path_to_json_line(p, g) << '\n';
}

inline Path path_from_json(const json& doc, const KpGraph& g, std::size_t line_no = 0) {
  if (!doc.is_object() || !doc.contains("kps") || !doc["kps"].is_array() || doc["kps"].empty())
    throw Error(Errc::kMalformedLine, "path record needs a non-empty \"kps\" array", line_no);
  Path p;
  for (const auto& k : doc["kps"]) {
    if (!k.is_string()) throw Error(Errc::kMalformedLine, "path kps must be strings", line_no);
    p.nodes.push_back(g.require(k.get<std::string>()));
  }
  for (std::size_t i = 1; i < p.nodes.size(); ++i)
    if (g.weight(p.nodes[i - 1], p.nodes[i]) == 0)
      throw Error(Errc::kMalformedLine, "consecutive path nodes are not adjacent", line_no);
  p.policy = parse_policy(doc.value("policy", "coverage"));
  p.truncated = doc.value("truncated", false);
  return p;
}

inline std::vector<Path> load_paths(const std::string& path, const KpGraph& g) {
  std::vector<Path> out;
  const auto lines = text::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw Error(Errc::kMalformedLine, e.what(), i + 1);
    }
    out.push_back(path_from_json(doc, g, i + 1));
  }
  return out;
}

}  // namespace linksyn
