#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "linksyn/consolidation.hpp"
#include "linksyn/corpus.hpp"
#include "linksyn/digest.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/rng.hpp"

namespace linksyn {

static_assert(std::endian::native == std::endian::little, "graph files are written in host order");

using NodeId = std::uint32_t;
using InstanceIndex = std::uint32_t;

// Frozen KP co-occurrence graph. Nodes are numbered in first-appearance order
// over the corpus; each undirected edge is stored in both endpoints' CSR rows,
// rows sorted by neighbor id. Φ postings hold instance indices in corpus order.
// The graph also carries the per-instance attributes seed selection needs, so
// a saved graph is self-sufficient for sampling and selection.
class KpGraph {
 public:
  struct Neighbor {
    std::string kp;
    std::uint32_t weight;
    bool operator==(const Neighbor&) const = default;
  };

  std::size_t node_count() const { return labels_.size(); }
  std::size_t edge_count() const { return neighbors_.size() / 2; }
  std::size_t instance_count() const { return instance_ids_.size(); }
  std::size_t posting_count() const { return phi_.size(); }

  const std::string& label(NodeId node) const { return labels_.at(node); }
  const std::vector<std::string>& labels() const { return labels_; }

  std::optional<NodeId> find(std::string_view kp) const {
    auto it = index_.find(std::string(kp));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  NodeId require(std::string_view kp) const {
    auto id = find(kp);
    if (!id) throw Error(Errc::kUnknownKp, "knowledge point '" + std::string(kp) + "' is not in the graph");
    return *id;
  }

  std::size_t degree(NodeId node) const { return offsets_[node + 1] - offsets_[node]; }
  std::size_t row_begin(NodeId node) const { return offsets_[node]; }

  std::span<const NodeId> neighbor_ids(NodeId node) const {
    return {neighbors_.data() + offsets_[node], degree(node)};
  }
  std::span<const std::uint32_t> neighbor_weights(NodeId node) const {
    return {weights_.data() + offsets_[node], degree(node)};
  }

  std::vector<Neighbor> neighbors(std::string_view kp) const {
    const NodeId node = require(kp);
    std::vector<Neighbor> out;
    const auto ids = neighbor_ids(node);
    const auto ws = neighbor_weights(node);
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({labels_[ids[i]], ws[i]});
    return out;
  }

  // Co-occurrence count, 0 when no edge.
  std::uint32_t weight(NodeId a, NodeId b) const {
    const auto ids = neighbor_ids(a);
    auto it = std::lower_bound(ids.begin(), ids.end(), b);
    if (it == ids.end() || *it != b) return 0;
    return neighbor_weights(a)[static_cast<std::size_t>(it - ids.begin())];
  }

  std::span<const InstanceIndex> phi(NodeId node) const {
    return {phi_.data() + phi_offsets_[node], phi_offsets_[node + 1] - phi_offsets_[node]};
  }
  std::size_t node_freq(NodeId node) const { return phi_offsets_[node + 1] - phi_offsets_[node]; }

  const std::string& instance_id(InstanceIndex i) const { return instance_ids_.at(i); }
  int instance_difficulty(InstanceIndex i) const { return instance_difficulty_.at(i); }
  std::uint16_t instance_discipline_index(InstanceIndex i) const { return instance_discipline_.at(i); }
  const std::string& instance_discipline(InstanceIndex i) const {
    return disciplines_.at(instance_discipline_.at(i));
  }
  const std::vector<std::string>& disciplines() const { return disciplines_; }
  std::optional<std::uint16_t> discipline_index(std::string_view label) const {
    auto it = std::find(disciplines_.begin(), disciplines_.end(), label);
    if (it == disciplines_.end()) return std::nullopt;
    return static_cast<std::uint16_t>(it - disciplines_.begin());
  }

  const json& metadata() const { return metadata_; }
  void set_metadata(json meta) { metadata_ = std::move(meta); }

  // Bytes held by the graph's arrays and strings (heap + inline).
  std::size_t memory_bytes() const {
    auto strings = [](const std::vector<std::string>& v) {
      std::size_t b = v.capacity() * sizeof(std::string);
      for (const auto& s : v) b += s.capacity() > 15 ? s.capacity() + 1 : 0;
      return b;
    };
    return offsets_.capacity() * 8 + neighbors_.capacity() * 4 + weights_.capacity() * 4 +
           phi_offsets_.capacity() * 8 + phi_.capacity() * 4 + instance_difficulty_.capacity() +
           instance_discipline_.capacity() * 2 + strings(labels_) + strings(instance_ids_) + strings(disciplines_) +
           index_.bucket_count() * sizeof(void*) + index_.size() * kIndexNodeBytes;
  }

  // Upper bound on memory_bytes() used for capacity planning:
  //   16(N+1) + 16E + 4P + 3A + 96N + 32(N + A + D) + label/id heap bytes.
  // N nodes, E undirected edges, P = Σ|K_i| postings, A instances, D disciplines.
  static std::size_t memory_model(std::size_t nodes, std::size_t edges, std::size_t postings,
                                  std::size_t instances, std::size_t disciplines, std::size_t string_heap_bytes) {
    return 16 * (nodes + 1) + 16 * edges + 4 * postings + 3 * instances + 96 * nodes +
           sizeof(std::string) * (nodes + instances + disciplines) + string_heap_bytes;
  }

  std::size_t string_heap_bytes() const {
    std::size_t b = 0;
    for (const auto* v : {&labels_, &instance_ids_, &disciplines_})
      for (const auto& s : *v) b += s.capacity() > 15 ? s.capacity() + 1 : 0;
    return b;
  }

  bool operator==(const KpGraph& o) const {
    return labels_ == o.labels_ && offsets_ == o.offsets_ && neighbors_ == o.neighbors_ && weights_ == o.weights_ &&
           phi_offsets_ == o.phi_offsets_ && phi_ == o.phi_ && instance_ids_ == o.instance_ids_ &&
           instance_difficulty_ == o.instance_difficulty_ && instance_discipline_ == o.instance_discipline_ &&
           disciplines_ == o.disciplines_;
  }

 private:
  friend KpGraph build_graph(const Corpus&, unsigned);
  friend KpGraph load_graph(const std::string&);
  friend void save_graph(const KpGraph&, const std::string&);

  static constexpr std::size_t kIndexNodeBytes = 64;

  void rebuild_index() {
    index_.clear();
    index_.reserve(labels_.size());
    for (NodeId i = 0; i < labels_.size(); ++i) index_.emplace(labels_[i], i);
  }

  std::vector<std::string> labels_;
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::uint64_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  std::vector<std::uint32_t> weights_;
  std::vector<std::uint64_t> phi_offsets_{0};
  std::vector<InstanceIndex> phi_;
  std::vector<std::string> instance_ids_;
  std::vector<std::uint8_t> instance_difficulty_;
  std::vector<std::uint16_t> instance_discipline_;
  std::vector<std::string> disciplines_;
  json metadata_ = json::object();
};

// Pair counting is sharded by instance range; each shard emits packed
// (low, high) node pairs which are merged by one global sort, so the result
// does not depend on the shard count.
inline KpGraph build_graph(const Corpus& corpus, unsigned threads = default_threads()) {
  if (corpus.empty()) throw Error(Errc::kEmptyCorpus, "cannot build a graph from an empty corpus");
  if (corpus.size() > std::numeric_limits<InstanceIndex>::max())
    throw Error(Errc::kInvalidArgument, "corpus too large for 32-bit instance indices");

  KpGraph g;
  std::vector<std::vector<NodeId>> instance_nodes(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& inst = corpus[i];
    auto& nodes = instance_nodes[i];
    nodes.reserve(inst.kps.size());
    for (const auto& k : inst.kps) {
      auto [it, fresh] = g.index_.emplace(k, static_cast<NodeId>(g.labels_.size()));
      if (fresh) g.labels_.push_back(k);
      nodes.push_back(it->second);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  }
  const std::size_t n = g.labels_.size();

  std::vector<std::vector<std::uint64_t>> shard_pairs(std::max(1u, threads));
  parallel_for(corpus.size(), threads, [&](std::size_t begin, std::size_t end, unsigned shard) {
    auto& out = shard_pairs[shard];
    for (std::size_t i = begin; i < end; ++i) {
      const auto& nodes = instance_nodes[i];
      for (std::size_t a = 0; a < nodes.size(); ++a)
        for (std::size_t b = a + 1; b < nodes.size(); ++b)
          out.push_back((std::uint64_t{nodes[a]} << 32) | nodes[b]);
    }
  });
  std::vector<std::uint64_t> pairs;
  {
    std::size_t total = 0;
    for (const auto& s : shard_pairs) total += s.size();
    pairs.reserve(total);
    for (auto& s : shard_pairs) {
      pairs.insert(pairs.end(), s.begin(), s.end());
      std::vector<std::uint64_t>().swap(s);
    }
  }
  std::sort(pairs.begin(), pairs.end());

  // Run-length encode into (pair, count) and count degrees.
  std::vector<std::pair<std::uint64_t, std::uint32_t>> edges;
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
    edges.emplace_back(pairs[i], static_cast<std::uint32_t>(j - i));
    i = j;
  }
  std::vector<std::uint64_t>().swap(pairs);

  std::vector<std::uint64_t> degree(n, 0);
  for (const auto& [key, w] : edges) {
    ++degree[key >> 32];
    ++degree[key & 0xFFFFFFFFu];
  }
  g.offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) g.offsets_[v + 1] = g.offsets_[v] + degree[v];
  g.neighbors_.resize(2 * edges.size());
  g.weights_.resize(2 * edges.size());
  std::vector<std::uint64_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  // Edges arrive sorted by (low, high), so each row fills in ascending order:
  // partners below v arrive while scanning their own rows, partners above v
  // while scanning v's row.
  for (const auto& [key, w] : edges) {
    const auto a = static_cast<NodeId>(key >> 32);
    const auto b = static_cast<NodeId>(key & 0xFFFFFFFFu);
    g.neighbors_[cursor[a]] = b;
    g.weights_[cursor[a]++] = w;
    g.neighbors_[cursor[b]] = a;
    g.weights_[cursor[b]++] = w;
  }

  std::vector<std::uint64_t> freq(n, 0);
  for (const auto& nodes : instance_nodes)
    for (auto v : nodes) ++freq[v];
  g.phi_offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) g.phi_offsets_[v + 1] = g.phi_offsets_[v] + freq[v];
  g.phi_.resize(g.phi_offsets_[n]);
  std::vector<std::uint64_t> fill(g.phi_offsets_.begin(), g.phi_offsets_.end() - 1);
  for (std::size_t i = 0; i < instance_nodes.size(); ++i)
    for (auto v : instance_nodes[i]) g.phi_[fill[v]++] = static_cast<InstanceIndex>(i);

  std::unordered_map<std::string, std::uint16_t> disc_index;
  g.instance_ids_.reserve(corpus.size());
  g.instance_difficulty_.reserve(corpus.size());
  g.instance_discipline_.reserve(corpus.size());
  for (const auto& inst : corpus.instances()) {
    auto [it, fresh] = disc_index.emplace(inst.discipline, static_cast<std::uint16_t>(g.disciplines_.size()));
    if (fresh) g.disciplines_.push_back(inst.discipline);
    g.instance_ids_.push_back(inst.id);
    g.instance_difficulty_.push_back(static_cast<std::uint8_t>(inst.difficulty));
    g.instance_discipline_.push_back(it->second);
  }
  g.labels_.shrink_to_fit();
  g.disciplines_.shrink_to_fit();
  return g;
}

struct GraphStats {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  std::size_t instance_count = 0;
  std::size_t component_count = 0;
  std::size_t giant_component_nodes = 0;
  double giant_component_node_fraction = 0.0;
  double giant_component_text_fraction = 0.0;
  double assortativity = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  std::size_t isolated_nodes = 0;
  std::uint64_t max_weight = 0;
  std::size_t max_node_freq = 0;
  std::map<std::size_t, std::size_t> degree_histogram;       // degree -> nodes
  std::map<std::uint64_t, std::size_t> weight_histogram;     // weight -> edges
  std::map<std::size_t, std::size_t> component_size_histogram;  // size -> components
  std::optional<std::size_t> diameter_lower_bound;

  json to_json() const {
    auto hist = [](const auto& h) {
      json arr = json::array();
      for (const auto& [k, v] : h) arr.push_back({k, v});
      return arr;
    };
    json j = {{"node_count", node_count},
              {"edge_count", edge_count},
              {"instance_count", instance_count},
              {"component_count", component_count},
              {"giant_component_nodes", giant_component_nodes},
              {"giant_component_node_fraction", giant_component_node_fraction},
              {"giant_component_text_fraction", giant_component_text_fraction},
              {"assortativity", std::isnan(assortativity) ? json(nullptr) : json(assortativity)},
              {"isolated_nodes", isolated_nodes},
              {"max_weight", max_weight},
              {"max_node_freq", max_node_freq},
              {"degree_histogram", hist(degree_histogram)},
              {"weight_histogram", hist(weight_histogram)},
              {"component_size_histogram", hist(component_size_histogram)}};
    if (diameter_lower_bound) j["diameter_lower_bound"] = *diameter_lower_bound;
    return j;
  }
};

// BFS distances from `source`; unreachable nodes get SIZE_MAX.
inline std::vector<std::size_t> bfs_distances(const KpGraph& g, NodeId source) {
  std::vector<std::size_t> dist(g.node_count(), std::numeric_limits<std::size_t>::max());
  std::deque<NodeId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId u : g.neighbor_ids(v))
      if (dist[u] == std::numeric_limits<std::size_t>::max()) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
  }
  return dist;
}

struct StatsOptions {
  bool estimate_diameter = false;
  std::size_t diameter_sources = 16;
  std::uint64_t seed = 0;
};

inline GraphStats compute_stats(const KpGraph& g, const StatsOptions& options = {}) {
  GraphStats s;
  const std::size_t n = g.node_count();
  s.node_count = n;
  s.edge_count = g.edge_count();
  s.instance_count = g.instance_count();

  UnionFind uf(n);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId u : g.neighbor_ids(v))
      if (u > v) uf.unite(v, u);
  std::unordered_map<std::size_t, std::size_t> comp_size;
  std::unordered_map<std::size_t, NodeId> comp_first;
  for (NodeId v = 0; v < n; ++v) {
    const auto root = uf.find(v);
    ++comp_size[root];
    comp_first.emplace(root, v);
  }
  s.component_count = comp_size.size();
  std::size_t giant_root = 0;
  for (const auto& [root, size] : comp_size) {
    ++s.component_size_histogram[size];
    if (size > s.giant_component_nodes ||
        (size == s.giant_component_nodes && comp_first[root] < comp_first[giant_root])) {
      s.giant_component_nodes = size;
      giant_root = root;
    }
  }
  if (n > 0) s.giant_component_node_fraction = static_cast<double>(s.giant_component_nodes) / static_cast<double>(n);

  // An instance's KPs form a clique, so they share one component; an instance
  // lies in the giant component iff any of its KPs does.
  if (g.instance_count() > 0) {
    std::vector<bool> in_giant(g.instance_count(), false);
    for (NodeId v = 0; v < n; ++v)
      if (uf.find(v) == giant_root)
        for (auto i : g.phi(v)) in_giant[i] = true;
    s.giant_component_text_fraction = static_cast<double>(std::count(in_giant.begin(), in_giant.end(), true)) /
                                      static_cast<double>(g.instance_count());
  }

  double sum_x = 0, sum_xx = 0, sum_xy = 0;
  std::size_t directed = 0;
  for (NodeId v = 0; v < n; ++v) {
    const auto dv = static_cast<double>(g.degree(v));
    ++s.degree_histogram[g.degree(v)];
    if (g.degree(v) == 0) ++s.isolated_nodes;
    s.max_node_freq = std::max(s.max_node_freq, g.node_freq(v));
    const auto ids = g.neighbor_ids(v);
    const auto ws = g.neighbor_weights(v);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto du = static_cast<double>(g.degree(ids[k]));
      sum_x += dv;
      sum_xx += dv * dv;
      sum_xy += dv * du;
      ++directed;
      if (ids[k] > v) {
        ++s.weight_histogram[ws[k]];
        s.max_weight = std::max<std::uint64_t>(s.max_weight, ws[k]);
      }
    }
  }
  if (directed > 0) {
    const double m = static_cast<double>(directed);
    const double mean = sum_x / m;
    const double var = sum_xx / m - mean * mean;
    const double cov = sum_xy / m - mean * mean;
    if (var > 1e-12 * std::max(1.0, mean * mean)) s.assortativity = cov / var;
  }

  if (options.estimate_diameter && s.giant_component_nodes > 1) {
    std::vector<NodeId> giant;
    for (NodeId v = 0; v < n; ++v)
      if (uf.find(v) == giant_root) giant.push_back(v);
    auto rng = make_stream(options.seed, "stats/diameter", 0);
    std::size_t best = 0;
    for (std::size_t k = 0; k < options.diameter_sources; ++k) {
      // Double sweep: the farthest node from a random source is a good start.
      const NodeId src = giant[rng.below(giant.size())];
      auto d1 = bfs_distances(g, src);
      NodeId far = src;
      for (NodeId v : giant)
        if (d1[v] > d1[far]) far = v;
      auto d2 = bfs_distances(g, far);
      for (NodeId v : giant) best = std::max(best, d2[v]);
    }
    s.diameter_lower_bound = best;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Graph container, version 1 (all integers little-endian):
//   "LKSGRAPH"             8-byte magic
//   u32 version            = 1
//   u32 header_len
//   header                 JSON: counts + metadata
//   u64 payload_len
//   payload                sections in order:
//     labels               N × (u32 len, bytes)
//     offsets              (N+1) × u64
//     neighbors            2E × u32
//     weights              2E × u32
//     phi_offsets          (N+1) × u64
//     phi                  P × u32
//     disciplines          D × (u32 len, bytes)
//     instances            A × (u32 len, id bytes, u8 difficulty, u16 discipline)
//   sha256                 32 bytes over header || payload
// ---------------------------------------------------------------------------

inline constexpr char kGraphMagic[8] = {'L', 'K', 'S', 'G', 'R', 'A', 'P', 'H'};
inline constexpr std::uint32_t kGraphVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  template <typename T>
  void put_array(const std::vector<T>& v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data, std::string what = "graph file") : data_(data), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  std::vector<T> get_array(std::uint64_t count) {
    if (count > (data_.size() - pos_) / sizeof(T)) fail();
    std::vector<T> v(count);
    std::memcpy(v.data(), data_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(data_.substr(pos_, len));
    pos_ += len;
    return s;
  }
  std::string_view take(std::size_t len) {
    need(len);
    auto s = data_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t len) const {
    if (len > data_.size() - pos_) fail();
  }
  [[noreturn]] void fail() const { throw Error(Errc::kCorruptFile, what_ + " is truncated"); }

  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_graph(const KpGraph& g, const std::string& path) {
  detail::ByteWriter payload;
  for (const auto& l : g.labels_) payload.put_string(l);
  payload.put_array(g.offsets_);
  payload.put_array(g.neighbors_);
  payload.put_array(g.weights_);
  payload.put_array(g.phi_offsets_);
  payload.put_array(g.phi_);
  for (const auto& d : g.disciplines_) payload.put_string(d);
  for (std::size_t i = 0; i < g.instance_ids_.size(); ++i) {
    payload.put_string(g.instance_ids_[i]);
    payload.put(g.instance_difficulty_[i]);
    payload.put(g.instance_discipline_[i]);
  }

  const json header = {{"nodes", g.node_count()},         {"edges", g.edge_count()},
                       {"postings", g.posting_count()},   {"instances", g.instance_count()},
                       {"disciplines", g.disciplines_.size()}, {"metadata", g.metadata_}};
  const std::string header_text = header.dump();

  detail::ByteWriter file;
  file.bytes().append(kGraphMagic, sizeof(kGraphMagic));
  file.put<std::uint32_t>(kGraphVersion);
  file.put<std::uint32_t>(static_cast<std::uint32_t>(header_text.size()));
  file.bytes().append(header_text);
  file.put<std::uint64_t>(payload.bytes().size());
  file.bytes().append(payload.bytes());
  const auto digest = Sha256().update(header_text).update(payload.bytes()).finish();
  file.bytes().append(reinterpret_cast<const char*>(digest.data()), digest.size());
  text::write_file(path, file.bytes());
}

inline KpGraph load_graph(const std::string& path) {
  const std::string data = text::read_file(path);
  detail::ByteReader in(data);
  if (in.take(sizeof(kGraphMagic)) != std::string_view(kGraphMagic, sizeof(kGraphMagic)))
    throw Error(Errc::kCorruptFile, path + " is not a graph file (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kGraphVersion)
    throw Error(Errc::kCorruptFile, "unsupported graph file version " + std::to_string(version) + " (expected " +
                                        std::to_string(kGraphVersion) + ")");
  const auto header_len = in.get<std::uint32_t>();
  const std::string_view header_text = in.take(header_len);
  const auto payload_len = in.get<std::uint64_t>();
  if (payload_len > data.size()) throw Error(Errc::kCorruptFile, "graph file is truncated");
  const std::string_view payload_bytes = in.take(payload_len);
  const std::string_view stored = in.take(32);
  if (!in.done()) throw Error(Errc::kCorruptFile, "trailing bytes after graph checksum");
  const auto digest = Sha256().update(header_text).update(payload_bytes).finish();
  if (std::memcmp(digest.data(), stored.data(), 32) != 0) throw Error(Errc::kCorruptFile, "graph checksum mismatch");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw Error(Errc::kCorruptFile, std::string("graph header: ") + e.what());
  }
  KpGraph g;
  try {
    const auto n = header.at("nodes").get<std::uint64_t>();
    const auto e = header.at("edges").get<std::uint64_t>();
    const auto p = header.at("postings").get<std::uint64_t>();
    const auto a = header.at("instances").get<std::uint64_t>();
    const auto d = header.at("disciplines").get<std::uint64_t>();
    g.metadata_ = header.value("metadata", json::object());

    detail::ByteReader body(payload_bytes);
    g.labels_.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) g.labels_.push_back(body.get_string());
    g.offsets_ = body.get_array<std::uint64_t>(n + 1);
    g.neighbors_ = body.get_array<NodeId>(2 * e);
    g.weights_ = body.get_array<std::uint32_t>(2 * e);
    g.phi_offsets_ = body.get_array<std::uint64_t>(n + 1);
    g.phi_ = body.get_array<InstanceIndex>(p);
    for (std::uint64_t i = 0; i < d; ++i) g.disciplines_.push_back(body.get_string());
    for (std::uint64_t i = 0; i < a; ++i) {
      g.instance_ids_.push_back(body.get_string());
      g.instance_difficulty_.push_back(body.get<std::uint8_t>());
      g.instance_discipline_.push_back(body.get<std::uint16_t>());
    }
    if (!body.done()) throw Error(Errc::kCorruptFile, "graph payload has unexpected trailing bytes");
    if (g.offsets_.front() != 0 || g.offsets_.back() != 2 * e || g.phi_offsets_.front() != 0 ||
        g.phi_offsets_.back() != p || !std::is_sorted(g.offsets_.begin(), g.offsets_.end()) ||
        !std::is_sorted(g.phi_offsets_.begin(), g.phi_offsets_.end()))
      throw Error(Errc::kCorruptFile, "graph offsets are inconsistent");
    for (auto v : g.neighbors_)
      if (v >= n) throw Error(Errc::kCorruptFile, "neighbor id out of range");
    for (auto i : g.phi_)
      if (i >= a) throw Error(Errc::kCorruptFile, "instance index out of range");
    for (auto disc : g.instance_discipline_)
      if (disc >= d) throw Error(Errc::kCorruptFile, "discipline index out of range");
  } catch (const json::exception& ex) {
    throw Error(Errc::kCorruptFile, std::string("graph header: ") + ex.what());
  }
  g.rebuild_index();
  if (g.index_.size() != g.labels_.size()) throw Error(Errc::kCorruptFile, "duplicate node labels");
  return g;
}

}  // namespace linksyn
