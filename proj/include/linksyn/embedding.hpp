#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "linksyn/backend.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/rng.hpp"
#include "linksyn/text.hpp"

namespace linksyn {

// L2-normalised vector with sorted (dimension, value) entries. Dense embeddings use dimensions 0..d-1.
struct Embedding {
  std::vector<std::pair<std::uint64_t, double>> entries;

  static Embedding normalized(std::vector<std::pair<std::uint64_t, double>> e) {
    std::sort(e.begin(), e.end());
    double norm = 0;
    for (const auto& [d, v] : e) norm += v * v;
    norm = std::sqrt(norm);
    Embedding out;
    if (norm == 0) return out;
    out.entries.reserve(e.size());
    for (const auto& [d, v] : e)
      if (v != 0) out.entries.emplace_back(d, v / norm);
    return out;
  }
};

inline double cosine(const Embedding& a, const Embedding& b) {
  double dot = 0;
  auto i = a.entries.begin(), j = b.entries.begin();
  while (i != a.entries.end() && j != b.entries.end()) {
    if (i->first < j->first) ++i;
    else if (j->first < i->first) ++j;
    else {
      dot += i->second * j->second;
      ++i, ++j;
    }
  }
  return dot;
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string id() const = 0;
};

// Bag-of-tokens term counts keyed by a 64-bit token hash. Offline and deterministic.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(unsigned threads = default_threads()) : threads_(threads) {}

  std::string id() const override { return "hashing-tf/" + std::string(text::kTokenizerVersion); }

  Embedding embed_one(std::string_view s) const {
    std::unordered_map<std::uint64_t, double> counts;
    for (const auto& tok : text::tokenize(s)) counts[mix64(fnv1a64(tok))] += 1.0;
    return Embedding::normalized({counts.begin(), counts.end()});
  }

  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out(texts.size());
    parallel_for(texts.size(), threads_, [&](std::size_t b, std::size_t e, unsigned) {
      for (std::size_t i = b; i < e; ++i) out[i] = embed_one(texts[i]);
    });
    return out;
  }

 private:
  unsigned threads_;
};

// OpenAI-compatible /embeddings endpoint.
class RemoteEmbedder : public Embedder {
 public:
  explicit RemoteEmbedder(HttpOptions options, std::size_t batch = 64) : options_(std::move(options)), batch_(batch) {
    parse_endpoint(options_.endpoint);
  }

  std::string id() const override { return "remote/" + options_.model; }

  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (std::size_t b = 0; b < texts.size(); b += batch_) {
      const std::size_t e = std::min(texts.size(), b + batch_);
      const json body = {{"model", options_.model},
                         {"input", std::vector<std::string>(texts.begin() + b, texts.begin() + e)}};
      json res;
      try {
        res = post_json(options_, "/embeddings", body);
      } catch (const Error& err) {
        throw Error(Errc::kEmbedderUnavailable, err.what());
      }
      try {
        const auto& data = res.at("data");
        if (data.size() != e - b) throw Error(Errc::kEmbedderUnavailable, "embedding count mismatch");
        for (const auto& row : data) {
          const auto vec = row.at("embedding").get<std::vector<double>>();
          std::vector<std::pair<std::uint64_t, double>> entries(vec.size());
          for (std::size_t d = 0; d < vec.size(); ++d) entries[d] = {d, vec[d]};
          out.push_back(Embedding::normalized(std::move(entries)));
        }
      } catch (const json::exception& ex) {
        throw Error(Errc::kEmbedderUnavailable, std::string("unexpected embedding payload: ") + ex.what());
      }
    }
    return out;
  }

 private:
  HttpOptions options_;
  std::size_t batch_;
};

// Inverted index over reference embeddings for max-cosine queries.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::vector<Embedding> docs) : docs_(std::move(docs)) {
    for (std::uint32_t i = 0; i < docs_.size(); ++i)
      for (const auto& [d, v] : docs_[i].entries) postings_[d].emplace_back(i, v);
  }

  std::size_t size() const { return docs_.size(); }

  // Returns (max cosine, best document) or (-inf, npos) when empty.
  std::pair<double, std::size_t> max_cosine(const Embedding& q) const {
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& [d, v] : q.entries) {
      auto it = postings_.find(d);
      if (it == postings_.end()) continue;
      for (const auto& [doc, w] : it->second) acc[doc] += v * w;
    }
    std::pair<double, std::size_t> best{-std::numeric_limits<double>::infinity(), std::size_t(-1)};
    for (const auto& [doc, s] : acc)
      if (s > best.first || (s == best.first && doc < best.second)) best = {s, doc};
    // documents sharing no dimension have cosine 0
    if (acc.size() < docs_.size() && best.first < 0) best = {0.0, first_untouched(acc)};
    return best;
  }

 private:
  std::size_t first_untouched(const std::unordered_map<std::uint32_t, double>& acc) const {
    for (std::uint32_t i = 0; i < docs_.size(); ++i)
      if (!acc.count(i)) return i;
    return std::size_t(-1);
  }

  std::vector<Embedding> docs_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<std::uint32_t, double>>> postings_;
};

}  // namespace linksyn
