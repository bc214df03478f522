#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "linksyn/backend.hpp"
#include "linksyn/consolidation.hpp"
#include "linksyn/corpus.hpp"
#include "linksyn/digest.hpp"
#include "linksyn/embedding.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/filters.hpp"
#include "linksyn/graph.hpp"
#include "linksyn/sampling.hpp"
#include "linksyn/selection.hpp"
#include "linksyn/synthesis.hpp"

namespace linksyn {

using json = nlohmann::json;

struct BackendConfig {
  std::string kind = "mock";  // mock | http
  HttpOptions http;
  MockBackend::Options mock;
  RetryPolicy retry;
};

struct EmbeddingConfig {
  bool enabled = false;
  std::string kind = "hashing";  // hashing | remote
  HttpOptions http;
  double threshold = 0.95;
};

struct PipelineConfig {
  std::string corpus;
  std::string taxonomy;
  std::string out_dir = "linksyn-out";
  std::uint64_t seed = 0;
  unsigned threads = default_threads();
  bool lenient = false;

  bool consolidate = true;
  ConsolidationConfig consolidation;

  std::vector<std::size_t> lengths{1, 2, 3};
  std::size_t max_length = 3;
  std::size_t paths_per_length = 1000;
  std::map<std::string, std::size_t> policy_quota;  // per-policy sampled pool; default = paths_per_length
  std::size_t retry_factor = 20;
  double alpha = 0.5;
  double lambda = 0.5;

  std::array<double, 5> difficulty{0.10, 0.15, 0.25, 0.25, 0.25};
  std::vector<std::pair<std::string, double>> discipline;  // empty: empirical

  std::string question_type = "mixed";  // mcq | essay | mixed
  double mcq_fraction = 0.5;
  std::string role;  // empty: uniform per group
  GenNumMap gen_nums = default_gen_num_map();
  std::size_t concurrency = 4;
  bool refine = true;
  BackendConfig backend;

  std::vector<std::string> benchmarks;
  std::size_t ngram = 10;
  FilterConfig filter;
  EmbeddingConfig embedding;

  std::size_t pool_size(Policy p) const {
    auto it = policy_quota.find(std::string(policy_name(p)));
    return it == policy_quota.end() ? paths_per_length : it->second;
  }
};

namespace detail {

// Typed lookups into a JSON object that record problems instead of throwing.
class ConfigReader {
 public:
  ConfigReader(const json& doc, std::vector<std::string>& errors, std::string prefix = "")
      : doc_(doc), errors_(errors), prefix_(std::move(prefix)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(name(key) + ": wrong type");
    }
  }

  std::optional<ConfigReader> child(const char* key) {
    seen_.insert(key);
    if (!doc_.contains(key)) return std::nullopt;
    if (!doc_.at(key).is_object()) {
      errors_.push_back(name(key) + ": must be an object");
      return std::nullopt;
    }
    return ConfigReader(doc_.at(key), errors_, name(key) + ".");
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  void reject_unknown() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it)
      if (!seen_.count(it.key())) errors_.push_back(name(it.key().c_str()) + ": unknown key");
  }

  std::string name(const std::string& key) const { return prefix_ + key; }
  std::vector<std::string>& errors() { return errors_; }

 private:
  const json& doc_;
  std::vector<std::string>& errors_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline void read_http(ConfigReader& r, HttpOptions& http) {
  r.get("endpoint", http.endpoint);
  r.get("model", http.model);
  r.get("api_key_env", http.api_key_env);
  r.get("temperature", http.temperature);
  r.get("top_p", http.top_p);
  r.get("timeout_s", http.timeout_s);
}

}  // namespace detail

// Parses and validates a config document; every problem found is reported together.
inline PipelineConfig parse_config(const json& doc, const std::string& base_dir = "") {
  std::vector<std::string> errors;
  PipelineConfig c;
  if (!doc.is_object()) throw Error(Errc::kConfigInvalid, "config must be a JSON object");
  auto resolve = [&](std::string& p) {
    if (!p.empty() && !base_dir.empty() && std::filesystem::path(p).is_relative())
      p = (std::filesystem::path(base_dir) / p).lexically_normal().string();
  };

  detail::ConfigReader top(doc, errors);
  top.get("corpus", c.corpus);
  top.get("taxonomy", c.taxonomy);
  top.get("out_dir", c.out_dir);
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("lenient", c.lenient);
  if (auto r = top.child("consolidation")) {
    r->get("enabled", c.consolidate);
    r->get("prefix_len", c.consolidation.prefix_len);
    r->get("min_edit_threshold", c.consolidation.min_edit_threshold);
    r->get("edit_length_ratio", c.consolidation.edit_length_ratio);
    r->get("cosine_threshold", c.consolidation.cosine_threshold);
    r->reject_unknown();
  }
  if (auto r = top.child("walks")) {
    r->get("lengths", c.lengths);
    r->get("max_length", c.max_length);
    r->get("paths_per_length", c.paths_per_length);
    r->get("policy_quota", c.policy_quota);
    r->get("retry_factor", c.retry_factor);
    r->get("alpha", c.alpha);
    r->get("lambda", c.lambda);
    r->reject_unknown();
  }
  if (auto r = top.child("selection")) {
    std::vector<double> h;
    r->get("difficulty", h);
    if (r->raw("difficulty")) {
      if (h.size() != 5) errors.push_back("selection.difficulty: needs exactly 5 probabilities");
      else std::copy(h.begin(), h.end(), c.difficulty.begin());
    }
    if (const json* d = r->raw("discipline"); d && !d->is_null()) {
      try {
        c.discipline = discipline_law_from_json(*d);
      } catch (const Error& e) {
        errors.push_back(std::string("selection.discipline: ") + e.what());
      }
    }
    r->reject_unknown();
  }
  if (auto r = top.child("synthesis")) {
    r->get("question_type", c.question_type);
    r->get("mcq_fraction", c.mcq_fraction);
    r->get("role", c.role);
    r->get("concurrency", c.concurrency);
    r->get("refine", c.refine);
    if (const json* g = r->raw("gen_num")) {
      if (!g->is_object()) errors.push_back("synthesis.gen_num: must be an object");
      else {
        c.gen_nums.clear();
        for (auto it = g->begin(); it != g->end(); ++it) {
          try {
            c.gen_nums[std::stoi(it.key())] = it.value().get<int>();
          } catch (const std::exception&) {
            errors.push_back("synthesis.gen_num." + it.key() + ": must map an integer seed count to an integer");
          }
        }
      }
    }
    if (auto b = r->child("backend")) {
      b->get("kind", c.backend.kind);
      detail::read_http(*b, c.backend.http);
      b->get("max_attempts", c.backend.retry.max_attempts);
      b->get("initial_backoff_ms", c.backend.retry.initial_backoff_ms);
      b->get("max_backoff_ms", c.backend.retry.max_backoff_ms);
      b->get("mock_latency_ms", c.backend.mock.latency_ms);
      b->get("mock_truncate_every", c.backend.mock.truncate_every);
      b->get("mock_missing_option_every", c.backend.mock.missing_option_every);
      b->reject_unknown();
    }
    r->reject_unknown();
  }
  if (auto r = top.child("filters")) {
    r->get("benchmarks", c.benchmarks);
    r->get("ngram", c.ngram);
    r->get("min_question_tokens", c.filter.min_question_tokens);
    r->get("min_answer_tokens", c.filter.min_answer_tokens);
    r->get("dedup", c.filter.dedup);
    if (auto e = r->child("embedding")) {
      e->get("enabled", c.embedding.enabled);
      e->get("kind", c.embedding.kind);
      e->get("threshold", c.embedding.threshold);
      detail::read_http(*e, c.embedding.http);
      e->reject_unknown();
    }
    r->reject_unknown();
  }
  top.reject_unknown();

  resolve(c.corpus);
  resolve(c.taxonomy);
  resolve(c.out_dir);
  for (auto& b : c.benchmarks) resolve(b);
  c.filter.embed_threshold = c.embedding.threshold;

  namespace fs = std::filesystem;
  std::error_code ec;
  if (c.corpus.empty()) errors.push_back("corpus: required");
  else if (!fs::is_regular_file(c.corpus, ec)) errors.push_back("corpus: file not found: " + c.corpus);
  if (!c.taxonomy.empty() && !fs::is_regular_file(c.taxonomy, ec))
    errors.push_back("taxonomy: file not found: " + c.taxonomy);
  if (c.threads == 0) c.threads = default_threads();

  if (c.consolidation.prefix_len < 1) errors.push_back("consolidation.prefix_len: must be at least 1");
  if (!(c.consolidation.edit_length_ratio >= 0)) errors.push_back("consolidation.edit_length_ratio: must be non-negative");
  if (!(c.consolidation.cosine_threshold >= 0 && c.consolidation.cosine_threshold <= 1))
    errors.push_back("consolidation.cosine_threshold: must lie in [0, 1]");

  if (c.max_length < 1) errors.push_back("walks.max_length: must be at least 1");
  if (c.lengths.empty()) errors.push_back("walks.lengths: must not be empty");
  for (auto l : c.lengths)
    if (l < 1 || l > c.max_length)
      errors.push_back("walks.lengths: length " + std::to_string(l) + " outside [1, " + std::to_string(c.max_length) + "]");
  if (std::set<std::size_t>(c.lengths.begin(), c.lengths.end()).size() != c.lengths.size())
    errors.push_back("walks.lengths: duplicate length");
  if (c.paths_per_length < 1) errors.push_back("walks.paths_per_length: must be at least 1");
  for (const auto& [k, v] : c.policy_quota) {
    if (k != "coverage" && k != "popularity") errors.push_back("walks.policy_quota." + k + ": unknown policy");
    else if (v < 1) errors.push_back("walks.policy_quota." + k + ": must be at least 1");
  }
  if (c.retry_factor < 1) errors.push_back("walks.retry_factor: must be at least 1");
  if (!(c.alpha >= 0 && c.alpha <= 1)) errors.push_back("walks.alpha: must lie in [0, 1], got " + std::to_string(c.alpha));
  if (!(c.lambda >= 0 && c.lambda <= 1)) errors.push_back("walks.lambda: must lie in [0, 1], got " + std::to_string(c.lambda));

  {
    double sum = 0;
    bool negative = false;
    for (double p : c.difficulty) {
      negative |= !(p >= 0);
      sum += p;
    }
    if (negative) errors.push_back("selection.difficulty: probabilities must be non-negative");
    if (std::abs(sum - 1.0) > 1e-9)
      errors.push_back("selection.difficulty: probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  if (!c.discipline.empty()) {
    double sum = 0;
    for (const auto& [label, p] : c.discipline) {
      if (!(p >= 0)) errors.push_back("selection.discipline." + label + ": probability must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      errors.push_back("selection.discipline: probabilities sum to " + std::to_string(sum) + ", not 1");
  }

  if (c.question_type != "mcq" && c.question_type != "essay" && c.question_type != "mixed")
    errors.push_back("synthesis.question_type: must be mcq, essay or mixed");
  if (!(c.mcq_fraction >= 0 && c.mcq_fraction <= 1)) errors.push_back("synthesis.mcq_fraction: must lie in [0, 1]");
  if (!c.role.empty() && c.role != "college" && c.role != "graduate")
    errors.push_back("synthesis.role: must be college, graduate or empty");
  if (c.concurrency < 1) errors.push_back("synthesis.concurrency: must be at least 1");
  for (const auto& [k, v] : c.gen_nums)
    if (k < 1 || v < 1) errors.push_back("synthesis.gen_num: entries must be positive");
  for (std::size_t l = 1; l <= c.max_length; ++l)
    if (!c.gen_nums.count(static_cast<int>(l)))
      errors.push_back("synthesis.gen_num: no entry for " + std::to_string(l) + " seeds");
  if (c.backend.kind != "mock" && c.backend.kind != "http")
    errors.push_back("synthesis.backend.kind: must be mock or http");
  if (c.backend.kind == "http") {
    if (c.backend.http.endpoint.empty()) errors.push_back("synthesis.backend.endpoint: required for http backend");
    if (c.backend.http.model.empty()) errors.push_back("synthesis.backend.model: required for http backend");
  }
  if (!(c.backend.http.temperature >= 0)) errors.push_back("synthesis.backend.temperature: must be non-negative");
  if (!(c.backend.http.top_p > 0 && c.backend.http.top_p <= 1)) errors.push_back("synthesis.backend.top_p: must lie in (0, 1]");
  if (c.backend.retry.max_attempts < 1) errors.push_back("synthesis.backend.max_attempts: must be at least 1");

  if (c.ngram < 1) errors.push_back("filters.ngram: must be at least 1");
  for (const auto& b : c.benchmarks)
    if (!fs::exists(b, ec)) errors.push_back("filters.benchmarks: not found: " + b);
  if (c.embedding.kind != "hashing" && c.embedding.kind != "remote")
    errors.push_back("filters.embedding.kind: must be hashing or remote");
  if (c.embedding.enabled && c.embedding.kind == "remote" &&
      (c.embedding.http.endpoint.empty() || c.embedding.http.model.empty()))
    errors.push_back("filters.embedding: remote embedder needs endpoint and model");
  if (!(c.embedding.threshold >= -1 && c.embedding.threshold <= 1))
    errors.push_back("filters.embedding.threshold: must lie in [-1, 1]");

  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " problem(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(errors, msg);
  }
  return c;
}

inline PipelineConfig validate_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigInvalid, path + ": " + e.what());
  }
  return parse_config(doc, std::filesystem::path(path).parent_path().string());
}

// Canonical form of every field that changes outputs. Paths, thread counts,
// concurrency, timeouts and credentials are excluded; input contents are
// tracked per stage instead.
inline json semantic_config(const PipelineConfig& c) {
  json gen = json::object();
  for (const auto& [k, v] : c.gen_nums) gen[std::to_string(k)] = v;
  json disc = json::array();
  for (const auto& [k, v] : c.discipline) disc.push_back({k, v});
  return {
      {"seed", c.seed},
      {"lenient", c.lenient},
      {"consolidation",
       {{"enabled", c.consolidate},
        {"prefix_len", c.consolidation.prefix_len},
        {"min_edit_threshold", c.consolidation.min_edit_threshold},
        {"edit_length_ratio", c.consolidation.edit_length_ratio},
        {"cosine_threshold", c.consolidation.cosine_threshold}}},
      {"walks",
       {{"lengths", c.lengths},
        {"max_length", c.max_length},
        {"paths_per_length", c.paths_per_length},
        {"pool_coverage", c.pool_size(Policy::kCoverage)},
        {"pool_popularity", c.pool_size(Policy::kPopularity)},
        {"retry_factor", c.retry_factor},
        {"alpha", c.alpha},
        {"lambda", c.lambda}}},
      {"selection", {{"difficulty", c.difficulty}, {"discipline", disc}}},
      {"synthesis",
       {{"question_type", c.question_type},
        {"mcq_fraction", c.question_type == "mixed" ? json(c.mcq_fraction) : json(nullptr)},
        {"role", c.role},
        {"gen_num", gen},
        {"refine", c.refine},
        {"backend",
         {{"kind", c.backend.kind},
          {"model", c.backend.kind == "http" ? json(c.backend.http.model) : json(nullptr)},
          {"endpoint", c.backend.kind == "http" ? json(c.backend.http.endpoint) : json(nullptr)},
          {"temperature", c.backend.http.temperature},
          {"top_p", c.backend.http.top_p},
          {"mock_truncate_every", c.backend.mock.truncate_every},
          {"mock_missing_option_every", c.backend.mock.missing_option_every}}}}},
      {"filters",
       {{"ngram", c.ngram},
        {"min_question_tokens", c.filter.min_question_tokens},
        {"min_answer_tokens", c.filter.min_answer_tokens},
        {"dedup", c.filter.dedup},
        {"embedding",
         c.embedding.enabled ? json{{"kind", c.embedding.kind},
                                    {"model", c.embedding.kind == "remote" ? json(c.embedding.http.model) : json(nullptr)},
                                    {"threshold", c.embedding.threshold}}
                             : json(nullptr)}}},
  };
}

inline std::string config_hash(const PipelineConfig& c) { return sha256_hex(semantic_config(c).dump()); }

inline std::unique_ptr<Backend> make_backend(const BackendConfig& b) {
  if (b.kind == "mock") return std::make_unique<MockBackend>(b.mock);
  return std::make_unique<HttpBackend>(b.http);
}

inline std::unique_ptr<Embedder> make_embedder(const EmbeddingConfig& e, unsigned threads) {
  if (e.kind == "remote") return std::make_unique<RemoteEmbedder>(e.http);
  return std::make_unique<HashingEmbedder>(threads);
}

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> kStages = {"consolidate", "build-graph", "sample-paths", "blend",
                                                   "select-seeds", "synthesize", "refine", "filter"};
  return kStages;
}

struct RunOptions {
  bool resume = false;
  std::string from_stage;  // force this stage and everything after it to rerun
  std::function<void(const std::string&)> log;
};

// Stage k reads its inputs from the files written by earlier stages, so a
// resumed run sees exactly the bytes an uninterrupted run would.
class PipelineRunner {
 public:
  PipelineRunner(PipelineConfig cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
    dir_ = std::filesystem::path(cfg_.out_dir);
    hash_ = config_hash(cfg_);
  }

  json run() {
    std::filesystem::create_directories(dir_);
    std::filesystem::create_directories(dir_ / "paths");
    json previous;
    if (opts_.resume && std::filesystem::exists(file("manifest.json"))) {
      previous = json::parse(text::read_file(file("manifest.json")), nullptr, false);
      if (previous.is_discarded() || previous.value("config_hash", "") != hash_) previous = json();
    }
    if (!opts_.from_stage.empty() &&
        std::find(stage_names().begin(), stage_names().end(), opts_.from_stage) == stage_names().end())
      throw Error(Errc::kInvalidArgument, "unknown stage '" + opts_.from_stage + "'");

    manifest_ = {{"config_hash", hash_}, {"config", semantic_config(cfg_)}, {"stages", json::array()}};
    bool forced = false;
    for (const auto& name : stage_names()) {
      forced |= name == opts_.from_stage;
      json record = {{"name", name}};
      const auto inputs = stage_inputs(name);
      record["inputs"] = digests(inputs);
      if (!forced && reusable(previous, name, record["inputs"])) {
        json old = find_stage(previous, name);
        old["status"] = "reused";
        manifest_["stages"].push_back(old);
        say(name + ": reused");
        continue;
      }
      forced = true;  // every later stage must rerun
      const auto t0 = std::chrono::steady_clock::now();
      try {
        record["counts"] = run_stage(name);
      } catch (const Error& e) {
        record["status"] = "failed";
        record["error"] = {{"code", errc_name(e.code())}, {"message", e.what()}};
        manifest_["stages"].push_back(record);
        manifest_["failed_stage"] = name;
        write_manifest();
        throw StageFailure(name, e);
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      record["status"] = "completed";
      record["outputs"] = digests(stage_outputs(name));
      manifest_["stages"].push_back(record);
      say(name + ": " + record["counts"].dump() + " in " + std::to_string(seconds) + " s");
      write_manifest();
    }
    manifest_["outputs"] = json::object();
    for (const auto& name : stage_names()) {
      const json d = digests(stage_outputs(name));
      for (auto it = d.begin(); it != d.end(); ++it) manifest_["outputs"][it.key()] = it.value();
    }
    write_manifest();
    return manifest_;
  }

  struct StageFailure : Error {
    StageFailure(std::string stage_name, const Error& cause)
        : Error(cause.code(), "stage " + stage_name + " failed: " + cause.what()), stage(std::move(stage_name)) {}
    std::string stage;
  };

 private:
  std::string file(const std::string& rel) const { return (dir_ / rel).string(); }

  void say(const std::string& msg) const {
    if (opts_.log) opts_.log(msg);
  }

  void write_manifest() const { text::write_file(file("manifest.json"), manifest_.dump(2) + "\n"); }

  std::vector<std::string> walk_pool_files() const {
    std::vector<std::string> out;
    for (auto l : cfg_.lengths)
      for (auto p : {Policy::kCoverage, Policy::kPopularity})
        out.push_back(file("paths/l" + std::to_string(l) + "." + std::string(policy_name(p)) + ".jsonl"));
    return out;
  }

  std::vector<std::string> stage_inputs(const std::string& name) const {
    if (name == "consolidate") {
      std::vector<std::string> in{cfg_.corpus};
      if (!cfg_.taxonomy.empty()) in.push_back(cfg_.taxonomy);
      return in;
    }
    if (name == "build-graph") return {file("corpus.consolidated.jsonl")};
    if (name == "sample-paths") return {file("graph.lkg")};
    if (name == "blend") {
      auto in = walk_pool_files();
      in.insert(in.begin(), file("graph.lkg"));
      return in;
    }
    if (name == "select-seeds") return {file("graph.lkg"), file("paths.jsonl")};
    if (name == "synthesize") return {file("groups.jsonl"), file("corpus.consolidated.jsonl")};
    if (name == "refine") return {file("synth.jsonl")};
    std::vector<std::string> in = {file("refined.jsonl")};
    for (const auto& b : benchmark_files()) in.push_back(b);
    return in;
  }

  std::vector<std::string> stage_outputs(const std::string& name) const {
    if (name == "consolidate") return {file("corpus.consolidated.jsonl"), file("alias_map.json")};
    if (name == "build-graph") return {file("graph.lkg")};
    if (name == "sample-paths") return walk_pool_files();
    if (name == "blend") return {file("paths.jsonl")};
    if (name == "select-seeds") return {file("groups.jsonl")};
    if (name == "synthesize") return {file("synth.jsonl"), file("synth.rejected.jsonl")};
    if (name == "refine") return {file("refined.jsonl"), file("refined.rejected.jsonl")};
    return {file("clean.jsonl"), file("verdicts.jsonl")};
  }

  std::vector<std::string> benchmark_files() const {
    std::vector<std::string> files;
    for (const auto& b : cfg_.benchmarks) {
      if (std::filesystem::is_directory(b)) {
        for (const auto& e : std::filesystem::recursive_directory_iterator(b))
          if (e.is_regular_file()) files.push_back(e.path().string());
      } else {
        files.push_back(b);
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  }

  json digests(const std::vector<std::string>& files) const {
    json out = json::object();
    for (const auto& f : files) {
      std::error_code ec;
      const std::string key = std::filesystem::path(f).lexically_relative(dir_).string();
      const std::string shown = key.empty() || key.rfind("..", 0) == 0 ? f : key;
      out[shown] = std::filesystem::is_regular_file(f, ec) ? json(file_sha256_hex(f)) : json(nullptr);
    }
    return out;
  }

  static json find_stage(const json& manifest, const std::string& name) {
    if (!manifest.is_object() || !manifest.contains("stages")) return json();
    for (const auto& s : manifest["stages"])
      if (s.value("name", "") == name) return s;
    return json();
  }

  bool reusable(const json& previous, const std::string& name, const json& inputs) const {
    const json old = find_stage(previous, name);
    if (!old.is_object()) return false;
    const auto status = old.value("status", "");
    if (status != "completed" && status != "reused") return false;
    if (old.value("inputs", json()) != inputs) return false;
    return old.value("outputs", json()) == digests(stage_outputs(name)) && !old["outputs"].is_null();
  }

  DisciplineTaxonomy taxonomy() const {
    return cfg_.taxonomy.empty() ? DisciplineTaxonomy() : DisciplineTaxonomy::from_file(cfg_.taxonomy);
  }

  Corpus consolidated_corpus() const { return load_corpus(file("corpus.consolidated.jsonl"), taxonomy(), {false, cfg_.threads}); }

  json run_stage(const std::string& name) {
    if (name == "consolidate") {
      LoadReport report;
      const Corpus corpus = load_corpus(cfg_.corpus, taxonomy(), {cfg_.lenient, cfg_.threads}, &report);
      ConsolidationConfig cc = cfg_.consolidation;
      cc.threads = cfg_.threads;
      ConsolidationResult res;
      if (cfg_.consolidate) {
        res = consolidate(corpus, cc);
      } else {
        for (const auto& k : corpus.kp_universe()) res.map.set(k, k);
        res.corpus = corpus;
        res.kps_before = res.kps_after_stage1 = res.kps_after = corpus.kp_universe().size();
      }
      save_corpus(file("corpus.consolidated.jsonl"), res.corpus);
      save_alias_map(file("alias_map.json"), res.map);
      json dropped = json::object();
      for (const auto& [k, v] : report.dropped) dropped[k] = v;
      return {{"instances", res.corpus.size()},     {"dropped", dropped},
              {"kps_before", res.kps_before},       {"kps_after_surface", res.kps_after_stage1},
              {"kps_after", res.kps_after}};
    }
    if (name == "build-graph") {
      KpGraph g = build_graph(consolidated_corpus(), cfg_.threads);
      g.set_metadata({{"config_hash", hash_}});
      save_graph(g, file("graph.lkg"));
      return {{"nodes", g.node_count()}, {"edges", g.edge_count()}, {"postings", g.posting_count()}};
    }
    if (name == "sample-paths") {
      const KpGraph g = load_graph(file("graph.lkg"));
      const WalkSampler sampler(g);
      json counts = json::object();
      for (auto l : cfg_.lengths)
        for (auto p : {Policy::kCoverage, Policy::kPopularity}) {
          WalkConfig wc;
          wc.length = l;
          wc.max_length = cfg_.max_length;
          wc.policy = p;
          wc.count = cfg_.pool_size(p);
          wc.rng_seed = cfg_.seed;
          wc.retry_factor = cfg_.retry_factor;
          wc.threads = cfg_.threads;
          auto res = sample_paths(sampler, wc);
          const std::string key = "l" + std::to_string(l) + "." + std::string(policy_name(p));
          save_paths(file("paths/" + key + ".jsonl"), res.paths, g);
          counts[key] = {{"paths", res.paths.size()}, {"attempts", res.attempts},
                         {"budget_exhausted", res.budget_exhausted}};
        }
      return counts;
    }
    if (name == "blend") {
      const KpGraph g = load_graph(file("graph.lkg"));
      std::vector<Path> all;
      json counts = json::object();
      for (auto l : cfg_.lengths) {
        const std::string base = "paths/l" + std::to_string(l) + ".";
        const auto pa = load_paths(file(base + "coverage.jsonl"), g);
        const auto pb = load_paths(file(base + "popularity.jsonl"), g);
        const auto blended =
            hybrid_blend(pa, pb, cfg_.alpha, cfg_.paths_per_length, mix64(cfg_.seed ^ fnv1a64("blend/l" + std::to_string(l))));
        std::size_t cov = 0;
        for (const auto& p : blended) cov += p.policy == Policy::kCoverage;
        counts["l" + std::to_string(l)] = {{"paths", blended.size()}, {"coverage", cov}, {"popularity", blended.size() - cov}};
        all.insert(all.end(), blended.begin(), blended.end());
      }
      save_paths(file("paths.jsonl"), all, g);
      return counts;
    }
    if (name == "select-seeds") {
      const KpGraph g = load_graph(file("graph.lkg"));
      const auto paths = load_paths(file("paths.jsonl"), g);
      AttributeDistribution dist;
      dist.difficulty = cfg_.difficulty;
      dist.discipline = cfg_.discipline.empty() ? empirical_discipline_law(g) : cfg_.discipline;
      const CandidateIndex index(g, cfg_.threads);
      auto res = build_seed_groups(index, paths, dist, cfg_.seed, cfg_.threads);
      save_seed_groups(file("groups.jsonl"), res.groups);
      std::map<std::string, std::size_t> by_size;
      for (const auto& grp : res.groups) ++by_size[std::to_string(grp.seed_ids.size())];
      return {{"groups", res.groups.size()}, {"duplicates_dropped", res.duplicates_dropped},
              {"empty_groups", res.empty_groups}, {"by_seed_count", by_size}};
    }
    if (name == "synthesize") {
      const Corpus corpus = consolidated_corpus();
      const auto groups = load_seed_groups(file("groups.jsonl"));
      auto backend = make_backend(cfg_.backend);
      SynthesisConfig sc;
      if (cfg_.question_type != "mixed") sc.question_type = parse_question_type(cfg_.question_type);
      sc.mcq_fraction = cfg_.mcq_fraction;
      sc.role = cfg_.role;
      sc.gen_nums = cfg_.gen_nums;
      sc.concurrency = cfg_.concurrency;
      sc.retry = cfg_.backend.retry;
      sc.rng_seed = cfg_.seed;
      auto res = synthesize(groups, corpus, sc, *backend);
      save_records(file("synth.jsonl"), res.records);
      save_quarantine(file("synth.rejected.jsonl"), res.quarantined);
      std::map<std::string, std::size_t> per_template;
      for (const auto& r : res.records) ++per_template[r.provenance.template_id];
      return {{"prompts", res.prompts_sent}, {"records", res.records.size()},
              {"quarantined", res.quarantined.size()}, {"repaired", res.repaired}, {"by_template", per_template}};
    }
    if (name == "refine") {
      const auto records = load_records(file("synth.jsonl"));
      if (!cfg_.refine) {
        save_records(file("refined.jsonl"), records);
        save_quarantine(file("refined.rejected.jsonl"), {});
        return {{"records", records.size()}, {"skipped", true}};
      }
      auto backend = make_backend(cfg_.backend);
      RefineConfig rc;
      rc.concurrency = cfg_.concurrency;
      rc.retry = cfg_.backend.retry;
      auto res = refine_answers(records, rc, *backend);
      save_records(file("refined.jsonl"), res.records);
      save_quarantine(file("refined.rejected.jsonl"), res.quarantined);
      return {{"records", res.records.size()}, {"quarantined", res.quarantined.size()},
              {"options_added", res.options_added}};
    }
    // filter
    std::vector<std::pair<std::size_t, std::string>> bad;
    const auto records = load_records(file("refined.jsonl"), &bad);
    std::optional<NgramIndex> index;
    std::vector<std::string> bench_texts;
    if (!cfg_.benchmarks.empty()) {
      std::vector<BenchmarkSource> sources;
      bench_texts = load_benchmark_texts(cfg_.benchmarks, &sources);
      index = NgramIndex::build(bench_texts, cfg_.ngram, cfg_.threads);
      index->sources() = sources;
    }
    std::unique_ptr<Embedder> embedder;
    EmbeddingCheck check;
    if (cfg_.embedding.enabled && !bench_texts.empty()) {
      embedder = make_embedder(cfg_.embedding, cfg_.threads);
      check = {embedder.get(), &bench_texts};
    }
    auto rep = filter_records(records, cfg_.filter, index ? &*index : nullptr, check, bad);
    save_records(file("clean.jsonl"), rep.kept);
    save_verdicts(file("verdicts.jsonl"), rep.verdicts);
    return rep.summary();
  }

  PipelineConfig cfg_;
  RunOptions opts_;
  std::filesystem::path dir_;
  std::string hash_;
  json manifest_;
};

inline json run_pipeline(const PipelineConfig& cfg, RunOptions opts = {}) {
  return PipelineRunner(cfg, std::move(opts)).run();
}

}  // namespace linksyn
