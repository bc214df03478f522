// linksyn command-line entry point.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "linksyn/linksyn.hpp"

using namespace linksyn;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kStageFailure = 2, kBackendFailure = 3 };

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kBackendUnavailable:
    case Errc::kRateLimited:
      return kBackendFailure;
    case Errc::kMalformedLine:
    case Errc::kUnknownDiscipline:
    case Errc::kDuplicateId:
    case Errc::kEmptyKpSet:
    case Errc::kUnknownKp:
    case Errc::kDimensionMismatch:
    case Errc::kSupportViolation:
    case Errc::kArityMismatch:
    case Errc::kConfigInvalid:
    case Errc::kInvalidArgument:
      return kValidation;
    default:
      return kStageFailure;
  }
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

void say(const std::string& msg) { std::cerr << "linksyn: " << msg << "\n"; }

std::string rejected_path(const std::string& out) {
  std::filesystem::path p(out);
  const std::string stem = p.extension() == ".jsonl" ? p.stem().string() : p.filename().string();
  return (p.parent_path() / (stem + ".rejected.jsonl")).string();
}

struct CorpusArgs {
  std::string corpus;
  std::string taxonomy;
  bool lenient = false;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "annotated QA corpus (JSONL)")->required();
    app->add_option("--taxonomy", taxonomy, "discipline taxonomy (JSON array of labels)");
    app->add_flag("--lenient", lenient, "drop malformed lines instead of failing");
  }

  Corpus load(unsigned threads) const {
    const DisciplineTaxonomy tax = taxonomy.empty() ? DisciplineTaxonomy() : DisciplineTaxonomy::from_file(taxonomy);
    LoadReport report;
    Corpus c = load_corpus(corpus, tax, {lenient, threads}, &report);
    for (const auto& [why, n] : report.dropped) say("dropped " + std::to_string(n) + " line(s): " + why);
    return c;
  }
};

struct BackendArgs {
  std::string kind = "mock";
  HttpOptions http;
  std::size_t concurrency = 4;
  int max_attempts = 4;

  void add(CLI::App* app) {
    app->add_option("--backend", kind, "mock | http")->check(CLI::IsMember({"mock", "http"}));
    app->add_option("--endpoint", http.endpoint, "OpenAI-compatible base URL, e.g. http://localhost:8000/v1");
    app->add_option("--model", http.model, "model name sent to the endpoint");
    app->add_option("--api-key-env", http.api_key_env, "environment variable holding the API key");
    app->add_option("--temperature", http.temperature)->check(CLI::NonNegativeNumber);
    app->add_option("--top-p", http.top_p)->check(CLI::Range(0.0, 1.0));
    app->add_option("--timeout", http.timeout_s, "per-request timeout in seconds");
    app->add_option("--concurrency", concurrency, "maximum requests in flight")->check(CLI::PositiveNumber);
    app->add_option("--max-attempts", max_attempts, "attempts per request on rate limits")->check(CLI::PositiveNumber);
  }

  std::unique_ptr<Backend> make() const {
    BackendConfig b;
    b.kind = kind;
    b.http = http;
    if (kind == "http" && (http.endpoint.empty() || http.model.empty()))
      throw Error(Errc::kConfigInvalid, "http backend needs --endpoint and --model");
    return make_backend(b);
  }

  RetryPolicy retry() const {
    RetryPolicy r;
    r.max_attempts = max_attempts;
    return r;
  }
};

struct EmbedArgs {
  std::string endpoint;
  std::string model;
  bool hashing = false;
  double threshold = 0.95;

  void add(CLI::App* app, bool with_threshold) {
    app->add_option("--embed-endpoint", endpoint, "OpenAI-compatible embeddings base URL");
    app->add_option("--embed-model", model, "embedding model name");
    app->add_flag("--embed-hashing", hashing, "use the offline hashing embedder");
    if (with_threshold) app->add_option("--embed-threshold", threshold)->check(CLI::Range(-1.0, 1.0));
  }

  bool enabled() const { return hashing || !endpoint.empty(); }

  std::unique_ptr<Embedder> make(unsigned threads) const {
    EmbeddingConfig e;
    e.kind = endpoint.empty() ? "hashing" : "remote";
    e.http.endpoint = endpoint;
    e.http.model = model.empty() ? "default" : model;
    return make_embedder(e, threads);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-point graph data synthesis"};
  app.require_subcommand(1);
  unsigned threads = default_threads();
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  // consolidate
  auto* cons = app.add_subcommand("consolidate", "merge near-duplicate knowledge-point labels");
  CorpusArgs cons_corpus;
  cons_corpus.add(cons);
  std::string cons_map, cons_out;
  ConsolidationConfig cons_cfg;
  cons->add_option("--out-map", cons_map, "alias map output (JSON)")->required();
  cons->add_option("--out-corpus", cons_out, "rewritten corpus output (JSONL)");
  cons->add_option("--prefix-len", cons_cfg.prefix_len)->check(CLI::PositiveNumber);
  cons->add_option("--min-edit", cons_cfg.min_edit_threshold);
  cons->add_option("--edit-ratio", cons_cfg.edit_length_ratio)->check(CLI::NonNegativeNumber);
  cons->add_option("--cosine", cons_cfg.cosine_threshold)->check(CLI::Range(0.0, 1.0));

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "build the knowledge-point co-occurrence graph");
  CorpusArgs bg_corpus;
  bg_corpus.add(bg);
  std::string bg_out, bg_map;
  bg->add_option("--out", bg_out, "graph file")->required();
  bg->add_option("--alias-map", bg_map, "apply this alias map before building");

  // stats
  auto* st = app.add_subcommand("stats", "graph statistics as JSON");
  std::string st_graph;
  StatsOptions st_opts;
  st->add_option("--graph", st_graph)->required();
  st->add_flag("--estimate-diameter", st_opts.estimate_diameter, "BFS diameter lower bound from sampled sources");
  st->add_option("--diameter-sources", st_opts.diameter_sources)->check(CLI::PositiveNumber);
  st->add_option("--seed", st_opts.seed);

  // sample-paths
  auto* sp = app.add_subcommand("sample-paths", "sample knowledge-point paths");
  std::string sp_graph, sp_out, sp_policy = "hybrid";
  WalkConfig sp_cfg;
  double sp_alpha = 0.5;
  sp->add_option("--graph", sp_graph)->required();
  sp->add_option("--policy", sp_policy)->check(CLI::IsMember({"coverage", "popularity", "hybrid"}));
  sp->add_option("--length", sp_cfg.length)->check(CLI::PositiveNumber);
  sp->add_option("--max-length", sp_cfg.max_length)->check(CLI::PositiveNumber);
  sp->add_option("--count", sp_cfg.count, "paths to emit")->check(CLI::PositiveNumber);
  sp->add_option("--seed", sp_cfg.rng_seed);
  sp->add_option("--alpha", sp_alpha, "coverage share for the hybrid policy")->check(CLI::Range(0.0, 1.0));
  sp->add_option("--retry-factor", sp_cfg.retry_factor)->check(CLI::PositiveNumber);
  sp->add_option("--out", sp_out)->required();

  // select-seeds
  auto* ss = app.add_subcommand("select-seeds", "attribute-guided seed selection along paths");
  std::string ss_graph, ss_paths, ss_out, ss_h = "0.10,0.15,0.25,0.25,0.25", ss_s;
  std::uint64_t ss_seed = 0;
  ss->add_option("--graph", ss_graph)->required();
  ss->add_option("--paths", ss_paths)->required();
  ss->add_option("--out", ss_out)->required();
  ss->add_option("--seed", ss_seed);
  ss->add_option("--difficulty-law", ss_h, "five comma-separated probabilities for H1..H5");
  ss->add_option("--discipline-law", ss_s, "JSON object {label: probability}; default: empirical");

  // synthesize
  auto* sy = app.add_subcommand("synthesize", "generate QA items from seed groups");
  std::string sy_groups, sy_out, sy_template = "mcq", sy_role;
  CorpusArgs sy_corpus;
  sy_corpus.add(sy);
  BackendArgs sy_backend;
  sy_backend.add(sy);
  double sy_mcq = 0.5;
  std::uint64_t sy_seed = 0;
  sy->add_option("--groups", sy_groups)->required();
  sy->add_option("--template", sy_template, "mcq | essay | mixed")->check(CLI::IsMember({"mcq", "essay", "mixed"}));
  sy->add_option("--mcq-fraction", sy_mcq, "share of mcq groups when --template mixed")->check(CLI::Range(0.0, 1.0));
  sy->add_option("--role", sy_role, "college | graduate; default draws per group");
  sy->add_option("--seed", sy_seed);
  sy->add_option("--out", sy_out)->required();

  // refine
  auto* rf = app.add_subcommand("refine", "regenerate answers with step-by-step solutions");
  std::string rf_in, rf_out;
  BackendArgs rf_backend;
  rf_backend.add(rf);
  rf->add_option("--in", rf_in)->required();
  rf->add_option("--out", rf_out)->required();

  // filter
  auto* fl = app.add_subcommand("filter", "decontaminate and quality-filter synthesized records");
  std::string fl_in, fl_out, fl_verdicts, fl_index, fl_save_index;
  std::vector<std::string> fl_bench;
  std::size_t fl_ngram = 10;
  FilterConfig fl_cfg;
  EmbedArgs fl_embed;
  fl->add_option("--in", fl_in)->required();
  fl->add_option("--benchmarks", fl_bench, "benchmark files or directories");
  fl->add_option("--index", fl_index, "prebuilt n-gram index file");
  fl->add_option("--save-index", fl_save_index, "write the n-gram index built from --benchmarks");
  fl->add_option("--ngram", fl_ngram)->check(CLI::PositiveNumber);
  fl->add_option("--min-question-tokens", fl_cfg.min_question_tokens);
  fl->add_option("--min-answer-tokens", fl_cfg.min_answer_tokens);
  fl_embed.add(fl, true);
  fl->add_option("--out", fl_out)->required();
  fl->add_option("--verdicts", fl_verdicts)->required();

  // run
  auto* rn = app.add_subcommand("run", "run the whole pipeline from a config file");
  std::string rn_config, rn_from, rn_out_dir;
  bool rn_resume = false, rn_check = false;
  std::optional<std::uint64_t> rn_seed;
  rn->add_option("--config", rn_config)->required();
  rn->add_flag("--resume", rn_resume, "reuse stage outputs whose inputs and config are unchanged");
  rn->add_option("--from-stage", rn_from, "rerun this stage and everything after it");
  rn->add_option("--out-dir", rn_out_dir, "override out_dir");
  rn->add_option("--seed", rn_seed, "override seed");
  rn->add_flag("--validate-only", rn_check, "validate the config and exit");

  // report-similarity
  auto* rs = app.add_subcommand("report-similarity", "seed and intra-group similarity statistics");
  std::string rs_in, rs_out;
  CorpusArgs rs_corpus;
  rs_corpus.add(rs);
  EmbedArgs rs_embed;
  rs_embed.add(rs, false);
  rs->add_option("--in", rs_in)->required();
  rs->add_option("--out", rs_out, "write the report here as well as stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*cons) {
      cons_cfg.threads = threads;
      const Corpus corpus = cons_corpus.load(threads);
      auto res = consolidate(corpus, cons_cfg);
      save_alias_map(cons_map, res.map);
      if (!cons_out.empty()) save_corpus(cons_out, res.corpus);
      emit({{"instances", corpus.size()},
            {"kps_before", res.kps_before},
            {"kps_after_surface", res.kps_after_stage1},
            {"kps_after", res.kps_after}});
    } else if (*bg) {
      Corpus corpus = bg_corpus.load(threads);
      if (!bg_map.empty()) corpus = apply_alias_map(corpus, load_alias_map(bg_map));
      const KpGraph g = build_graph(corpus, threads);
      save_graph(g, bg_out);
      emit({{"nodes", g.node_count()}, {"edges", g.edge_count()}, {"postings", g.posting_count()},
            {"instances", g.instance_count()}, {"memory_bytes", g.memory_bytes()}});
    } else if (*st) {
      emit(compute_stats(load_graph(st_graph), st_opts).to_json());
    } else if (*sp) {
      const KpGraph g = load_graph(sp_graph);
      const WalkSampler sampler(g);
      sp_cfg.threads = threads;
      std::vector<Path> paths;
      json info = json::object();
      if (sp_policy == "hybrid") {
        WalkConfig a = sp_cfg, b = sp_cfg;
        a.policy = Policy::kCoverage;
        b.policy = Policy::kPopularity;
        auto ra = sample_paths(sampler, a);
        auto rb = sample_paths(sampler, b);
        paths = hybrid_blend(ra.paths, rb.paths, sp_alpha, sp_cfg.count, sp_cfg.rng_seed);
        info["coverage_pool"] = ra.paths.size();
        info["popularity_pool"] = rb.paths.size();
      } else {
        sp_cfg.policy = parse_policy(sp_policy);
        auto r = sample_paths(sampler, sp_cfg);
        if (r.budget_exhausted)
          say("RetryBudgetExhausted: " + std::to_string(r.paths.size()) + " unique paths after " +
              std::to_string(r.attempts) + " attempts");
        info["attempts"] = r.attempts;
        info["budget_exhausted"] = r.budget_exhausted;
        paths = std::move(r.paths);
      }
      save_paths(sp_out, paths, g);
      std::size_t truncated = 0, coverage = 0;
      for (const auto& p : paths) {
        truncated += p.truncated;
        coverage += p.policy == Policy::kCoverage;
      }
      info["paths"] = paths.size();
      info["truncated"] = truncated;
      info["coverage_tagged"] = coverage;
      emit(info);
    } else if (*ss) {
      const KpGraph g = load_graph(ss_graph);
      const auto paths = load_paths(ss_paths, g);
      AttributeDistribution dist;
      dist.difficulty = parse_difficulty_law(ss_h);
      dist.discipline = ss_s.empty() ? empirical_discipline_law(g)
                                     : discipline_law_from_json(json::parse(text::read_file(ss_s)));
      const CandidateIndex index(g, threads);
      auto res = build_seed_groups(index, paths, dist, ss_seed, threads);
      save_seed_groups(ss_out, res.groups);
      emit({{"groups", res.groups.size()}, {"duplicates_dropped", res.duplicates_dropped},
            {"empty_groups", res.empty_groups}});
    } else if (*sy) {
      const Corpus corpus = sy_corpus.load(threads);
      const auto groups = load_seed_groups(sy_groups);
      auto backend = sy_backend.make();
      SynthesisConfig cfg;
      if (sy_template != "mixed") cfg.question_type = parse_question_type(sy_template);
      cfg.mcq_fraction = sy_mcq;
      cfg.role = sy_role;
      cfg.concurrency = sy_backend.concurrency;
      cfg.retry = sy_backend.retry();
      cfg.rng_seed = sy_seed;
      auto res = synthesize(groups, corpus, cfg, *backend);
      save_records(sy_out, res.records);
      save_quarantine(rejected_path(sy_out), res.quarantined);
      emit({{"prompts", res.prompts_sent}, {"records", res.records.size()},
            {"quarantined", res.quarantined.size()}, {"repaired", res.repaired}});
    } else if (*rf) {
      const auto records = load_records(rf_in);
      auto backend = rf_backend.make();
      RefineConfig cfg;
      cfg.concurrency = rf_backend.concurrency;
      cfg.retry = rf_backend.retry();
      auto res = refine_answers(records, cfg, *backend);
      save_records(rf_out, res.records);
      save_quarantine(rejected_path(rf_out), res.quarantined);
      emit({{"records", res.records.size()}, {"quarantined", res.quarantined.size()},
            {"options_added", res.options_added}});
    } else if (*fl) {
      std::vector<std::pair<std::size_t, std::string>> bad;
      const auto records = load_records(fl_in, &bad);
      std::optional<NgramIndex> index;
      std::vector<std::string> bench_texts;
      if (!fl_bench.empty()) {
        std::vector<BenchmarkSource> sources;
        bench_texts = load_benchmark_texts(fl_bench, &sources);
        if (fl_index.empty()) {
          index = NgramIndex::build(bench_texts, fl_ngram, threads);
          index->sources() = sources;
        }
      }
      if (!fl_index.empty()) {
        index = NgramIndex::load(fl_index);
        if (index->n() != fl_ngram)
          throw Error(Errc::kConfigInvalid, "index was built with n=" + std::to_string(index->n()) +
                                                ", requested --ngram " + std::to_string(fl_ngram));
      }
      if (!fl_save_index.empty() && index) index->save(fl_save_index);
      std::unique_ptr<Embedder> embedder;
      EmbeddingCheck check;
      if (fl_embed.enabled()) {
        if (bench_texts.empty()) throw Error(Errc::kConfigInvalid, "embedding screening needs --benchmarks");
        embedder = fl_embed.make(threads);
        check = {embedder.get(), &bench_texts};
        fl_cfg.embed_threshold = fl_embed.threshold;
      }
      auto rep = filter_records(records, fl_cfg, index ? &*index : nullptr, check, bad);
      for (const auto& w : rep.warnings) say(w);
      save_records(fl_out, rep.kept);
      save_verdicts(fl_verdicts, rep.verdicts);
      emit(rep.summary());
    } else if (*rn) {
      json doc;
      try {
        doc = json::parse(text::read_file(rn_config));
      } catch (const json::exception& e) {
        throw Error(Errc::kConfigInvalid, rn_config + ": " + e.what());
      }
      if (rn_seed) doc["seed"] = *rn_seed;
      if (!rn_out_dir.empty()) doc["out_dir"] = std::filesystem::absolute(rn_out_dir).string();
      if (!doc.contains("threads")) doc["threads"] = threads;
      PipelineConfig cfg = parse_config(doc, std::filesystem::path(rn_config).parent_path().string());
      if (rn_check) {
        emit({{"valid", true}, {"config_hash", config_hash(cfg)}});
        return kOk;
      }
      RunOptions opts;
      opts.resume = rn_resume;
      opts.from_stage = rn_from;
      opts.log = say;
      const json manifest = run_pipeline(cfg, opts);
      emit({{"config_hash", manifest["config_hash"]}, {"outputs", manifest["outputs"]}});
    } else if (*rs) {
      const Corpus corpus = rs_corpus.load(threads);
      const auto records = load_records(rs_in);
      auto embedder = rs_embed.make(threads);
      const json rep = similarity_report(records, corpus, *embedder).to_json();
      if (!rs_out.empty()) text::write_file(rs_out, rep.dump(2) + "\n");
      emit(rep);
    }
  } catch (const PipelineRunner::StageFailure& e) {
    std::cerr << "linksyn: " << e.what() << "\n";
    return exit_code_for(e.code()) == kBackendFailure ? kBackendFailure : kStageFailure;
  } catch (const ConfigError& e) {
    std::cerr << "linksyn: " << e.what() << "\n";
    return kValidation;
  } catch (const Error& e) {
    std::cerr << "linksyn: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "linksyn: invalid JSON: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "linksyn: " << e.what() << "\n";
    return kStageFailure;
  }
  return kOk;
}
