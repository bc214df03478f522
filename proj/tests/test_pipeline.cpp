#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "linksyn/pipeline.hpp"
#include "test_util.hpp"

using namespace linksyn;
namespace fs = std::filesystem;

namespace {

const std::string kSamples = LINKSYN_SAMPLES_DIR;

json toy_doc(const fs::path& out_dir) {
  json doc = json::parse(text::read_file(kSamples + "/toy_config.json"));
  doc["corpus"] = kSamples + "/toy_corpus.jsonl";
  doc["filters"]["benchmarks"] = json::array({kSamples + "/benchmarks"});
  doc["out_dir"] = out_dir.string();
  return doc;
}

std::vector<std::string> problems_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  for (const auto& p : problems)
    if (p.find(needle) != std::string::npos) return true;
  return false;
}

// Digest of every regular file under `dir` keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir, bool with_manifest = true) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto rel = fs::relative(e.path(), dir).string();
    if (e.is_regular_file() && (with_manifest || rel != "manifest.json")) out[rel] = file_sha256_hex(e.path().string());
  }
  return out;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(LINKSYN_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, SampleIsValid) {
  EXPECT_NO_THROW(validate_config(kSamples + "/toy_config.json"));
}

TEST(Config, ProblemsAreCollectedAndNamed) {
  testutil::TempDir dir;
  json doc = toy_doc(dir.path());
  doc["selection"]["difficulty"] = {0.1, 0.1, 0.2, 0.25, 0.25};
  doc["walks"]["alpha"] = 1.5;
  doc["walks"]["bogus"] = 1;
  const auto problems = problems_of(doc);
  EXPECT_EQ(problems.size(), 3u);
  EXPECT_TRUE(mentions(problems, "selection.difficulty: probabilities sum to 0.9"));
  EXPECT_TRUE(mentions(problems, "walks.alpha: must lie in [0, 1]"));
  EXPECT_TRUE(mentions(problems, "walks.bogus: unknown key"));

  doc = toy_doc(dir.path());
  doc["corpus"] = (dir.path() / "absent.jsonl").string();
  EXPECT_TRUE(mentions(problems_of(doc), "corpus: file not found"));
  doc = toy_doc(dir.path());
  doc["synthesis"]["gen_num"] = {{"1", 10}, {"2", 15}};
  EXPECT_TRUE(mentions(problems_of(doc), "no entry for 3 seeds"));
  doc = toy_doc(dir.path());
  doc["walks"]["lengths"] = {1, 4};
  EXPECT_TRUE(mentions(problems_of(doc), "walks.lengths: length 4"));
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  const auto c = validate_config(kSamples + "/toy_config.json");
  EXPECT_EQ(c.corpus, fs::path(kSamples + "/toy_corpus.jsonl").lexically_normal().string());
  EXPECT_EQ(c.gen_nums, default_gen_num_map());
  EXPECT_EQ(c.seed, 7u);
}

TEST(Config, HashTracksSemanticFieldsOnly) {
  testutil::TempDir dir;
  const auto base = parse_config(toy_doc(dir.path()));
  const auto h = config_hash(base);
  auto same = base;
  same.threads = 7;
  same.concurrency = 9;
  same.out_dir = "/elsewhere";
  same.backend.http.timeout_s = 5;
  same.backend.mock.latency_ms = 3;
  EXPECT_EQ(config_hash(same), h);
  auto changed = [&](auto mutate) {
    auto c = base;
    mutate(c);
    return config_hash(c) != h;
  };
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.seed = 8; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.alpha = 0.25; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.lambda = 0.75; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.difficulty = {0.2, 0.2, 0.2, 0.2, 0.2}; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.gen_nums[3] = 21; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.ngram = 9; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.consolidation.cosine_threshold = 0.8; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.question_type = "essay"; }));
  EXPECT_TRUE(changed([](PipelineConfig& c) { c.refine = false; }));
}

TEST(Pipeline, DeterministicAcrossRunsAndThreadCounts) {
  testutil::TempDir a, b;
  auto ca = parse_config(toy_doc(a.path()));
  auto cb = parse_config(toy_doc(b.path()));
  ca.threads = 1;
  cb.threads = 3;
  cb.concurrency = 1;
  const auto ma = run_pipeline(ca);
  const auto mb = run_pipeline(cb);
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(snapshot(a.path()), snapshot(b.path()));
  EXPECT_FALSE(load_records((a.path() / "clean.jsonl").string()).empty());
}

TEST(Pipeline, SeedChangesOutputs) {
  testutil::TempDir a, b;
  auto ca = parse_config(toy_doc(a.path()));
  auto cb = ca;
  cb.out_dir = b.path().string();
  cb.seed = 8;
  EXPECT_NE(run_pipeline(ca)["outputs"]["paths.jsonl"], run_pipeline(cb)["outputs"]["paths.jsonl"]);
}

TEST(Pipeline, ForcedRerunFromEveryStageMatchesUninterrupted) {
  testutil::TempDir full;
  const auto cfg = parse_config(toy_doc(full.path()));
  run_pipeline(cfg);
  const auto expected = snapshot(full.path(), false);
  for (const auto& stage : stage_names()) {
    testutil::TempDir resumed;
    fs::copy(full.path(), resumed.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    auto c = cfg;
    c.out_dir = resumed.path().string();
    RunOptions opts;
    opts.resume = true;
    opts.from_stage = stage;
    std::vector<std::string> log;
    opts.log = [&](const std::string& m) { log.push_back(m); };
    const auto manifest = run_pipeline(c, opts);
    EXPECT_EQ(snapshot(resumed.path(), false), expected) << stage;
    EXPECT_EQ(manifest["stages"][stage_names().size() - 1]["status"], "completed");
    const auto pos = std::find(stage_names().begin(), stage_names().end(), stage) - stage_names().begin();
    for (long k = 0; k < pos; ++k) EXPECT_EQ(log[k], stage_names()[k] + ": reused");
  }
}

TEST(Pipeline, ResumeAfterBackendFailure) {
  testutil::TempDir full, broken;
  const auto cfg = parse_config(toy_doc(full.path()));
  run_pipeline(cfg);

  auto bad = cfg;
  bad.out_dir = broken.path().string();
  bad.backend.mock.unavailable = true;
  bad.backend.retry.max_attempts = 1;
  try {
    run_pipeline(bad);
    FAIL();
  } catch (const PipelineRunner::StageFailure& e) {
    EXPECT_EQ(e.stage, "synthesize");
    EXPECT_EQ(e.code(), Errc::kBackendUnavailable);
  }
  const json manifest = json::parse(text::read_file((broken.path() / "manifest.json").string()));
  EXPECT_EQ(manifest["failed_stage"], "synthesize");
  EXPECT_EQ(manifest["stages"].back()["error"]["code"], "BackendUnavailable");
  EXPECT_EQ(manifest["stages"].size(), 6u);

  auto good = cfg;
  good.out_dir = broken.path().string();
  RunOptions opts;
  opts.resume = true;
  std::vector<std::string> log;
  opts.log = [&](const std::string& m) { log.push_back(m); };
  run_pipeline(good, opts);
  EXPECT_EQ(log[4], "select-seeds: reused");
  EXPECT_NE(log[5].find("synthesize: {"), std::string::npos);
  EXPECT_EQ(snapshot(broken.path(), false), snapshot(full.path(), false));
}

TEST(Pipeline, ChangedInputInvalidatesLaterStages) {
  testutil::TempDir dir;
  const fs::path corpus = dir.path() / "corpus.jsonl";
  fs::copy_file(kSamples + "/toy_corpus.jsonl", corpus);
  json doc = toy_doc(dir.path() / "out");
  doc["corpus"] = corpus.string();
  const auto cfg = parse_config(doc);
  run_pipeline(cfg);
  std::ofstream(corpus, std::ios::app)
      << R"({"id":"extra","text":"Relate entropy and enthalpy.","kps":["entropy","enthalpy"],"discipline":"Chemistry","difficulty":2})"
      << "\n";
  RunOptions opts;
  opts.resume = true;
  std::vector<std::string> log;
  opts.log = [&](const std::string& m) { log.push_back(m); };
  run_pipeline(cfg, opts);
  for (const auto& line : log) EXPECT_EQ(line.find("reused"), std::string::npos) << line;
}

TEST(Cli, ExitCodes) {
  testutil::TempDir dir;
  const auto write_config = [&](const json& doc) {
    const auto path = dir.file("cfg" + std::to_string(std::rand()) + ".json");
    text::write_file(path, doc.dump());
    return path;
  };
  EXPECT_EQ(run_cli("run --config " + write_config(toy_doc(dir.path() / "ok"))), 0);

  json missing = toy_doc(dir.path() / "missing");
  missing["corpus"] = dir.file("nope.jsonl");
  EXPECT_EQ(run_cli("run --config " + write_config(missing)), 1);
  EXPECT_FALSE(fs::exists(dir.path() / "missing"));

  json range = toy_doc(dir.path() / "range");
  range["walks"]["alpha"] = 1.5;
  EXPECT_EQ(run_cli("run --config " + write_config(range)), 1);
  EXPECT_EQ(run_cli("run"), 1);

  text::write_file(dir.file("broken.jsonl"), "{\"id\": \"a\", \"text\": \n");
  json stage = toy_doc(dir.path() / "stage");
  stage["corpus"] = dir.file("broken.jsonl");
  EXPECT_EQ(run_cli("run --config " + write_config(stage)), 2);

  json http = toy_doc(dir.path() / "http");
  http["synthesis"]["backend"] = {{"kind", "http"}, {"endpoint", "http://127.0.0.1:1/v1"}, {"model", "m"},
                                  {"max_attempts", 1}, {"timeout_s", 2}};
  EXPECT_EQ(run_cli("run --config " + write_config(http)), 3);

  EXPECT_EQ(run_cli("stats --graph " + (dir.path() / "ok" / "graph.lkg").string()), 0);
  EXPECT_EQ(run_cli("stats --graph " + dir.file("absent.lkg")), 2);
}
