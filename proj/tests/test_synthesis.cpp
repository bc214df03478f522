#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "linksyn/synthesis.hpp"
#include "test_util.hpp"

using namespace linksyn;
using testutil::make_instance;

namespace {

Corpus seed_corpus() {
  std::vector<QAInstance> v;
  for (int i = 0; i < 6; ++i)
    v.push_back(make_instance("s" + std::to_string(i), {"k" + std::to_string(i)}, "Physics", 3,
                              "Seed question number " + std::to_string(i) + " about energy conservation."));
  return Corpus(std::move(v), DisciplineTaxonomy{});
}

SeedGroup group(std::vector<std::string> ids) {
  SeedGroup g;
  g.seed_ids = ids;
  g.kps = ids;
  g.target_h = 3;
  g.target_s = "Physics";
  return g;
}

SynthesisConfig fast_config() {
  SynthesisConfig cfg;
  cfg.retry = {4, 1, 2.0, 4};
  cfg.rng_seed = 11;
  return cfg;
}

class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const std::string&) override {
    ++calls;
    return reply_;
  }
  std::string id() const override { return "scripted"; }
  int calls = 0;

 private:
  std::string reply_;
};

class LocalServer {
 public:
  LocalServer() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  httplib::Server server;

 private:
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Prompts, GenNumMappingAndRendering) {
  const std::vector<std::string> seeds{"First seed.", "Second seed.", "Third seed."};
  const std::map<int, int> expected{{1, 10}, {2, 15}, {3, 20}};
  for (const auto& [ref, gen] : expected) {
    const auto t = PromptTemplate::synthesizer(QuestionType::kMultipleChoice, ref, "graduate");
    EXPECT_EQ(t.gen_num, gen);
    const std::vector<std::string> used(seeds.begin(), seeds.begin() + ref);
    const auto prompt = render_synthesizer(t, used);
    EXPECT_NE(prompt.find("Generate " + std::to_string(gen) + " novel questions"), std::string::npos);
    EXPECT_NE(prompt.find("provided " + std::to_string(ref) + " reference questions"), std::string::npos);
    EXPECT_NE(prompt.find("Act as a graduate educator"), std::string::npos);
    EXPECT_NE(prompt.find("question type is multiple-choice"), std::string::npos);
    for (const char* ph : {"{Role Assigner}", "{ref_num}", "{gen_num}", "{Seed Data}", "{Format-specified JSON}",
                           "{Format-specific Constraints}"})
      EXPECT_EQ(prompt.find(ph), std::string::npos) << ph;
    for (int i = 0; i < ref; ++i)
      EXPECT_NE(prompt.find("Reference Question " + std::to_string(i + 1) + ":\n" + seeds[i]), std::string::npos);
  }
  const auto essay = render_synthesizer(PromptTemplate::synthesizer(QuestionType::kEssay, 1), {"x"});
  EXPECT_NE(essay.find("\"solution\""), std::string::npos);
}

TEST(Prompts, ArityAndRoleErrors) {
  try {
    PromptTemplate::synthesizer(QuestionType::kEssay, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kArityMismatch);
  }
  const auto t = PromptTemplate::synthesizer(QuestionType::kEssay, 2);
  try {
    render_synthesizer(t, {"only one"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kArityMismatch);
  }
  EXPECT_THROW(PromptTemplate::synthesizer(QuestionType::kEssay, 1, "kindergarten"), Error);
  EXPECT_EQ(parse_question_type("multiple-choice"), QuestionType::kMultipleChoice);
  EXPECT_THROW(parse_question_type("haiku"), Error);
}

TEST(Extractor, HandlesCommonResponseShapes) {
  auto items = [](std::string_view s) { return extract_json_array(s); };
  auto r = items("Sure! Here you go: [{\"question\": \"a\"}] Hope it helps.");
  ASSERT_TRUE(r.items);
  EXPECT_EQ(r.items->size(), 1u);
  EXPECT_FALSE(r.repaired);

  r = items("```json\n[{\"question\": \"a\"}, {\"question\": \"b\"}]\n```");
  ASSERT_TRUE(r.items);
  EXPECT_EQ(r.items->size(), 2u);

  r = items("[{\"question\": \"a\", \"x\": [1, 2,],}, ]");
  ASSERT_TRUE(r.items);
  EXPECT_TRUE(r.repaired);
  EXPECT_EQ((*r.items)[0]["x"].size(), 2u);

  r = items("```json\n[{\"question\": \"a\"}, {\"question\": \"b\"}, {\"question\": \"c");
  ASSERT_TRUE(r.items);
  EXPECT_TRUE(r.repaired);
  EXPECT_EQ(r.items->size(), 2u);

  r = items("{\"questions\": [{\"question\": \"a\"}]}");
  ASSERT_TRUE(r.items);
  EXPECT_EQ((*r.items)[0]["question"], "a");

  r = items("{\"Solution Steps\": \"s\", \"Final Answer\": \"f\"}");
  ASSERT_TRUE(r.items);
  EXPECT_EQ(r.items->size(), 1u);

  EXPECT_FALSE(items("I cannot help with that.").items);
  EXPECT_FALSE(items("[ \"unterminated").items);
}

TEST(Extractor, ValidateItem) {
  const json good = {{"question", "q"}, {"options", {"a", "b", "c", "d"}}, {"answer_index", 2}};
  EXPECT_EQ(validate_item(good, QuestionType::kMultipleChoice), "");
  json three = good;
  three["options"] = {"a", "b", "c"};
  EXPECT_NE(validate_item(three, QuestionType::kMultipleChoice), "");
  json bad_idx = good;
  bad_idx["answer_index"] = 4;
  EXPECT_NE(validate_item(bad_idx, QuestionType::kMultipleChoice), "");
  EXPECT_NE(validate_item({{"question", "q"}, {"answer", "a"}}, QuestionType::kEssay), "");
  EXPECT_EQ(validate_item({{"question", "q"}, {"solution", "s"}, {"answer", "a"}}, QuestionType::kEssay), "");
}

TEST(Synthesize, MockRunProducesMappedCountsAndProvenance) {
  const auto corpus = seed_corpus();
  const std::vector<SeedGroup> groups{group({"s0"}), group({"s1", "s2"}), group({"s3", "s4", "s5"})};
  MockBackend backend;
  auto cfg = fast_config();
  const auto r = synthesize(groups, corpus, cfg, backend);
  EXPECT_EQ(r.records.size(), 10u + 15u + 20u);
  EXPECT_TRUE(r.quarantined.empty());
  EXPECT_EQ(r.prompts_sent, 3u);
  EXPECT_EQ(r.records.front().id, "g0-q0");
  EXPECT_EQ(r.records[10].id, "g1-q0");
  for (const auto& rec : r.records) {
    const auto prompt = reconstruct_prompt(rec, corpus);
    EXPECT_EQ(sha256_hex(prompt), rec.provenance.prompt_sha256);
    EXPECT_EQ(rec.provenance.backend_id, "mock/1");
    EXPECT_EQ(std::to_string(rec.provenance.seed_ids.size()), rec.provenance.template_id.substr(rec.provenance.template_id.find("-r") + 2, 1));
  }
  EXPECT_NE(r.records[0].provenance.template_id.find("-r1-g10-"), std::string::npos);
  EXPECT_NE(r.records[10].provenance.template_id.find("-r2-g15-"), std::string::npos);
  EXPECT_NE(r.records[25].provenance.template_id.find("-r3-g20-"), std::string::npos);
}

TEST(Synthesize, DeterministicAcrossConcurrencyAndCapped) {
  const auto corpus = seed_corpus();
  std::vector<SeedGroup> groups;
  for (int i = 0; i < 12; ++i) groups.push_back(group({"s" + std::to_string(i % 6)}));
  auto cfg = fast_config();
  cfg.concurrency = 1;
  MockBackend serial;
  const auto a = synthesize(groups, corpus, cfg, serial);
  cfg.concurrency = 3;
  MockBackend::Options opt;
  opt.latency_ms = 15;
  MockBackend parallel(opt);
  const auto b = synthesize(groups, corpus, cfg, parallel);
  EXPECT_EQ(a.records, b.records);
  EXPECT_LE(parallel.max_in_flight(), 3);
  EXPECT_GE(parallel.max_in_flight(), 2);
}

TEST(Synthesize, QuarantineAndRepair) {
  const auto corpus = seed_corpus();
  const std::vector<SeedGroup> groups{group({}), group({"s0", "s1", "s2", "s3"}), group({"s0"})};
  MockBackend::Options opt;
  opt.truncate_every = 1;
  MockBackend backend(opt);
  auto cfg = fast_config();
  cfg.question_type = QuestionType::kEssay;
  const auto r = synthesize(groups, corpus, cfg, backend);
  ASSERT_EQ(r.quarantined.size(), 2u);
  EXPECT_EQ(r.quarantined[0].group_id, "g0");
  EXPECT_NE(r.quarantined[1].reason.find("ArityMismatch"), std::string::npos);
  EXPECT_EQ(r.repaired, 1u);
  EXPECT_GT(r.records.size(), 0u);
  EXPECT_LT(r.records.size(), 10u);

  ScriptedBackend prose("I would rather not.");
  cfg.parse_retries = 2;
  const auto p = synthesize({group({"s0"})}, corpus, cfg, prose);
  EXPECT_EQ(prose.calls, 3);
  ASSERT_EQ(p.quarantined.size(), 1u);
  EXPECT_NE(p.quarantined[0].reason.find("ParseFailure"), std::string::npos);
  EXPECT_EQ(p.quarantined[0].raw, "I would rather not.");
}

TEST(Synthesize, InvalidItemsAreQuarantinedIndividually) {
  const auto corpus = seed_corpus();
  ScriptedBackend mixed(
      R"([{"question": "ok", "options": ["a","b","c","d"], "answer_index": 1},
          {"question": "bad", "options": ["a","b"], "answer_index": 0}])");
  auto cfg = fast_config();
  cfg.question_type = QuestionType::kMultipleChoice;
  const auto r = synthesize({group({"s0"})}, corpus, cfg, mixed);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].id, "g0-q0");
  ASSERT_EQ(r.quarantined.size(), 1u);
  EXPECT_NE(r.quarantined[0].reason.find("4 options"), std::string::npos);
}

TEST(Refine, AddsMissingOptionE) {
  const auto corpus = seed_corpus();
  auto cfg = fast_config();
  cfg.question_type = QuestionType::kMultipleChoice;
  MockBackend gen;
  const auto synth = synthesize({group({"s0"})}, corpus, cfg, gen);
  MockBackend::Options opt;
  opt.missing_option_every = 1;
  MockBackend fixer(opt);
  RefineConfig rc;
  rc.retry = cfg.retry;
  const auto r = refine_answers(synth.records, rc, fixer);
  ASSERT_EQ(r.records.size(), synth.records.size());
  EXPECT_EQ(r.options_added, synth.records.size());
  for (const auto& rec : r.records) {
    ASSERT_EQ(rec.options.size(), 5u);
    EXPECT_EQ(rec.options[4].rfind("(E) ", 0), 0u);
    EXPECT_EQ(rec.answer_index, 4);
    EXPECT_TRUE(rec.refined);
    EXPECT_FALSE(rec.solution.empty());
  }
}

TEST(Refine, KeepsConfirmedAnswers) {
  const auto corpus = seed_corpus();
  auto cfg = fast_config();
  cfg.question_type = QuestionType::kEssay;
  MockBackend backend;
  const auto synth = synthesize({group({"s2"})}, corpus, cfg, backend);
  RefineConfig rc;
  rc.retry = cfg.retry;
  const auto r = refine_answers(synth.records, rc, backend);
  ASSERT_EQ(r.records.size(), synth.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) EXPECT_EQ(r.records[i].answer, synth.records[i].answer);

  ScriptedBackend junk("no json here");
  EXPECT_EQ(refine_answers(synth.records, rc, junk).quarantined.size(), synth.records.size());
}

TEST(Retry, RateLimitsAreRetriedThenSurface) {
  MockBackend::Options opt;
  opt.rate_limit_first = 2;
  MockBackend flaky(opt);
  const RetryPolicy fast{4, 1, 2.0, 4};
  EXPECT_NO_THROW(complete_with_retry(flaky, "hello", fast));
  EXPECT_EQ(flaky.calls(), 3);

  opt.rate_limit_first = 100;
  MockBackend limited(opt);
  try {
    complete_with_retry(limited, "hello", fast);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kBackendUnavailable);
  }
  EXPECT_EQ(limited.calls(), 4);

  MockBackend::Options down;
  down.unavailable = true;
  MockBackend dead(down);
  EXPECT_THROW(complete_with_retry(dead, "x", fast), Error);
}

TEST(Http, ChatCompletionsPayloadAndRetry) {
  LocalServer srv;
  std::atomic<int> hits{0};
  json last_body;
  std::string last_auth;
  std::mutex mu;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits.fetch_add(1) == 0) {
      res.status = 429;
      return;
    }
    std::lock_guard lock(mu);
    last_body = json::parse(req.body);
    last_auth = req.get_header_value("Authorization");
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "[{\"ok\": 1}]"}}}}}}}.dump(),
                    "application/json");
  });
  ::setenv("LINKSYN_TEST_KEY", "sekrit", 1);
  HttpOptions opts;
  opts.endpoint = srv.url();
  opts.model = "tiny-model";
  opts.api_key_env = "LINKSYN_TEST_KEY";
  opts.timeout_s = 5;
  HttpBackend backend(opts);
  EXPECT_EQ(backend.id(), "http/tiny-model");
  const auto out = complete_with_retry(backend, "the prompt", {3, 1, 2.0, 4});
  EXPECT_EQ(out, "[{\"ok\": 1}]");
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(last_body["model"], "tiny-model");
  EXPECT_EQ(last_body["messages"][0]["role"], "user");
  EXPECT_EQ(last_body["messages"][0]["content"], "the prompt");
  EXPECT_DOUBLE_EQ(last_body["temperature"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(last_body["top_p"].get<double>(), 0.95);
  EXPECT_EQ(last_auth, "Bearer sekrit");
}

TEST(Http, StatusMapping) {
  LocalServer srv;
  srv.server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto prompt = json::parse(req.body)["messages"][0]["content"].get<std::string>();
    if (prompt == "500") res.status = 503;
    else if (prompt == "400") res.status = 400;
    else res.set_content("{\"unexpected\": true}", "application/json");
  });
  HttpOptions opts;
  opts.endpoint = srv.url();
  opts.model = "m";
  opts.timeout_s = 5;
  HttpBackend backend(opts);
  auto code_of = [&](const std::string& prompt) {
    try {
      backend.complete(prompt);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::kInvalidArgument;
  };
  EXPECT_EQ(code_of("500"), Errc::kBackendUnavailable);
  EXPECT_EQ(code_of("400"), Errc::kConfigInvalid);
  EXPECT_EQ(code_of("other"), Errc::kBackendUnavailable);

  opts.endpoint = "http://127.0.0.1:1/v1";
  HttpBackend nowhere(opts);
  try {
    nowhere.complete("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kBackendUnavailable);
  }
  opts.endpoint = "not a url";
  EXPECT_THROW(HttpBackend{opts}, Error);
}

TEST(RecordFile, RoundTripAndBadLines) {
  testutil::TempDir dir;
  const auto corpus = seed_corpus();
  auto cfg = fast_config();
  MockBackend backend;
  const auto r = synthesize({group({"s0"}), group({"s1", "s2"})}, corpus, cfg, backend);
  save_records(dir.file("r.jsonl"), r.records);
  EXPECT_EQ(load_records(dir.file("r.jsonl")), r.records);

  text::write_file(dir.file("bad.jsonl"), record_to_json(r.records[0]).dump() + "\n{oops\n{\"id\":\"x\"}\n");
  std::vector<std::pair<std::size_t, std::string>> bad;
  EXPECT_EQ(load_records(dir.file("bad.jsonl"), &bad).size(), 1u);
  ASSERT_EQ(bad.size(), 2u);
  EXPECT_EQ(bad[0].first, 2u);
  EXPECT_EQ(bad[1].first, 3u);
  EXPECT_THROW(load_records(dir.file("bad.jsonl")), Error);
}
