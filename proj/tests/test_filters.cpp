#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <set>

#include "linksyn/filters.hpp"
#include "test_util.hpp"

using namespace linksyn;

namespace {

// Direct window comparison over token vectors.
bool oracle_overlap(const std::string& record, const std::vector<std::string>& bench, std::size_t n) {
  const auto r = text::tokenize(record);
  for (const auto& b : bench) {
    const auto t = text::tokenize(b);
    if (r.size() < n || t.size() < n) continue;
    for (std::size_t i = 0; i + n <= r.size(); ++i)
      for (std::size_t j = 0; j + n <= t.size(); ++j)
        if (std::equal(r.begin() + i, r.begin() + i + n, t.begin() + j)) return true;
  }
  return false;
}

std::string words(std::mt19937_64& gen, std::size_t n, const std::string& prefix, std::size_t vocab) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += gen() % 7 == 0 ? ", " : " ";
    s += prefix + std::to_string(gen() % vocab);
  }
  return s;
}

SynthRecord essay(std::string id, std::string question, std::string answer, std::string group = "g0",
                  std::vector<std::string> seeds = {}) {
  SynthRecord r;
  r.id = std::move(id);
  r.question_type = QuestionType::kEssay;
  r.question = std::move(question);
  r.solution = "steps";
  r.answer = std::move(answer);
  r.provenance.group_id = std::move(group);
  r.provenance.seed_ids = std::move(seeds);
  return r;
}

class TableEmbedder : public Embedder {
 public:
  explicit TableEmbedder(std::map<std::string, Embedding> table) : table_(std::move(table)) {}
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out;
    for (const auto& t : texts) out.push_back(table_.at(t));
    return out;
  }
  std::string id() const override { return "table"; }

 private:
  std::map<std::string, Embedding> table_;
};

class DownEmbedder : public Embedder {
 public:
  std::vector<Embedding> embed(const std::vector<std::string>&) override {
    throw Error(Errc::kEmbedderUnavailable, "connection refused");
  }
  std::string id() const override { return "down"; }
};

Embedding dense(std::vector<double> v) {
  std::vector<std::pair<std::uint64_t, double>> e;
  for (std::size_t i = 0; i < v.size(); ++i) e.emplace_back(i, v[i]);
  return Embedding::normalized(e);
}

// Rewrites the tokenizer id of a saved index and re-seals the checksum.
std::string with_tokenizer(const std::string& file, const std::string& tokenizer) {
  std::uint32_t header_len;
  std::memcpy(&header_len, file.data() + 12, 4);
  json header = json::parse(file.substr(16, header_len));
  std::uint64_t payload_len;
  std::memcpy(&payload_len, file.data() + 16 + header_len, 8);
  const std::string payload = file.substr(16 + header_len + 8, payload_len);
  header["tokenizer"] = tokenizer;
  const std::string h = header.dump();
  std::string out = file.substr(0, 12);
  const auto len = static_cast<std::uint32_t>(h.size());
  out.append(reinterpret_cast<const char*>(&len), 4);
  out += h;
  out.append(reinterpret_cast<const char*>(&payload_len), 8);
  out += payload;
  const auto digest = Sha256().update(h).update(payload).finish();
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

}  // namespace

TEST(Ngram, MatchesWindowOracleOnRandomPairs) {
  std::mt19937_64 gen(101);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + gen() % 4;
    const auto bench = words(gen, 5 + gen() % 20, "w", 4);
    const auto rec = words(gen, 3 + gen() % 20, "w", 4);
    const auto index = NgramIndex::build({bench}, n, 1);
    EXPECT_EQ(index.first_hit(rec).has_value(), oracle_overlap(rec, {bench}, n)) << rec << " | " << bench;
  }
}

TEST(Ngram, PlantedTenGramsAlwaysCaughtNineNever) {
  std::mt19937_64 gen(202);
  std::vector<std::string> bench;
  for (int i = 0; i < 100; ++i) bench.push_back(words(gen, 40, "b", 5000));
  const auto index = NgramIndex::build(bench, 10, 2);
  int caught = 0, false_alarms = 0;
  for (int i = 0; i < 100; ++i) {
    const auto toks = text::tokenize(bench[i]);
    const std::size_t at = gen() % (toks.size() - 10);
    std::string ten, nine;
    for (std::size_t k = 0; k < 10; ++k) ten += toks[at + k] + " ";
    for (std::size_t k = 0; k < 9; ++k) nine += toks[at + k] + " ";
    const std::string pre = words(gen, 8, "f", 100000), post = words(gen, 8, "f", 100000);
    caught += index.first_hit(pre + " " + ten + post).has_value();
    false_alarms += index.first_hit(pre + " " + nine + post).has_value();
  }
  EXPECT_EQ(caught, 100);
  EXPECT_EQ(false_alarms, 0);
}

TEST(Ngram, TokenizationMakesMatchingCaseAndPunctuationBlind) {
  const auto index = NgramIndex::build({"The quick brown fox jumps over the lazy dog again today"}, 10, 1);
  EXPECT_TRUE(index.first_hit("Q: THE QUICK, brown fox; jumps over the lazy dog again!").has_value());
  EXPECT_FALSE(index.first_hit("the quick brown fox").has_value());
  EXPECT_THROW(NgramIndex::build({"x"}, 0, 1), Error);
}

TEST(NgramFile, RoundTripAndRejections) {
  testutil::TempDir dir;
  std::mt19937_64 gen(3);
  std::vector<std::string> bench;
  for (int i = 0; i < 20; ++i) bench.push_back(words(gen, 30, "b", 200));
  auto index = NgramIndex::build(bench, 10, 2);
  index.sources().push_back({"bench.jsonl", "00"});
  index.save(dir.file("i.lkn"));
  const auto loaded = NgramIndex::load(dir.file("i.lkn"));
  EXPECT_EQ(loaded.size(), index.size());
  EXPECT_EQ(loaded.n(), 10u);
  EXPECT_EQ(loaded.sources().size(), 1u);
  for (const auto& g : ngrams(bench[7], 10)) EXPECT_TRUE(loaded.contains(g));
  EXPECT_FALSE(loaded.contains("not a gram at all in this index x y z w"));

  const std::string good = text::read_file(dir.file("i.lkn"));
  auto code_and_message = [&](const std::string& bytes) -> std::pair<Errc, std::string> {
    text::write_file(dir.file("bad.lkn"), bytes);
    try {
      NgramIndex::load(dir.file("bad.lkn"));
    } catch (const Error& e) {
      return {e.code(), e.what()};
    }
    return {Errc::kInvalidArgument, "accepted"};
  };
  auto [code, msg] = code_and_message(with_tokenizer(good, "whitespace/0"));
  EXPECT_EQ(code, Errc::kCorruptFile);
  EXPECT_NE(msg.find("tokenizer"), std::string::npos);
  std::string flipped = good;
  flipped[flipped.size() - 50] ^= 1;
  EXPECT_NE(code_and_message(flipped).second.find("checksum"), std::string::npos);
  EXPECT_NE(code_and_message(good.substr(0, 30)).second.find("truncated"), std::string::npos);
  std::string versioned = good;
  versioned[8] = 7;
  EXPECT_NE(code_and_message(versioned).second.find("version"), std::string::npos);
}

TEST(Benchmarks, LinesAndDirectories) {
  testutil::TempDir dir;
  std::filesystem::create_directories(dir.path() / "b" / "nested");
  text::write_file(dir.file("b/one.jsonl"), "{\"question\": \"alpha\", \"choices\": [\"beta\", 3], \"id\": \"z\"}\n\nplain text line\n");
  text::write_file(dir.file("b/nested/two.txt"), "gamma delta\n");
  std::vector<BenchmarkSource> sources;
  const auto texts = load_benchmark_texts({dir.file("b")}, &sources);
  EXPECT_EQ(texts, (std::vector<std::string>{"gamma delta", "beta z alpha", "plain text line"}));
  EXPECT_EQ(sources.size(), 2u);
  EXPECT_EQ(sources[0].sha256.size(), 64u);
  EXPECT_THROW(load_benchmark_texts({dir.file("missing")}), Error);
}

TEST(Filter, LowQualityDedupAndContaminationReasons) {
  const auto index = NgramIndex::build({"one two three four five six seven eight nine ten eleven"}, 10, 1);
  const std::vector<SynthRecord> records{
      essay("a", "What is the energy of the system now?", "42 J"),
      essay("b", "Short?", "x"),
      essay("c", "Compute one two three four five six seven eight nine ten please", "5"),
      essay("d", "What is the ENERGY of the system, now?", "42 J"),
      essay("e", "A well formed question with enough tokens here", ""),
  };
  const auto rep = filter_records(records, FilterConfig{}, &index);
  ASSERT_EQ(rep.verdicts.size(), 5u);
  EXPECT_TRUE(rep.verdicts[0].passed());
  EXPECT_EQ(rep.verdicts[1].reasons, (std::vector<std::string>{"TooShort"}));
  EXPECT_EQ(rep.verdicts[2].reasons, (std::vector<std::string>{"NgramContamination"}));
  EXPECT_EQ(rep.verdicts[2].detail, "one two three four five six seven eight nine ten");
  EXPECT_EQ(rep.verdicts[3].reasons, (std::vector<std::string>{"DuplicateOfOutput"}));
  EXPECT_EQ(rep.verdicts[4].reasons, (std::vector<std::string>{"TooShort"}));
  ASSERT_EQ(rep.kept.size(), 1u);
  EXPECT_EQ(rep.kept[0].id, "a");
  EXPECT_EQ(rep.reason_counts.at("TooShort"), 2u);
}

TEST(Filter, OrderIndependent) {
  std::mt19937_64 gen(9);
  std::vector<std::string> bench;
  for (int i = 0; i < 10; ++i) bench.push_back(words(gen, 30, "w", 30));
  const auto index = NgramIndex::build(bench, 4, 1);
  std::vector<SynthRecord> records;
  for (int i = 0; i < 150; ++i)
    records.push_back(essay("r" + std::to_string(1000 + i), words(gen, 2 + gen() % 8, "w", 30), words(gen, gen() % 2, "w", 3)));
  for (int i = 0; i < 20; ++i) records.push_back(essay("dup" + std::to_string(i), records[i].question, records[i].answer));
  auto key = [](const FilterReport& rep) {
    std::map<std::string, std::vector<std::string>> m;
    for (const auto& v : rep.verdicts) m[v.id] = v.reasons;
    return m;
  };
  HashingEmbedder emb(1);
  FilterConfig cfg;
  cfg.embed_threshold = 0.8;
  const auto base = filter_records(records, cfg, &index, {&emb, &bench});
  for (int round = 0; round < 5; ++round) {
    auto shuffled = records;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto rep = filter_records(shuffled, cfg, &index, {&emb, &bench});
    EXPECT_EQ(key(rep), key(base));
    std::set<std::string> a, b;
    for (const auto& r : rep.kept) a.insert(r.id);
    for (const auto& r : base.kept) b.insert(r.id);
    EXPECT_EQ(a, b);
  }
}

TEST(Filter, EmbeddingContaminationAndUnavailableEmbedder) {
  const std::vector<std::string> bench{"photosynthesis converts light energy into chemical energy"};
  const std::vector<SynthRecord> records{
      essay("a", "photosynthesis converts light energy into chemical", "energy"),
      essay("b", "totally unrelated words about medieval castles", "moats"),
  };
  HashingEmbedder emb(1);
  auto rep = filter_records(records, FilterConfig{}, nullptr, {&emb, &bench});
  EXPECT_EQ(rep.verdicts[0].reasons, (std::vector<std::string>{"EmbeddingContamination"}));
  EXPECT_NEAR(*rep.verdicts[0].max_benchmark_cosine, 1.0, 1e-12);
  EXPECT_TRUE(rep.verdicts[1].passed());
  EXPECT_DOUBLE_EQ(*rep.verdicts[1].max_benchmark_cosine, 0.0);

  FilterConfig unreachable;
  unreachable.embed_threshold = 1.1;
  EXPECT_EQ(filter_records(records, unreachable, nullptr, {&emb, &bench}).kept.size(), 2u);

  DownEmbedder down;
  rep = filter_records(records, FilterConfig{}, nullptr, {&down, &bench});
  EXPECT_EQ(rep.kept.size(), 2u);
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_NE(rep.warnings[0].find("EmbedderUnavailable"), std::string::npos);
}

TEST(Filter, UnparsableLinesBecomeVerdicts) {
  const auto rep = filter_records({}, FilterConfig{}, nullptr, {}, {{3, "{oops"}});
  ASSERT_EQ(rep.verdicts.size(), 1u);
  EXPECT_EQ(rep.verdicts[0].id, "line:3");
  EXPECT_EQ(rep.verdicts[0].reasons, (std::vector<std::string>{"NonParsable"}));
}

TEST(Embedding, CosineAndIndex) {
  HashingEmbedder emb(1);
  const auto a = emb.embed_one("red green blue");
  const auto b = emb.embed_one("Blue, GREEN red!");
  const auto c = emb.embed_one("cyan magenta");
  EXPECT_NEAR(cosine(a, b), 1.0, 1e-12);
  EXPECT_EQ(cosine(a, c), 0.0);
  EXPECT_NEAR(cosine(emb.embed_one("x y"), emb.embed_one("x z")), 0.5, 1e-12);
  const EmbeddingIndex index({a, c});
  EXPECT_EQ(index.max_cosine(c).second, 1u);
  EXPECT_EQ(index.max_cosine(emb.embed_one("nothing shared")).first, 0.0);
}

TEST(Similarity, HandComputedReport) {
  const auto corpus = Corpus({testutil::make_instance("s0", {"k"}, "Physics", 3, "seed zero"),
                              testutil::make_instance("s1", {"k"}, "Physics", 3, "seed one")},
                             DisciplineTaxonomy{});
  const std::vector<SynthRecord> records{essay("g0-q0", "first", "a", "g0", {"s0", "s1"}),
                                         essay("g0-q1", "second", "b", "g0", {"s0", "s1"})};
  TableEmbedder emb({{"first a", dense({1, 0, 0})},
                     {"second b", dense({0.6, 0.8, 0})},
                     {"seed zero", dense({1, 0, 0})},
                     {"seed one", dense({0, 0.6, 0.8})}});
  // pairwise: 0.6; q0 seeds (1, 0); q1 seeds (0.6, 0.48)
  const auto rep = similarity_report(records, corpus, emb);
  EXPECT_EQ(rep.overall.groups, 1u);
  EXPECT_EQ(rep.overall.records, 2u);
  EXPECT_NEAR(rep.overall.mean_pairwise, 0.6, 1e-12);
  EXPECT_NEAR(rep.overall.mean_max_seed, (1.0 + 0.6) / 2, 1e-12);
  EXPECT_NEAR(rep.overall.mean_min_seed, (0.0 + 0.48) / 2, 1e-12);
  ASSERT_EQ(rep.by_seed_count.count(2), 1u);
  EXPECT_NEAR(rep.by_seed_count.at(2).mean_pairwise, 0.6, 1e-12);
  EXPECT_EQ(rep.to_json()["embedder"], "table");
}
