#include <gtest/gtest.h>

#include <random>

#include "linksyn/corpus.hpp"
#include "linksyn/text.hpp"
#include "test_util.hpp"

using namespace linksyn;

namespace {

// Full-matrix Levenshtein over code points, written independently of the library.
std::size_t oracle_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t best = d[i - 1][j - 1] + (a[i - 1] != b[j - 1]);
      best = std::min(best, d[i - 1][j] + 1);
      best = std::min(best, d[i][j - 1] + 1);
      d[i][j] = best;
    }
  return d[a.size()][b.size()];
}

std::string encode(const std::u32string& s) {
  std::string out;
  for (char32_t c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::u32string random_word(std::mt19937_64& gen) {
  static const std::u32string alphabet = U"abcde éα中";
  std::u32string s;
  const std::size_t n = gen() % 16;
  for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[gen() % alphabet.size()]);
  return s;
}

std::string line(const std::string& id, const std::string& kps = "[\"a\"]", const std::string& disc = "Physics",
                 const std::string& diff = "2") {
  return "{\"id\":\"" + id + "\",\"text\":\"t\",\"discipline\":\"" + disc + "\",\"difficulty\":" + diff +
         ",\"kps\":" + kps + "}";
}

Errc load_error(const std::vector<std::string>& lines, std::size_t* line_no = nullptr) {
  try {
    load_corpus_lines(lines, DisciplineTaxonomy{});
  } catch (const Error& e) {
    if (line_no) *line_no = e.line();
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::kInvalidArgument;
}

}  // namespace

TEST(EditDistance, MatchesOracleOnRandomPairs) {
  std::mt19937_64 gen(2024);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_word(gen), b = random_word(gen);
    EXPECT_EQ(text::edit_distance(encode(a), encode(b)), oracle_distance(a, b)) << encode(a) << " | " << encode(b);
  }
}

TEST(EditDistance, KnownPairs) {
  EXPECT_EQ(text::edit_distance("kitten", "sitting"), 3u);
  EXPECT_EQ(text::edit_distance("", "abc"), 3u);
  EXPECT_EQ(text::edit_distance("bayes theorem", "bayes theorm"), 1u);
  EXPECT_EQ(text::edit_distance("café", "cafe"), 1u);
  EXPECT_EQ(text::utf8_length("café"), 4u);
}

TEST(Tokenizer, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(text::tokenize("Hello, World! f(x)=2"), (std::vector<std::string>{"hello", "world", "f", "x", "2"}));
  EXPECT_EQ(text::tokenize("  \t\n"), std::vector<std::string>{});
  EXPECT_EQ(text::tokenize("Été A"), (std::vector<std::string>{"Été", "a"}));
}

TEST(Corpus, ParsesDifficultyForms) {
  auto c = load_corpus_lines({line("a", "[\"x\"]", "Physics", "\"H4\""), line("b")}, DisciplineTaxonomy{});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].difficulty, 4);
  EXPECT_EQ(c[1].difficulty, 2);
  EXPECT_EQ(*c.find("b"), 1u);
  EXPECT_FALSE(c.find("zz").has_value());
}

TEST(Corpus, ErrorsCarryKindAndLine) {
  std::size_t ln = 0;
  EXPECT_EQ(load_error({line("a"), "{not json", line("c")}, &ln), Errc::kMalformedLine);
  EXPECT_EQ(ln, 2u);
  EXPECT_EQ(load_error({line("a"), line("b", "[\"x\"]", "Astrology")}, &ln), Errc::kUnknownDiscipline);
  EXPECT_EQ(ln, 2u);
  EXPECT_EQ(load_error({line("a"), line("a")}, &ln), Errc::kDuplicateId);
  EXPECT_EQ(ln, 2u);
  EXPECT_EQ(load_error({line("a", "[]")}, &ln), Errc::kEmptyKpSet);
  EXPECT_EQ(ln, 1u);
  EXPECT_EQ(load_error({line("a", "[\"x\"]", "Physics", "6")}), Errc::kMalformedLine);
  EXPECT_EQ(load_error({line("a", "[\"x\",\"x\"]")}), Errc::kMalformedLine);
  EXPECT_EQ(load_error({"{\"id\":\"a\",\"text\":\"t\",\"discipline\":\"Physics\",\"kps\":[\"x\"]}"}), Errc::kMalformedLine);
}

TEST(Corpus, LenientModeDropsAndCounts) {
  LoadReport report;
  auto c = load_corpus_lines({line("a"), "garbage", line("a"), "", line("b", "[]"), line("c")}, DisciplineTaxonomy{},
                             LoadOptions{true, 2}, &report);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].id, "a");
  EXPECT_EQ(c[1].id, "c");
  EXPECT_EQ(report.loaded, 2u);
  EXPECT_EQ(report.dropped.at("MalformedLine"), 1u);
  EXPECT_EQ(report.dropped.at("DuplicateId"), 1u);
  EXPECT_EQ(report.dropped.at("EmptyKpSet"), 1u);
}

TEST(Corpus, RoundTripIsByteIdentical) {
  testutil::TempDir dir;
  const std::string src = std::string(LINKSYN_SAMPLES_DIR) + "/toy_corpus.jsonl";
  auto c = load_corpus(src);
  EXPECT_EQ(c.size(), 30u);
  save_corpus(dir.file("a.jsonl"), c);
  auto c2 = load_corpus(dir.file("a.jsonl"));
  save_corpus(dir.file("b.jsonl"), c2);
  EXPECT_EQ(text::read_file(dir.file("a.jsonl")), text::read_file(dir.file("b.jsonl")));
  EXPECT_EQ(c.instances(), c2.instances());
}

TEST(Corpus, ExtraFieldsPassThrough) {
  auto c = load_corpus_lines({"{\"id\":\"a\",\"text\":\"t\",\"discipline\":\"Law\",\"difficulty\":1,\"kps\":[\"x\"],"
                              "\"source\":\"exam\"}"},
                             DisciplineTaxonomy{});
  EXPECT_EQ(c[0].extra.at("source"), "exam");
  EXPECT_NE(to_jsonl_line(c[0]).find("\"source\":\"exam\""), std::string::npos);
}

TEST(Corpus, CustomTaxonomyAndMultiKpFraction) {
  DisciplineTaxonomy tax({"Alchemy"});
  auto c = load_corpus_lines({line("a", "[\"x\",\"y\"]", "Alchemy"), line("b", "[\"x\"]", "Alchemy")}, tax);
  EXPECT_DOUBLE_EQ(multi_kp_fraction(c), 0.5);
  EXPECT_THROW(DisciplineTaxonomy({"A", "A"}), Error);
  EXPECT_THROW(multi_kp_fraction(Corpus{}), Error);
}
