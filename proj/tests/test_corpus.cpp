#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "seqtag/corpus.hpp"
#include "seqtag/rng.hpp"

using namespace seqtag;

namespace {

Sentence make_sentence(const std::vector<std::string>& tags) {
  Sentence s;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    s.tokens.push_back({"tok" + std::to_string(i), tags[i]});
  }
  return s;
}

const TagScheme kScheme({"Disease", "Chem"});

}  // namespace

TEST_CASE("tag scheme inventory layout") {
  CHECK(kScheme.size() == 5);  // O + 2 types * {B, I}
  CHECK(kScheme.tag_name(0) == "O");
  CHECK(*kScheme.tag_index("B-Chem") == 1);
  CHECK(*kScheme.tag_index("I-Chem") == 2);
  CHECK(*kScheme.tag_index("B-Disease") == 3);
  CHECK(*kScheme.tag_index("I-Disease") == 4);
  CHECK(!kScheme.tag_index("B-Gene"));
}

TEST_CASE("parse: one line makes one single-token sentence") {
  std::istringstream in("IL2\tB-Gene\n");
  TagScheme scheme({"Gene"});
  ParseResult r = parse_conll(in, scheme);
  REQUIRE(r.sentences.size() == 1);
  REQUIRE(r.sentences[0].tokens.size() == 1);
  CHECK(r.sentences[0].tokens[0].text == "IL2");
  CHECK(r.sentences[0].tokens[0].gold_tag == "B-Gene");
}

TEST_CASE("parse: empty stream yields no sentences") {
  std::istringstream in("");
  CHECK(parse_conll(in, kScheme).sentences.empty());
}

TEST_CASE("parse: fixture has 3 sentences and 2 annotations") {
  std::ifstream in(std::string(SEQTAG_FIXTURES) + "/three_sentences.conll");
  REQUIRE(in);
  TagScheme scheme({"Gene"});
  ParseResult r = parse_conll(in, scheme);
  REQUIRE(r.sentences.size() == 3);
  const CorpusStats stats = corpus_stats(r.sentences);
  CHECK(stats.sentence_count == 3);
  CHECK(stats.token_count == 12);
  CHECK(stats.annotation_count == 2);
  CHECK(stats.per_type.at("Gene") == 2);
}

TEST_CASE("parse: malformed line reports its line number") {
  std::istringstream in("a\tO\nb\n");
  try {
    parse_conll(in, kScheme);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("parse: unknown tag reports a scheme error with line number") {
  std::istringstream in("a\tO\nb\tB-Virus\n");
  try {
    parse_conll(in, kScheme);
    FAIL("expected SchemeError");
  } catch (const SchemeError& e) {
    CHECK(e.line == 2);
    CHECK(std::string(e.what()).find("B-Virus") != std::string::npos);
  }
}

TEST_CASE("parse: explicit column spec") {
  std::istringstream in("1|x|B-Chem\n2|y|O\n");
  ParseOptions opt;
  opt.token_col = 1;
  opt.tag_col = 2;
  opt.delimiter = '|';
  ParseResult r = parse_conll(in, kScheme, opt);
  REQUIRE(r.sentences.size() == 1);
  CHECK(r.sentences[0].tokens[0].text == "x");
  CHECK(r.sentences[0].tokens[0].gold_tag == "B-Chem");
  CHECK(r.sentences[0].tokens[1].text == "y");
}

TEST_CASE("parse: lenient mode repairs chain-opening I- tags") {
  std::istringstream in("a\tI-Chem\nb\tI-Chem\nc\tO\n");
  ParseOptions opt;
  opt.repair_iob1 = true;
  ParseResult r = parse_conll(in, kScheme, opt);
  CHECK(r.repairs == 1);
  CHECK(r.sentences[0].tokens[0].gold_tag == "B-Chem");
  CHECK(r.sentences[0].tokens[1].gold_tag == "I-Chem");

  std::istringstream in2("a\tI-Chem\n");
  CHECK(parse_conll(in2, kScheme).sentences[0].tokens[0].gold_tag == "I-Chem");
}

TEST_CASE("validate_scheme examples") {
  CHECK(validate_scheme(make_sentence({"B-Disease", "I-Disease", "O"}), kScheme)
            .empty());

  const auto v1 = validate_scheme(make_sentence({"O", "I-Disease"}), kScheme);
  REQUIRE(v1.size() == 1);
  CHECK(v1[0].index == 1);

  const auto v2 =
      validate_scheme(make_sentence({"B-Disease", "I-Chem"}), kScheme);
  REQUIRE(v2.size() == 1);
  CHECK(v2[0].index == 1);

  const auto v3 = validate_scheme(make_sentence({"B-Disease", "B-Gene"}), kScheme);
  REQUIRE(v3.size() == 1);  // unknown tag
  CHECK(v3[0].index == 1);
}

TEST_CASE("windowing: under the limit is untouched") {
  std::vector<Sentence> in = {make_sentence(std::vector<std::string>(10, "O"))};
  Windowed w = window_long_sentences(in, 512);
  REQUIRE(w.sentences.size() == 1);
  CHECK(w.sentences[0].tokens.size() == 10);
  CHECK(w.forced_splits == 0);
}

TEST_CASE("windowing: 513 O tokens split into 512 + 1") {
  std::vector<Sentence> in = {make_sentence(std::vector<std::string>(513, "O"))};
  Windowed w = window_long_sentences(in, 512);
  REQUIRE(w.sentences.size() == 2);
  CHECK(w.sentences[0].tokens.size() == 512);
  CHECK(w.sentences[1].tokens.size() == 1);
}

TEST_CASE("windowing: never bisects an entity span") {
  // 600 tokens, entity spanning positions 510..515.
  std::vector<std::string> tags(600, "O");
  tags[510] = "B-Disease";
  for (std::size_t i = 511; i <= 515; ++i) tags[i] = "I-Disease";
  std::vector<Sentence> in = {make_sentence(tags)};
  Windowed w = window_long_sentences(in, 512);
  REQUIRE(w.sentences.size() == 2);
  CHECK(w.sentences[0].tokens.size() == 510);  // split before the B-
  CHECK(w.sentences[1].tokens[0].gold_tag == "B-Disease");
  CHECK(w.forced_splits == 0);

  // Reassembling the windows gives back the original sequence.
  std::vector<std::string> rebuilt;
  for (const Sentence& s : w.sentences) {
    for (const Token& t : s.tokens) rebuilt.push_back(t.gold_tag);
  }
  CHECK(rebuilt == tags);
}

TEST_CASE("windowing: an over-long span forces a split with a warning") {
  std::vector<std::string> tags(20, "I-Chem");
  tags[0] = "B-Chem";
  std::vector<Sentence> in = {make_sentence(tags)};
  Windowed w = window_long_sentences(in, 8);
  CHECK(w.forced_splits >= 1);
  CHECK(!w.warnings.empty());
  std::size_t total = 0;
  for (const Sentence& s : w.sentences) {
    CHECK(s.tokens.size() <= 8);
    total += s.tokens.size();
  }
  CHECK(total == 20);
}

TEST_CASE("windowed output of valid sentences stays scheme-valid") {
  // Holds whenever no span exceeds the window (the forced-split escape
  // hatch necessarily emits a leading I- and is covered separately).
  Rng rng(17);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t max_len = 4 + rng.index(10);
    std::vector<std::string> tags;
    const std::size_t n = 1 + rng.index(40);
    while (tags.size() < n) {
      if (rng.bernoulli(0.4)) {
        const char* type = rng.bernoulli(0.5) ? "Disease" : "Chem";
        tags.push_back(std::string("B-") + type);
        std::size_t span = 1;
        while (tags.size() < n && span < max_len && rng.bernoulli(0.5)) {
          tags.push_back(std::string("I-") + type);
          ++span;
        }
      } else {
        tags.push_back("O");
      }
    }
    std::vector<Sentence> in = {make_sentence(tags)};
    const Windowed w = window_long_sentences(in, max_len);
    CHECK(w.forced_splits == 0);
    for (const Sentence& s : w.sentences) {
      CHECK(validate_scheme(s, kScheme).empty());
    }
  }
}

TEST_CASE("stats: empty split is all zeros") {
  const CorpusStats stats = corpus_stats({});
  CHECK(stats.sentence_count == 0);
  CHECK(stats.token_count == 0);
  CHECK(stats.annotation_count == 0);
  CHECK(stats.per_type.empty());
}

TEST_CASE("stats: two chains in B,I,O,B") {
  const CorpusStats stats = corpus_stats(
      {make_sentence({"B-Disease", "I-Disease", "O", "B-Disease"})});
  CHECK(stats.annotation_count == 2);
  CHECK(stats.per_type.at("Disease") == 2);
}

TEST_CASE("stats additivity over disjoint splits") {
  std::vector<Sentence> a = {make_sentence({"B-Chem", "O"}),
                             make_sentence({"O"})};
  std::vector<Sentence> b = {make_sentence({"B-Disease", "I-Disease"}),
                             make_sentence({"B-Chem", "B-Chem"})};
  std::vector<Sentence> both = a;
  both.insert(both.end(), b.begin(), b.end());
  CHECK(corpus_stats(both).annotation_count ==
        corpus_stats(a).annotation_count + corpus_stats(b).annotation_count);
}

TEST_CASE("round trip: serialize then parse reproduces the sentences") {
  std::ifstream in(std::string(SEQTAG_FIXTURES) + "/three_sentences.conll");
  TagScheme scheme({"Gene"});
  ParseResult first = parse_conll(in, scheme);
  std::ostringstream out;
  serialize_conll(first.sentences, out);
  std::istringstream back(out.str());
  ParseResult second = parse_conll(back, scheme);
  REQUIRE(second.sentences.size() == first.sentences.size());
  for (std::size_t s = 0; s < first.sentences.size(); ++s) {
    REQUIRE(second.sentences[s].tokens.size() ==
            first.sentences[s].tokens.size());
    for (std::size_t i = 0; i < first.sentences[s].tokens.size(); ++i) {
      CHECK(second.sentences[s].tokens[i].text ==
            first.sentences[s].tokens[i].text);
      CHECK(second.sentences[s].tokens[i].gold_tag ==
            first.sentences[s].tokens[i].gold_tag);
    }
  }
}

TEST_CASE("scheme inference collects types from a stream") {
  std::istringstream in("a\tB-Gene\nb\tO\n\nc\tB-Cell\nd\tI-Cell\n");
  TagScheme scheme = infer_scheme(in);
  CHECK(scheme.entity_types() == std::vector<std::string>({"Cell", "Gene"}));
}

TEST_CASE("stats render as text and JSON") {
  const CorpusStats stats =
      corpus_stats({make_sentence({"B-Chem", "O", "B-Disease"})});
  const std::string text = stats_to_text(stats);
  CHECK(text.find("annotations 2") != std::string::npos);
  const std::string json = stats_to_json(stats);
  CHECK(json.find("\"Chem\": 1") != std::string::npos);
}
