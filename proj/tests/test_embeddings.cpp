#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "oracles.hpp"
#include "seqtag/embeddings.hpp"

using namespace seqtag;

namespace {

Sentence make_sentence(const std::vector<std::string>& words) {
  Sentence s;
  for (const std::string& w : words) s.tokens.push_back({w, "O"});
  return s;
}

CharLm zero_lm(const CharVocab& vocab, std::size_t d_char, std::size_t d_lm) {
  Rng rng(0);
  CharLm lm = CharLm::init(CharLm::Direction::kForward, vocab, d_char, d_lm, rng);
  for (Parameter* p : lm.params()) p->value.fill(0.0);
  return lm;
}

StackedEmbedding small_stack(std::uint64_t seed, std::size_t d_lm = 3) {
  Rng rng(seed);
  CharVocab vocab = CharVocab::from_text(U"abcdefghijklmnopqrstuvwxyz .");
  StackedEmbedding stack;
  stack.fwd_lm = CharLm::init(CharLm::Direction::kForward, vocab, 4, d_lm, rng);
  stack.bwd_lm = CharLm::init(CharLm::Direction::kBackward, vocab, 4, d_lm, rng);
  std::istringstream vecs("cat 0.1 0.2\ndog 0.3 0.4\nCell 1 2\ncell 3 4");
  stack.word_table = load_word_vectors(vecs);
  stack.dropout_p = 0.5;
  return stack;
}

}  // namespace

TEST_CASE("load_word_vectors reads rows back") {
  std::istringstream in("a 0.1 0.2\nb 0.3 0.4");
  WordEmbeddingTable table = load_word_vectors(in);
  CHECK(table.dim == 2);
  const Array a = table.lookup("a");
  CHECK(a[0] == 0.1);
  CHECK(a[1] == 0.2);
}

TEST_CASE("OOV policy zero") {
  std::istringstream in("a 0.1 0.2");
  WordEmbeddingTable table = load_word_vectors(in, OovPolicy::kZero);
  const Array z = table.lookup("zzz");
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("OOV policy lowercase_then_zero") {
  std::istringstream in("Cell 1 2\ncell 3 4");
  WordEmbeddingTable table =
      load_word_vectors(in, OovPolicy::kLowercaseThenZero);
  const Array hit = table.lookup("CELL");  // falls back to "cell"
  CHECK(hit[0] == 3.0);
  CHECK(hit[1] == 4.0);
  const Array exact = table.lookup("Cell");
  CHECK(exact[0] == 1.0);
  const Array miss = table.lookup("ZZZ");
  CHECK(miss[0] == 0.0);
}

TEST_CASE("word vector errors and warnings") {
  SUBCASE("inconsistent dimension names the line") {
    std::istringstream in("a 1 2\nb 1 2 3\n");
    try {
      load_word_vectors(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 2);
    }
  }
  SUBCASE("empty file") {
    std::istringstream in("");
    CHECK_THROWS_AS(load_word_vectors(in), ParseError);
  }
  SUBCASE("duplicates: first wins, with a warning") {
    std::istringstream in("a 1 2\na 9 9\n");
    std::vector<std::string> warnings;
    WordEmbeddingTable table =
        load_word_vectors(in, OovPolicy::kZero, &warnings);
    CHECK(table.lookup("a")[0] == 1.0);
    CHECK(warnings.size() == 1);
  }
}

TEST_CASE("zero-parameter LM predicts uniformly") {
  CharVocab vocab = CharVocab::from_text(U"abc");
  CharLm lm = zero_lm(vocab, 3, 4);
  LmScore score = lm_score(lm, U"a");
  REQUIRE(score.logprob.size() == 1);
  const double expect = -std::log(static_cast<double>(vocab.size()));
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    CHECK(score.logprob[0][i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(lm_perplexity(lm, U"abcabc") ==
        doctest::Approx(static_cast<double>(vocab.size())).epsilon(1e-9));
}

TEST_CASE("one hidden state per character") {
  CharVocab vocab = CharVocab::from_text(U"xyz");
  Rng rng(5);
  CharLm lm = CharLm::init(CharLm::Direction::kForward, vocab, 3, 4, rng);
  LmScore score = lm_score(lm, U"zyxzyx");
  CHECK(score.hidden.size() == 6);
  CHECK(score.logprob.size() == 6);
  CHECK(score.hidden[0].len() == 4);
}

TEST_CASE("LM forward pass matches the scalar recurrence transcription") {
  CharVocab vocab = CharVocab::from_text(U"ab");
  Rng rng(12);
  CharLm lm = CharLm::init(CharLm::Direction::kForward, vocab, 2, 3, rng);
  const std::u32string text = U"abba";

  // Scalar re-computation with plain doubles.
  const auto mat_of = [](const Array& a) {
    std::vector<std::vector<double>> m(a.rows(), std::vector<double>(a.cols()));
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) m[i][j] = a.at(i, j);
    }
    return m;
  };
  const auto vec_of = [](const Array& a) {
    return std::vector<double>(a.data().begin(), a.data().end());
  };
  std::vector<double> h(3, 0.0), c(3, 0.0);
  std::vector<std::vector<double>> hidden;
  for (char32_t ch : text) {
    std::vector<double> x(2);
    for (std::size_t j = 0; j < 2; ++j) {
      x[j] = lm.char_embed.value.at(lm.vocab.index(ch), j);
    }
    const auto out = oracle::scalar_lstm_step(
        mat_of(lm.cell.w_f.value), mat_of(lm.cell.w_i.value),
        mat_of(lm.cell.w_c.value), mat_of(lm.cell.w_o.value),
        vec_of(lm.cell.b_f.value), vec_of(lm.cell.b_i.value),
        vec_of(lm.cell.b_c.value), vec_of(lm.cell.b_o.value), x, h, c);
    h = out.h;
    c = out.c;
    hidden.push_back(h);
  }
  // Scalar softmax NLL for the next-character transitions.
  double scalar_nll = 0.0;
  for (std::size_t t = 0; t + 1 < text.size(); ++t) {
    std::vector<double> logits(lm.vocab.size());
    double mx = -1e300;
    for (std::size_t k = 0; k < lm.vocab.size(); ++k) {
      double s = lm.out_b.value[k];
      for (std::size_t j = 0; j < 3; ++j) {
        s += lm.out_w.value.at(k, j) * hidden[t][j];
      }
      logits[k] = s;
      mx = std::max(mx, s);
    }
    double sum = 0.0;
    for (double s : logits) sum += std::exp(s - mx);
    const double lse = mx + std::log(sum);
    scalar_nll -= logits[lm.vocab.index(text[t + 1])] - lse;
  }
  const double scalar_ppl =
      std::exp(scalar_nll / static_cast<double>(text.size() - 1));

  LmScore score = lm_score(lm, text);
  for (std::size_t t = 0; t < text.size(); ++t) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(score.hidden[t][j] == doctest::Approx(hidden[t][j]).epsilon(1e-12));
    }
  }
  CHECK(lm_perplexity(lm, text) == doctest::Approx(scalar_ppl).epsilon(1e-12));
}

TEST_CASE("char stream places boundaries and records token positions") {
  CharStream s = sentence_char_stream(make_sentence({"ab", "c"}));
  REQUIRE(s.chars.size() == 6);  // <b> a b ' ' c <b>
  CHECK(s.chars[0] == CharVocab::kBoundaryChar);
  CHECK(s.chars[5] == CharVocab::kBoundaryChar);
  CHECK(s.chars[3] == U' ');
  CHECK(s.token_first == std::vector<std::size_t>({1, 4}));
  CHECK(s.token_last == std::vector<std::size_t>({2, 4}));
}

TEST_CASE("one-token extraction reads the positions next to the boundaries") {
  StackedEmbedding stack = small_stack(8);
  Sentence one = make_sentence({"a"});
  // Stream is <b> a <b>; forward state at index 2, backward at index 0.
  const CharStream stream = sentence_char_stream(one);
  REQUIRE(stream.chars.size() == 3);
  const LmScore fwd = lm_score(stack.fwd_lm, stream.chars);
  std::u32string reversed(stream.chars.rbegin(), stream.chars.rend());
  const LmScore bwd = lm_score(stack.bwd_lm, reversed);
  const std::vector<Array> ctx = extract_contextual(stack, one);
  REQUIRE(ctx.size() == 1);
  const std::size_t d = stack.fwd_lm.d_lm;
  REQUIRE(ctx[0].len() == 2 * d);
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(ctx[0][j] == fwd.hidden[2][j]);
    CHECK(ctx[0][d + j] == bwd.hidden[2][j]);  // reversed index of original 0
  }
}

TEST_CASE("identical token embeds differently in different contexts") {
  StackedEmbedding stack = small_stack(9);
  const std::vector<Array> a =
      extract_contextual(stack, make_sentence({"the", "cat", "sat"}));
  const std::vector<Array> b =
      extract_contextual(stack, make_sentence({"a", "cat", "ran"}));
  double diff = 0.0;
  for (std::size_t j = 0; j < a[1].len(); ++j) {
    diff += std::abs(a[1][j] - b[1][j]);
  }
  CHECK(diff > 0.0);
}

TEST_CASE("embedding dimensions follow d_word + 2 d_lm") {
  StackedEmbedding stack = small_stack(10);  // d_word 2, d_lm 3
  std::vector<Array> e =
      embed_sentence(stack, make_sentence({"cat", "dog"}), false);
  REQUIRE(e.size() == 2);
  CHECK(e[0].len() == 8);
  CHECK(stack.total_dim() == 8);
}

TEST_CASE("eval-mode embedding is a pure function") {
  StackedEmbedding stack = small_stack(11);
  Sentence s = make_sentence({"cat", "dog", "zzz"});
  const std::vector<Array> a = embed_sentence(stack, s, false);
  const std::vector<Array> b = embed_sentence(stack, s, false);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t j = 0; j < a[k].len(); ++j) {
      CHECK(a[k][j] == b[k][j]);
    }
  }
}

TEST_CASE("word part occupies the tail of the embedding") {
  StackedEmbedding stack = small_stack(12);
  stack.word_table.vectors.fill(0.0);
  std::vector<Array> e = embed_sentence(stack, make_sentence({"cat"}), false);
  CHECK(e[0][6] == 0.0);
  CHECK(e[0][7] == 0.0);
  double ctx_norm = 0.0;
  for (std::size_t j = 0; j < 6; ++j) ctx_norm += std::abs(e[0][j]);
  CHECK(ctx_norm > 0.0);
}

TEST_CASE("training-mode dropout needs an rng and changes the output") {
  StackedEmbedding stack = small_stack(13);
  Sentence s = make_sentence({"cat"});
  CHECK_THROWS_AS(embed_sentence(stack, s, true), ContractViolation);
  Rng rng(1);
  const std::vector<Array> dropped = embed_sentence(stack, s, true, &rng);
  CHECK(dropped[0].len() == 8);
}

TEST_CASE("pretraining on a repetitive corpus reaches low perplexity") {
  std::u32string text;
  for (int i = 0; i < 100; ++i) text += U"abcabc";
  LmPretrainConfig config;
  config.d_char = 8;
  config.d_lm = 16;
  config.epochs = 8;
  config.bptt_window = 16;
  config.batch = 2;
  config.lr = 0.5;
  config.seed = 7;
  LmPretrainResult result = pretrain_lm(text, config);

  CHECK(lm_perplexity(result.forward, U"abcabcabcabc") < 1.5);
  std::u32string rev(text.rbegin(), text.rend());
  CHECK(lm_perplexity(result.backward, rev.substr(0, 12)) < 1.5);

  // Training perplexity does not increase over the first epochs.
  REQUIRE(result.forward_epoch_ppl.size() == 8);
  CHECK(result.forward_epoch_ppl[1] <= result.forward_epoch_ppl[0]);
  CHECK(result.forward_epoch_ppl[2] <= result.forward_epoch_ppl[1]);
}

TEST_CASE("pretrain with zero epochs still yields usable initialized LMs") {
  std::u32string text = U"hello world hello world hello";
  LmPretrainConfig config;
  config.epochs = 0;
  config.bptt_window = 8;
  config.seed = 3;
  LmPretrainResult a = pretrain_lm(text, config);
  LmPretrainResult b = pretrain_lm(text, config);
  CHECK(a.forward_epoch_ppl.empty());
  for (std::size_t i = 0; i < a.forward.char_embed.value.size(); ++i) {
    CHECK(a.forward.char_embed.value[i] == b.forward.char_embed.value[i]);
  }
}

TEST_CASE("pretrain rejects empty or too-short corpora") {
  LmPretrainConfig config;
  CHECK_THROWS_AS(pretrain_lm(U"", config), ParseError);
  CHECK_THROWS_AS(pretrain_lm(U"tiny", config), ParseError);
}

TEST_CASE("char-LM checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "seqtag_lm_test").string();
  fs::create_directories(dir);
  const std::string path = dir + "/test.lm";

  Rng rng(21);
  CharVocab vocab = CharVocab::from_text(U"abc defé");
  CharLm lm = CharLm::init(CharLm::Direction::kBackward, vocab, 5, 7, rng);
  save_charlm(lm, path, {{"note", "test"}});
  CharLm loaded = load_charlm(path);

  CHECK(loaded.direction == CharLm::Direction::kBackward);
  CHECK(loaded.d_char == 5);
  CHECK(loaded.d_lm == 7);
  CHECK(loaded.vocab.size() == vocab.size());
  CHECK(loaded.vocab.index(U'é') == vocab.index(U'é'));
  for (std::size_t i = 0; i < lm.out_w.value.size(); ++i) {
    CHECK(loaded.out_w.value[i] == lm.out_w.value[i]);
  }
  LmScore a = lm_score(lm, U"fed");
  LmScore b = lm_score(loaded, U"fed");
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(a.hidden[t][j] == b.hidden[t][j]);
    }
  }
  fs::remove_all(dir);
}
