#include "seqtag/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "seqtag/checkpoint.hpp"

namespace seqtag {

Array WordEmbeddingTable::lookup(std::string_view word) const {
  const auto row_of = [&](std::string_view w) -> const double* {
    auto it = vocab.find(std::string(w));
    if (it == vocab.end()) return nullptr;
    return vectors.data().data() + it->second * dim;
  };
  const double* row = row_of(word);
  if (!row && oov_policy == OovPolicy::kLowercaseThenZero) {
    std::string lower(word);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    row = row_of(lower);
  }
  Array out = Array::vec(dim);
  if (row) {
    for (std::size_t i = 0; i < dim; ++i) out[i] = row[i];
  }
  return out;
}

WordEmbeddingTable load_word_vectors(std::istream& stream, OovPolicy policy,
                                     std::vector<std::string>* warnings) {
  WordEmbeddingTable table;
  table.oov_policy = policy;
  std::vector<double> values;
  std::vector<std::string> words;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> row;
    double v;
    while (fields >> v) row.push_back(v);
    if (!fields.eof()) {
      throw ParseError("non-numeric vector component", line_no);
    }
    if (row.empty()) {
      throw ParseError("no vector components after word", line_no);
    }
    if (table.dim == 0) {
      table.dim = row.size();
    } else if (row.size() != table.dim) {
      throw ParseError("vector has " + std::to_string(row.size()) +
                           " components, expected " + std::to_string(table.dim),
                       line_no);
    }
    if (table.vocab.count(word)) {
      if (warnings) {
        warnings->push_back("line " + std::to_string(line_no) +
                            ": duplicate word '" + word + "' ignored");
      }
      continue;
    }
    table.vocab[word] = words.size();
    words.push_back(word);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (words.empty()) {
    throw ParseError("word-vector file contains no entries");
  }
  table.vectors = Array::mat(words.size(), table.dim);
  std::copy(values.begin(), values.end(), table.vectors.data().begin());
  return table;
}

CharVocab CharVocab::from_text(std::u32string_view text) {
  CharVocab v;
  v.chars_.push_back(0xFFFD);         // unknown
  v.chars_.push_back(kBoundaryChar);  // boundary
  v.index_[0xFFFD] = kUnk;
  v.index_[kBoundaryChar] = kBoundary;
  const auto add = [&](char32_t c) {
    if (!v.index_.count(c)) {
      v.index_[c] = v.chars_.size();
      v.chars_.push_back(c);
    }
  };
  add(U' ');  // token joins always need it
  for (char32_t c : text) add(c);
  return v;
}

CharVocab CharVocab::from_list(const std::vector<std::string>& utf8_chars) {
  CharVocab v;
  for (const std::string& s : utf8_chars) {
    std::u32string cp = decode_utf8(s);
    SEQTAG_CHECK(cp.size() == 1, "char vocab entry is not a single code point");
    SEQTAG_CHECK(!v.index_.count(cp[0]), "duplicate char vocab entry");
    v.index_[cp[0]] = v.chars_.size();
    v.chars_.push_back(cp[0]);
  }
  SEQTAG_CHECK(v.chars_.size() >= 2, "char vocab missing reserved symbols");
  return v;
}

std::size_t CharVocab::index(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> CharVocab::to_list() const {
  std::vector<std::string> out;
  out.reserve(chars_.size());
  for (char32_t c : chars_) out.push_back(encode_utf8(std::u32string(1, c)));
  return out;
}

CharLm CharLm::init(Direction dir, const CharVocab& vocab, std::size_t d_char,
                    std::size_t d_lm, Rng& rng) {
  CharLm lm;
  lm.direction = dir;
  lm.vocab = vocab;
  lm.d_char = d_char;
  lm.d_lm = d_lm;
  const std::string prefix =
      dir == Direction::kForward ? "lm_fwd" : "lm_bwd";
  lm.char_embed =
      Parameter(prefix + ".char_embed", xavier_uniform(vocab.size(), d_char, rng));
  lm.cell = LstmCellParams(prefix + ".cell", d_lm, d_char, rng);
  lm.out_w = Parameter(prefix + ".out_w", xavier_uniform(vocab.size(), d_lm, rng));
  lm.out_b = Parameter(prefix + ".out_b", Array::vec(vocab.size()));
  return lm;
}

std::vector<Parameter*> CharLm::params() {
  std::vector<Parameter*> out = {&char_embed};
  for (Parameter* p : cell.params()) out.push_back(p);
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<Parameter*> CharLm::encoder_params() {
  std::vector<Parameter*> out = {&char_embed};
  for (Parameter* p : cell.params()) out.push_back(p);
  return out;
}

LmGraph lm_graph(Tape& tape, CharLm& lm, std::u32string_view text,
                 bool want_logits, const Array* h0, const Array* c0) {
  SEQTAG_CHECK(!text.empty(), "lm_graph: empty text");
  LmGraph g;
  g.hidden.reserve(text.size());
  Var embed = tape.param(lm.char_embed);
  LstmCellVars cell = bind_cell(tape, lm.cell);
  Var h = tape.constant(h0 ? *h0 : Array::vec(lm.d_lm));
  Var c = tape.constant(c0 ? *c0 : Array::vec(lm.d_lm));
  Var out_w, out_b;
  if (want_logits) {
    out_w = tape.param(lm.out_w);
    out_b = tape.param(lm.out_b);
    g.logits.reserve(text.size());
  }
  for (char32_t ch : text) {
    Var x = tape.pick_row(embed, lm.vocab.index(ch));
    std::tie(h, c) = lstm_step(tape, cell, x, h, c);
    g.hidden.push_back(h);
    if (want_logits) {
      g.logits.push_back(tape.add(tape.matvec(out_w, h), out_b));
    }
  }
  g.last_h = h;
  g.last_c = c;
  return g;
}

LmScore lm_score(const CharLm& lm, std::u32string_view text) {
  Tape tape;
  LmGraph g = lm_graph(tape, const_cast<CharLm&>(lm), text, true);
  LmScore score;
  score.hidden.reserve(text.size());
  score.logprob.reserve(text.size());
  for (std::size_t t = 0; t < text.size(); ++t) {
    score.hidden.push_back(tape.value(g.hidden[t]));
    Array lp = tape.value(g.logits[t]);
    const double lse = logsumexp_values(lp.data());
    for (std::size_t i = 0; i < lp.size(); ++i) lp[i] -= lse;
    score.logprob.push_back(std::move(lp));
  }
  return score;
}

double lm_perplexity(const CharLm& lm, std::u32string_view text) {
  SEQTAG_CHECK(text.size() >= 2, "perplexity needs at least one transition");
  LmScore score = lm_score(lm, text);
  double nll_sum = 0.0;
  for (std::size_t t = 0; t + 1 < text.size(); ++t) {
    nll_sum -= score.logprob[t][lm.vocab.index(text[t + 1])];
  }
  return std::exp(nll_sum / static_cast<double>(text.size() - 1));
}

CharStream sentence_char_stream(const Sentence& sentence) {
  SEQTAG_CHECK(!sentence.tokens.empty(), "empty sentence");
  CharStream s;
  s.chars.push_back(CharVocab::kBoundaryChar);
  for (std::size_t k = 0; k < sentence.tokens.size(); ++k) {
    if (k > 0) s.chars.push_back(U' ');
    std::u32string cp = decode_utf8(sentence.tokens[k].text);
    SEQTAG_CHECK(!cp.empty(), "empty token text");
    s.token_first.push_back(s.chars.size());
    s.chars += cp;
    s.token_last.push_back(s.chars.size() - 1);
  }
  s.chars.push_back(CharVocab::kBoundaryChar);
  return s;
}

std::vector<Array> extract_contextual(const StackedEmbedding& stack,
                                      const Sentence& sentence) {
  const CharStream stream = sentence_char_stream(sentence);
  const std::size_t len = stream.chars.size();

  const LmScore fwd = lm_score(stack.fwd_lm, stream.chars);
  std::u32string reversed(stream.chars.rbegin(), stream.chars.rend());
  const LmScore bwd = lm_score(stack.bwd_lm, reversed);

  std::vector<Array> out;
  out.reserve(sentence.tokens.size());
  for (std::size_t k = 0; k < sentence.tokens.size(); ++k) {
    // Forward state one past the token's last character; backward state
    // (indexed in original positions) one before its first character.
    const Array& f = fwd.hidden[stream.token_last[k] + 1];
    const Array& b = bwd.hidden[len - 1 - (stream.token_first[k] - 1)];
    Array e = Array::vec(f.len() + b.len());
    for (std::size_t i = 0; i < f.len(); ++i) e[i] = f[i];
    for (std::size_t i = 0; i < b.len(); ++i) e[f.len() + i] = b[i];
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Array> embed_sentence(const StackedEmbedding& stack,
                                  const Sentence& sentence, bool training,
                                  Rng* rng) {
  std::vector<Array> contextual = extract_contextual(stack, sentence);
  std::vector<Array> out;
  out.reserve(sentence.tokens.size());
  const bool drop = training && stack.dropout_p > 0.0;
  SEQTAG_CHECK(!drop || rng != nullptr, "training-mode embedding needs an rng");
  for (std::size_t k = 0; k < sentence.tokens.size(); ++k) {
    Array ctx = std::move(contextual[k]);
    if (drop && stack.dropout_scope == StackedEmbedding::DropoutScope::kContextual) {
      ctx = apply_dropout(ctx, stack.dropout_p, *rng);
    }
    const Array word = stack.word_table.lookup(sentence.tokens[k].text);
    Array e = Array::vec(ctx.len() + word.len());
    for (std::size_t i = 0; i < ctx.len(); ++i) e[i] = ctx[i];
    for (std::size_t i = 0; i < word.len(); ++i) e[ctx.len() + i] = word[i];
    if (drop && stack.dropout_scope == StackedEmbedding::DropoutScope::kFull) {
      e = apply_dropout(e, stack.dropout_p, *rng);
    }
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

// One SGD pass of truncated BPTT over `text` for a single LM (text already
// reversed for backward LMs). Returns training perplexity of the epoch.
double lm_train_epoch(CharLm& lm, std::u32string_view text,
                      const LmPretrainConfig& config) {
  std::vector<Parameter*> params = lm.params();
  const std::size_t window = config.bptt_window;
  // Chunks need at least window+1 chars to yield one transition window.
  std::size_t batch = std::max<std::size_t>(1, config.batch);
  batch = std::min(batch, text.size() / (window + 1));
  batch = std::max<std::size_t>(1, batch);
  const std::size_t chunk_len = text.size() / batch;

  struct ChunkState {
    std::size_t begin, end, pos;
    Array h, c;
  };
  std::vector<ChunkState> chunks;
  for (std::size_t b = 0; b < batch; ++b) {
    ChunkState s;
    s.begin = b * chunk_len;
    s.end = (b + 1 == batch) ? text.size() : (b + 1) * chunk_len;
    s.pos = s.begin;
    s.h = Array::vec(lm.d_lm);
    s.c = Array::vec(lm.d_lm);
    chunks.push_back(std::move(s));
  }

  double nll_sum = 0.0;
  std::size_t transitions = 0;
  bool more = true;
  while (more) {
    more = false;
    zero_grads(params);
    std::size_t active = 0;
    // Count chunks that still have a window, so each tape can be seeded
    // with the batch mean weight.
    for (const ChunkState& s : chunks) {
      if (s.pos + 1 < s.end) ++active;
    }
    if (active == 0) break;
    for (ChunkState& s : chunks) {
      if (s.pos + 1 >= s.end) continue;
      const std::size_t take = std::min(window + 1, s.end - s.pos);
      std::u32string_view piece(text.data() + s.pos, take);
      Tape tape;
      LmGraph g = lm_graph(tape, lm, piece.substr(0, take - 1), true, &s.h, &s.c);
      std::vector<Var> terms;
      terms.reserve(take - 1);
      for (std::size_t t = 0; t + 1 < take; ++t) {
        Var logits = g.logits[t];
        Var lse = tape.logsumexp(logits);
        Var gold = tape.pick(logits, lm.vocab.index(piece[t + 1]));
        terms.push_back(tape.sub(lse, gold));
      }
      Var total = tape.add_many(terms);
      Var loss = tape.scale(total, 1.0 / static_cast<double>(terms.size()));
      const double loss_val = tape.scalar_value(loss);
      if (!std::isfinite(loss_val)) {
        throw TrainingFault("non-finite LM loss during pretraining");
      }
      nll_sum += tape.scalar_value(total);
      transitions += terms.size();
      tape.backward(loss, 1.0 / static_cast<double>(active));
      // Carry hidden state, detached, into the next window.
      s.h = tape.value(g.last_h);
      s.c = tape.value(g.last_c);
      s.pos += take - 1;
      if (s.pos + 1 < s.end) more = true;
    }
    sgd_step(params, config.lr);
  }
  return transitions == 0
             ? static_cast<double>(lm.vocab.size())
             : std::exp(nll_sum / static_cast<double>(transitions));
}

}  // namespace

LmPretrainResult pretrain_lm(std::u32string_view text,
                             const LmPretrainConfig& config) {
  if (text.empty()) throw ParseError("LM corpus is empty");
  if (text.size() < config.bptt_window) {
    throw ParseError("LM corpus shorter than one BPTT window (" +
                     std::to_string(config.bptt_window) + " chars)");
  }
  SEQTAG_CHECK(config.d_char > 0 && config.d_lm > 0 && config.bptt_window >= 2,
               "bad LM pretraining config");
  Rng rng(config.seed);
  CharVocab vocab = CharVocab::from_text(text);
  LmPretrainResult result;
  result.forward = CharLm::init(CharLm::Direction::kForward, vocab,
                                config.d_char, config.d_lm, rng);
  result.backward = CharLm::init(CharLm::Direction::kBackward, vocab,
                                 config.d_char, config.d_lm, rng);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    result.forward_epoch_ppl.push_back(
        lm_train_epoch(result.forward, text, config));
  }
  std::u32string reversed(text.rbegin(), text.rend());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    result.backward_epoch_ppl.push_back(
        lm_train_epoch(result.backward, reversed, config));
  }
  return result;
}

void save_charlm(const CharLm& lm, const std::string& path,
                 const nlohmann::json& metadata) {
  CheckpointWriter w;
  nlohmann::json meta;
  meta["format"] = "charlm";
  meta["direction"] =
      lm.direction == CharLm::Direction::kForward ? "forward" : "backward";
  meta["d_char"] = lm.d_char;
  meta["d_lm"] = lm.d_lm;
  meta["vocab_size"] = lm.vocab.size();
  meta["extra"] = metadata;
  w.add_text("meta", meta.dump(2));
  std::vector<std::string> vocab_list = lm.vocab.to_list();
  w.add_strings("vocab", vocab_list);
  CharLm& m = const_cast<CharLm&>(lm);
  w.add_array("char_embed", m.char_embed.value);
  w.add_array("w_f", m.cell.w_f.value);
  w.add_array("w_i", m.cell.w_i.value);
  w.add_array("w_c", m.cell.w_c.value);
  w.add_array("w_o", m.cell.w_o.value);
  w.add_array("b_f", m.cell.b_f.value);
  w.add_array("b_i", m.cell.b_i.value);
  w.add_array("b_c", m.cell.b_c.value);
  w.add_array("b_o", m.cell.b_o.value);
  w.add_array("out_w", m.out_w.value);
  w.add_array("out_b", m.out_b.value);
  w.write(path);

  std::ofstream sidecar(path + ".json", std::ios::trunc);
  if (!sidecar) throw IoError("cannot write sidecar for '" + path + "'");
  sidecar << meta.dump(2) << '\n';
}

CharLm load_charlm(const std::string& path) {
  CheckpointReader r(path);
  nlohmann::json meta = nlohmann::json::parse(r.text("meta"));
  if (meta.value("format", "") != "charlm") {
    throw CheckpointError("'" + path + "' is not a char-LM checkpoint");
  }
  CharLm lm;
  lm.direction = meta.at("direction") == "forward"
                     ? CharLm::Direction::kForward
                     : CharLm::Direction::kBackward;
  lm.d_char = meta.at("d_char").get<std::size_t>();
  lm.d_lm = meta.at("d_lm").get<std::size_t>();
  lm.vocab = CharVocab::from_list(r.strings("vocab"));
  const std::string prefix =
      lm.direction == CharLm::Direction::kForward ? "lm_fwd" : "lm_bwd";
  lm.char_embed = Parameter(prefix + ".char_embed", r.array("char_embed"));
  lm.cell.hidden = lm.d_lm;
  lm.cell.input = lm.d_char;
  lm.cell.w_f = Parameter(prefix + ".cell.w_f", r.array("w_f"));
  lm.cell.w_i = Parameter(prefix + ".cell.w_i", r.array("w_i"));
  lm.cell.w_c = Parameter(prefix + ".cell.w_c", r.array("w_c"));
  lm.cell.w_o = Parameter(prefix + ".cell.w_o", r.array("w_o"));
  lm.cell.b_f = Parameter(prefix + ".cell.b_f", r.array("b_f"));
  lm.cell.b_i = Parameter(prefix + ".cell.b_i", r.array("b_i"));
  lm.cell.b_c = Parameter(prefix + ".cell.b_c", r.array("b_c"));
  lm.cell.b_o = Parameter(prefix + ".cell.b_o", r.array("b_o"));
  lm.out_w = Parameter(prefix + ".out_w", r.array("out_w"));
  lm.out_b = Parameter(prefix + ".out_b", r.array("out_b"));
  const std::size_t C = lm.vocab.size();
  if (lm.char_embed.value.rows() != C || lm.out_w.value.rows() != C ||
      lm.cell.w_f.value.rows() != lm.d_lm ||
      lm.cell.w_f.value.cols() != lm.d_lm + lm.d_char) {
    throw CheckpointError("char-LM checkpoint has inconsistent shapes");
  }
  return lm;
}

}  // namespace seqtag
