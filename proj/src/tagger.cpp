#include "seqtag/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "seqtag/checkpoint.hpp"
#include "seqtag/eval.hpp"

namespace seqtag {

TaggerModel TaggerModel::init(StackedEmbedding stack_in, TagScheme scheme_in,
                              std::size_t hidden_size, Rng& rng, double sigma_sq) {
  TaggerModel m;
  m.stack = std::move(stack_in);
  m.scheme = std::move(scheme_in);
  m.hidden = hidden_size;
  const std::size_t d_in = m.stack.total_dim();
  const std::size_t T = m.scheme.size();
  m.fwd_cell = LstmCellParams("fwd_cell", hidden_size, d_in, rng);
  m.bwd_cell = LstmCellParams("bwd_cell", hidden_size, d_in, rng);
  m.proj_w = Parameter("proj_w", xavier_uniform(T, 2 * hidden_size, rng));
  m.proj_b = Parameter("proj_b", Array::vec(T));
  m.crf = CrfParams(T, sigma_sq);
  return m;
}

std::vector<Parameter*> TaggerModel::trainable_params() {
  std::vector<Parameter*> out;
  for (Parameter* p : fwd_cell.params()) out.push_back(p);
  for (Parameter* p : bwd_cell.params()) out.push_back(p);
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  for (Parameter* p : crf.params()) out.push_back(p);
  if (fine_tune_lms) {
    for (Parameter* p : stack.fwd_lm.encoder_params()) out.push_back(p);
    for (Parameter* p : stack.bwd_lm.encoder_params()) out.push_back(p);
  }
  return out;
}

PatienceAnnealer::PatienceAnnealer(double initial_lr, double factor,
                                   std::size_t patience)
    : lr_(initial_lr), factor_(factor), patience_(patience),
      best_(-std::numeric_limits<double>::infinity()) {
  SEQTAG_CHECK(factor > 0.0 && factor < 1.0, "anneal factor must be in (0, 1)");
  SEQTAG_CHECK(patience >= 1, "patience must be >= 1");
}

PatienceAnnealer::Outcome PatienceAnnealer::observe(double score) {
  Outcome out{false, false, lr_};
  if (score > best_) {
    best_ = score;
    since_improvement_ = 0;
    out.improved = true;
  } else {
    ++since_improvement_;
    if (since_improvement_ >= patience_) {
      lr_ *= factor_;
      since_improvement_ = 0;
      out.annealed = true;
    }
  }
  out.lr = lr_;
  return out;
}

namespace {

struct EmbedVars {
  std::vector<Var> tokens;  // one per token, pre-dropout components joined
};

// Per-token embedding Vars. Frozen LMs enter as constants (from `cached`
// when provided); fine-tuned LMs enter as subgraphs over the char stream.
std::vector<Var> embed_graph(Tape& tape, TaggerModel& model,
                             const Sentence& sentence, bool training,
                             Rng* dropout_rng, const CachedEmbedding* cached) {
  const std::size_t n = sentence.tokens.size();
  StackedEmbedding& stack = model.stack;
  std::vector<Var> ctx(n);
  if (model.fine_tune_lms) {
    const CharStream stream = sentence_char_stream(sentence);
    const std::size_t len = stream.chars.size();
    LmGraph fwd = lm_graph(tape, stack.fwd_lm, stream.chars, false);
    std::u32string reversed(stream.chars.rbegin(), stream.chars.rend());
    LmGraph bwd = lm_graph(tape, stack.bwd_lm, reversed, false);
    for (std::size_t k = 0; k < n; ++k) {
      const std::array<Var, 2> parts = {
          fwd.hidden[stream.token_last[k] + 1],
          bwd.hidden[len - 1 - (stream.token_first[k] - 1)]};
      ctx[k] = tape.concat(parts);
    }
  } else if (cached) {
    for (std::size_t k = 0; k < n; ++k) {
      ctx[k] = tape.constant(cached->contextual[k]);
    }
  } else {
    std::vector<Array> values = extract_contextual(stack, sentence);
    for (std::size_t k = 0; k < n; ++k) {
      ctx[k] = tape.constant(std::move(values[k]));
    }
  }

  const bool drop = training && stack.dropout_p > 0.0;
  SEQTAG_CHECK(!drop || dropout_rng, "training-mode graph needs a dropout rng");
  std::vector<Var> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Var c = ctx[k];
    if (drop && stack.dropout_scope == StackedEmbedding::DropoutScope::kContextual) {
      c = tape.dropout(c, stack.dropout_p, *dropout_rng, true);
    }
    Var w = tape.constant(cached ? cached->word[k]
                                 : stack.word_table.lookup(sentence.tokens[k].text));
    const std::array<Var, 2> parts = {c, w};
    Var e = tape.concat(parts);
    if (drop && stack.dropout_scope == StackedEmbedding::DropoutScope::kFull) {
      e = tape.dropout(e, stack.dropout_p, *dropout_rng, true);
    }
    out[k] = e;
  }
  return out;
}

std::vector<Var> bilstm_graph(Tape& tape, TaggerModel& model,
                              std::span<const Var> embedded) {
  SEQTAG_CHECK(!embedded.empty(), "bilstm: empty input");
  const std::size_t n = embedded.size();
  LstmCellVars fwd = bind_cell(tape, model.fwd_cell);
  LstmCellVars bwd = bind_cell(tape, model.bwd_cell);

  std::vector<Var> fwd_h(n), bwd_h(n);
  Var h = tape.constant(Array::vec(model.hidden));
  Var c = tape.constant(Array::vec(model.hidden));
  for (std::size_t t = 0; t < n; ++t) {
    std::tie(h, c) = lstm_step(tape, fwd, embedded[t], h, c);
    fwd_h[t] = h;
  }
  h = tape.constant(Array::vec(model.hidden));
  c = tape.constant(Array::vec(model.hidden));
  for (std::size_t t = n; t > 0; --t) {
    std::tie(h, c) = lstm_step(tape, bwd, embedded[t - 1], h, c);
    bwd_h[t - 1] = h;
  }
  std::vector<Var> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::array<Var, 2> parts = {fwd_h[t], bwd_h[t]};
    out[t] = tape.concat(parts);
  }
  return out;
}

std::vector<Var> emission_graph(Tape& tape, TaggerModel& model,
                                const Sentence& sentence, bool training,
                                Rng* dropout_rng, const CachedEmbedding* cached) {
  std::vector<Var> embedded =
      embed_graph(tape, model, sentence, training, dropout_rng, cached);
  std::vector<Var> states = bilstm_graph(tape, model, embedded);
  Var w = tape.param(model.proj_w);
  Var b = tape.param(model.proj_b);
  std::vector<Var> emissions(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) {
    emissions[t] = tape.add(tape.matvec(w, states[t]), b);
  }
  return emissions;
}

std::vector<std::size_t> gold_indices(const TaggerModel& model,
                                      const Sentence& sentence) {
  std::vector<std::size_t> out;
  out.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) {
    auto idx = model.scheme.tag_index(t.gold_tag);
    SEQTAG_CHECK(idx, "tag '" << t.gold_tag << "' not in scheme");
    out.push_back(*idx);
  }
  return out;
}

}  // namespace

std::vector<Array> bilstm(TaggerModel& model, const std::vector<Array>& embedded) {
  Tape tape;
  std::vector<Var> vars(embedded.size());
  for (std::size_t t = 0; t < embedded.size(); ++t) {
    vars[t] = tape.constant(embedded[t]);
  }
  std::vector<Var> states = bilstm_graph(tape, model, vars);
  std::vector<Array> out;
  out.reserve(states.size());
  for (Var s : states) out.push_back(tape.value(s));
  return out;
}

Array forward_pass(TaggerModel& model, const Sentence& sentence, bool training,
                   Rng* rng) {
  SEQTAG_CHECK(!sentence.tokens.empty(), "forward_pass: empty sentence");
  Tape tape;
  std::vector<Var> emissions =
      emission_graph(tape, model, sentence, training, rng, nullptr);
  const std::size_t n = emissions.size();
  const std::size_t T = model.num_tags();
  Array out = Array::mat(n, T);
  for (std::size_t t = 0; t < n; ++t) {
    const Array& row = tape.value(emissions[t]);
    for (std::size_t j = 0; j < T; ++j) out.at(t, j) = row[j];
  }
  return out;
}

CachedEmbedding cache_embedding(const TaggerModel& model, const Sentence& sentence) {
  CachedEmbedding cache;
  cache.contextual = extract_contextual(model.stack, sentence);
  cache.word.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) {
    cache.word.push_back(model.stack.word_table.lookup(t.text));
  }
  return cache;
}

Var sentence_loss_graph(Tape& tape, TaggerModel& model, const Sentence& sentence,
                        bool training, Rng* dropout_rng,
                        const CachedEmbedding* cached) {
  std::vector<Var> emissions =
      emission_graph(tape, model, sentence, training, dropout_rng, cached);
  const std::vector<std::size_t> gold = gold_indices(model, sentence);
  std::vector<Parameter*> params = model.trainable_params();
  return crf_nll_graph(tape, emissions, model.crf, gold, params);
}

double sentence_nll(TaggerModel& model, const Sentence& sentence) {
  Tape tape;
  Var loss = sentence_loss_graph(tape, model, sentence, false, nullptr, nullptr);
  return tape.scalar_value(loss);
}

std::vector<std::size_t> predict(TaggerModel& model, const Sentence& sentence) {
  const Array emissions = forward_pass(model, sentence, false);
  if (model.constrain_decode) {
    const CrfParams constrained = constrain_transitions(model.crf, model.scheme);
    return viterbi(emissions, constrained).first;
  }
  return viterbi(emissions, model.crf).first;
}

std::vector<std::string> predict_tags(TaggerModel& model, const Sentence& sentence) {
  std::vector<std::string> out;
  for (std::size_t idx : predict(model, sentence)) {
    out.push_back(model.scheme.tag_name(idx));
  }
  return out;
}

std::string epoch_log_line(const EpochLog& e) {
  std::ostringstream out;
  out << "epoch " << e.epoch << " lr " << std::setprecision(17) << e.lr
      << " train_loss " << e.train_loss << " dev_p " << format_percent(e.dev_p)
      << " dev_r " << format_percent(e.dev_r) << " dev_f1 "
      << format_percent(e.dev_f1) << (e.improved ? " *" : "");
  return out.str();
}

TrainState fit(TaggerModel& model, const Corpus& corpus, const TrainConfig& config,
               const std::string& out_dir, std::ostream* log,
               std::vector<EpochLog>* history, const nlohmann::json& provenance) {
  SEQTAG_CHECK(!corpus.train.empty(), "fit: empty training split");
  SEQTAG_CHECK(!corpus.dev.empty(), "fit: empty dev split");
  SEQTAG_CHECK(config.batch_size >= 1, "fit: batch_size must be >= 1");

  const std::vector<Sentence> train =
      window_long_sentences(corpus.train, config.max_seq_len).sentences;
  const std::vector<Sentence> dev =
      window_long_sentences(corpus.dev, config.max_seq_len).sentences;
  model.stack.dropout_p = config.embedding_dropout;

  Rng rng(config.seed);
  std::vector<Parameter*> params = model.trainable_params();
  zero_grads(params);

  // Frozen LMs make per-sentence embeddings constant across epochs.
  std::vector<CachedEmbedding> cache;
  if (!model.fine_tune_lms) {
    cache.reserve(train.size());
    for (const Sentence& s : train) cache.push_back(cache_embedding(model, s));
  }

  std::vector<std::vector<std::string>> dev_gold;
  dev_gold.reserve(dev.size());
  for (const Sentence& s : dev) dev_gold.push_back(s.tags());

  PatienceAnnealer annealer(config.initial_lr, config.anneal_factor,
                            config.patience);
  TrainState state;
  state.current_lr = config.initial_lr;
  const std::string ckpt_path = out_dir + "/best.ckpt";

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (annealer.lr() < config.min_lr) break;
    state.epoch = epoch;
    const double lr = annealer.lr();
    rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      const double batch_n = static_cast<double>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t si = order[k];
        Tape tape;
        Var loss = sentence_loss_graph(tape, model, train[si], true, &rng,
                                       cache.empty() ? nullptr : &cache[si]);
        const double loss_val = tape.scalar_value(loss);
        if (!std::isfinite(loss_val)) {
          std::ostringstream diag;
          diag << "non-finite loss at epoch " << epoch << ", batch "
               << begin / config.batch_size << "; parameter norms:";
          for (Parameter* p : params) {
            diag << ' ' << p->name << '=' << p->value.norm();
          }
          throw TrainingFault(diag.str());
        }
        loss_sum += loss_val;
        tape.backward(loss, 1.0 / batch_n);
      }
      sgd_step(params, lr);
    }

    // Dev evaluation with the current weights.
    std::vector<std::vector<std::string>> dev_pred;
    dev_pred.reserve(dev.size());
    double dev_loss = 0.0;
    for (const Sentence& s : dev) {
      dev_pred.push_back(predict_tags(model, s));
      if (config.dev_metric == TrainConfig::DevMetric::kLoss) {
        dev_loss += sentence_nll(model, s);
      }
    }
    const EvalReport report = evaluate(dev_gold, dev_pred);
    const double score = config.dev_metric == TrainConfig::DevMetric::kMicroF1
                             ? report.micro.f1()
                             : -dev_loss / static_cast<double>(dev.size());

    const PatienceAnnealer::Outcome outcome = annealer.observe(score);
    EpochLog entry{epoch,
                   lr,
                   loss_sum / static_cast<double>(train.size()),
                   report.micro.precision(),
                   report.micro.recall(),
                   report.micro.f1(),
                   score,
                   outcome.improved};
    if (history) history->push_back(entry);
    if (log) *log << epoch_log_line(entry) << '\n';

    if (outcome.improved) {
      state.best_dev_score = score;
      state.best_checkpoint_path = ckpt_path;
      nlohmann::json meta;
      meta["train_config"] = {
          {"initial_lr", config.initial_lr},
          {"anneal_factor", config.anneal_factor},
          {"patience", config.patience},
          {"batch_size", config.batch_size},
          {"max_seq_len", config.max_seq_len},
          {"embedding_dropout", config.embedding_dropout},
          {"max_epochs", config.max_epochs},
          {"min_lr", config.min_lr},
          {"seed", config.seed},
          {"dev_metric",
           config.dev_metric == TrainConfig::DevMetric::kMicroF1 ? "micro_f1"
                                                                 : "loss"},
      };
      meta["provenance"] = provenance;
      meta["best_epoch"] = epoch;
      meta["best_dev_score"] = score;
      save_checkpoint(model, ckpt_path, meta);
    }
    state.current_lr = annealer.lr();
    state.epochs_since_improvement = annealer.since_improvement();
  }
  return state;
}

namespace {

void add_cell(CheckpointWriter& w, const std::string& prefix,
              const LstmCellParams& cell) {
  w.add_array(prefix + ".w_f", cell.w_f.value);
  w.add_array(prefix + ".w_i", cell.w_i.value);
  w.add_array(prefix + ".w_c", cell.w_c.value);
  w.add_array(prefix + ".w_o", cell.w_o.value);
  w.add_array(prefix + ".b_f", cell.b_f.value);
  w.add_array(prefix + ".b_i", cell.b_i.value);
  w.add_array(prefix + ".b_o", cell.b_o.value);
  w.add_array(prefix + ".b_c", cell.b_c.value);
}

LstmCellParams read_cell(const CheckpointReader& r, const std::string& prefix) {
  LstmCellParams cell;
  cell.w_f = Parameter(prefix + ".w_f", r.array(prefix + ".w_f"));
  cell.w_i = Parameter(prefix + ".w_i", r.array(prefix + ".w_i"));
  cell.w_c = Parameter(prefix + ".w_c", r.array(prefix + ".w_c"));
  cell.w_o = Parameter(prefix + ".w_o", r.array(prefix + ".w_o"));
  cell.b_f = Parameter(prefix + ".b_f", r.array(prefix + ".b_f"));
  cell.b_i = Parameter(prefix + ".b_i", r.array(prefix + ".b_i"));
  cell.b_c = Parameter(prefix + ".b_c", r.array(prefix + ".b_c"));
  cell.b_o = Parameter(prefix + ".b_o", r.array(prefix + ".b_o"));
  cell.hidden = cell.b_f.value.len();
  cell.input = cell.w_f.value.cols() - cell.hidden;
  return cell;
}

void add_charlm(CheckpointWriter& w, const std::string& prefix, const CharLm& lm) {
  std::vector<std::string> vocab = lm.vocab.to_list();
  w.add_strings(prefix + ".vocab", vocab);
  w.add_array(prefix + ".char_embed", lm.char_embed.value);
  add_cell(w, prefix + ".cell", lm.cell);
  w.add_array(prefix + ".out_w", lm.out_w.value);
  w.add_array(prefix + ".out_b", lm.out_b.value);
}

CharLm read_charlm(const CheckpointReader& r, const std::string& prefix,
                   CharLm::Direction dir) {
  CharLm lm;
  lm.direction = dir;
  lm.vocab = CharVocab::from_list(r.strings(prefix + ".vocab"));
  lm.char_embed = Parameter(prefix + ".char_embed", r.array(prefix + ".char_embed"));
  lm.cell = read_cell(r, prefix + ".cell");
  lm.out_w = Parameter(prefix + ".out_w", r.array(prefix + ".out_w"));
  lm.out_b = Parameter(prefix + ".out_b", r.array(prefix + ".out_b"));
  lm.d_char = lm.char_embed.value.cols();
  lm.d_lm = lm.cell.hidden;
  return lm;
}

}  // namespace

void save_checkpoint(const TaggerModel& model, const std::string& path,
                     const nlohmann::json& metadata) {
  CheckpointWriter w;
  nlohmann::json meta;
  meta["format"] = "tagger";
  meta["entity_types"] = model.scheme.entity_types();
  meta["hidden"] = model.hidden;
  meta["d_word"] = model.stack.word_table.dim;
  meta["dropout_p"] = model.stack.dropout_p;
  meta["dropout_scope"] =
      model.stack.dropout_scope == StackedEmbedding::DropoutScope::kFull
          ? "full"
          : "contextual";
  meta["oov_policy"] = model.stack.word_table.oov_policy == OovPolicy::kZero
                           ? "zero"
                           : "lowercase_then_zero";
  meta["sigma_sq_finite"] = std::isfinite(model.crf.sigma_sq);
  if (std::isfinite(model.crf.sigma_sq)) meta["sigma_sq"] = model.crf.sigma_sq;
  meta["fine_tune_lms"] = model.fine_tune_lms;
  meta["constrain_decode"] = model.constrain_decode;
  meta["init"] = "xavier_uniform";
  meta["extra"] = metadata;
  w.add_text("meta", meta.dump(2));

  // Word table: vocab in row order.
  std::vector<std::string> words(model.stack.word_table.vocab.size());
  for (const auto& [word, row] : model.stack.word_table.vocab) words[row] = word;
  w.add_strings("word_vocab", words);
  w.add_array("word_vectors", model.stack.word_table.vectors);

  add_charlm(w, "fwd_lm", model.stack.fwd_lm);
  add_charlm(w, "bwd_lm", model.stack.bwd_lm);
  add_cell(w, "fwd_cell", model.fwd_cell);
  add_cell(w, "bwd_cell", model.bwd_cell);
  w.add_array("proj_w", model.proj_w.value);
  w.add_array("proj_b", model.proj_b.value);
  w.add_array("crf.transitions", model.crf.transitions.value);
  w.add_array("crf.start", model.crf.start_scores.value);
  w.add_array("crf.stop", model.crf.stop_scores.value);
  w.write(path);

  std::ofstream sidecar(path + ".json", std::ios::trunc);
  if (!sidecar) throw IoError("cannot write sidecar for '" + path + "'");
  sidecar << meta.dump(2) << '\n';
}

TaggerModel load_checkpoint(const std::string& path, nlohmann::json* metadata) {
  CheckpointReader r(path);
  nlohmann::json meta = nlohmann::json::parse(r.text("meta"));
  if (meta.value("format", "") != "tagger") {
    throw CheckpointError("'" + path + "' is not a tagger checkpoint");
  }
  if (metadata) *metadata = meta;

  TaggerModel m;
  m.scheme = TagScheme(meta.at("entity_types").get<std::vector<std::string>>());
  m.hidden = meta.at("hidden").get<std::size_t>();
  m.fine_tune_lms = meta.value("fine_tune_lms", false);
  m.constrain_decode = meta.value("constrain_decode", true);

  WordEmbeddingTable table;
  std::vector<std::string> words = r.strings("word_vocab");
  for (std::size_t i = 0; i < words.size(); ++i) table.vocab[words[i]] = i;
  table.vectors = r.array("word_vectors");
  table.dim = table.vectors.cols();
  table.oov_policy = meta.value("oov_policy", "lowercase_then_zero") == "zero"
                         ? OovPolicy::kZero
                         : OovPolicy::kLowercaseThenZero;
  if (table.vectors.rows() != words.size()) {
    throw CheckpointError("word table shape mismatch");
  }
  m.stack.word_table = std::move(table);
  m.stack.fwd_lm = read_charlm(r, "fwd_lm", CharLm::Direction::kForward);
  m.stack.bwd_lm = read_charlm(r, "bwd_lm", CharLm::Direction::kBackward);
  m.stack.dropout_p = meta.value("dropout_p", 0.5);
  m.stack.dropout_scope = meta.value("dropout_scope", "full") == "contextual"
                              ? StackedEmbedding::DropoutScope::kContextual
                              : StackedEmbedding::DropoutScope::kFull;
  m.fwd_cell = read_cell(r, "fwd_cell");
  m.bwd_cell = read_cell(r, "bwd_cell");
  m.proj_w = Parameter("proj_w", r.array("proj_w"));
  m.proj_b = Parameter("proj_b", r.array("proj_b"));
  const std::size_t T = m.scheme.size();
  m.crf = CrfParams(T, meta.value("sigma_sq_finite", false)
                           ? meta.at("sigma_sq").get<double>()
                           : std::numeric_limits<double>::infinity());
  m.crf.transitions.value = r.array("crf.transitions");
  m.crf.start_scores.value = r.array("crf.start");
  m.crf.stop_scores.value = r.array("crf.stop");

  if (m.proj_w.value.rows() != T || m.proj_w.value.cols() != 2 * m.hidden ||
      m.crf.transitions.value.rows() != T ||
      m.crf.transitions.value.cols() != T ||
      m.fwd_cell.input != m.stack.total_dim() ||
      m.bwd_cell.input != m.stack.total_dim()) {
    throw CheckpointError("tagger checkpoint has inconsistent shapes");
  }
  return m;
}

}  // namespace seqtag
