#include "seqtag/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "seqtag/corpus.hpp"
#include "seqtag/embeddings.hpp"
#include "seqtag/eval.hpp"
#include "seqtag/tagger.hpp"

namespace seqtag {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t file_digest(const std::string& path) {
  return fnv1a64(read_file(path));
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Layered option resolution: defaults < --config JSON < explicit flags.
// Unknown config keys are rejected.
class ConfigLayer {
 public:
  ConfigLayer(CLI::App* cmd, const std::string& config_path) : cmd_(cmd) {
    if (config_path.empty()) return;
    std::string text = read_file(config_path);
    json parsed = json::parse(text, nullptr, true, /*ignore_comments=*/false);
    if (!parsed.is_object()) {
      throw ParseError("config file must hold a JSON object");
    }
    config_ = std::move(parsed);
  }

  template <typename T>
  void merge(const std::string& key, T& value) {
    known_.insert(key);
    if (cmd_->count("--" + flag_of(key)) > 0) return;  // CLI wins
    if (config_.contains(key)) value = config_.at(key).get<T>();
  }

  void finish() const {
    for (const auto& [key, v] : config_.items()) {
      if (!known_.count(key)) {
        throw ParseError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  static std::string flag_of(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

  CLI::App* cmd_;
  json config_ = json::object();
  std::set<std::string> known_;
};

int env_threads() {
  const char* raw = std::getenv("SEQTAG_THREADS");
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) {
    throw ParseError("SEQTAG_THREADS must be a positive integer");
  }
  return static_cast<int>(v);
}

void write_resolved_config(const std::string& out_dir, const json& resolved) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir + "/resolved_config.json", std::ios::trunc);
  if (!f) throw IoError("cannot write resolved config in '" + out_dir + "'");
  f << resolved.dump(2) << '\n';
}

// Token lines of a CoNLL file with their 1-based line numbers, used for
// alignment diagnostics in `evaluate`.
struct TaggedFile {
  std::vector<std::vector<std::string>> tokens;  // per sentence
  std::vector<std::vector<std::string>> tags;
  std::vector<std::vector<std::size_t>> lines;
};

TaggedFile read_tagged(const std::string& path, std::size_t tag_col_from_end) {
  TaggedFile out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> toks, tags;
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t line_no = 0;
  const auto flush = [&]() {
    if (!toks.empty()) {
      out.tokens.push_back(std::move(toks));
      out.tags.push_back(std::move(tags));
      out.lines.push_back(std::move(lines));
      toks = {};
      tags = {};
      lines = {};
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    if (line.rfind("-DOCSTART-", 0) == 0) continue;
    std::istringstream fields(line);
    std::vector<std::string> cols;
    std::string f;
    while (fields >> f) cols.push_back(f);
    if (cols.size() < 2 + tag_col_from_end) {
      throw ParseError("expected at least " +
                           std::to_string(2 + tag_col_from_end) + " columns",
                       line_no);
    }
    toks.push_back(cols[0]);
    tags.push_back(cols[cols.size() - 1 - tag_col_from_end]);
    lines.push_back(line_no);
  }
  flush();
  return out;
}

// --- subcommand bodies -------------------------------------------------

int cmd_corpus_stats(const std::string& input, const std::string& types_csv,
                     const std::string& json_out, const std::string& out_dir,
                     bool repair_iob1, const json& resolved, std::ostream& out) {
  TagScheme scheme;
  if (types_csv.empty()) {
    std::istringstream first_pass(read_file(input));
    scheme = infer_scheme(first_pass);
  } else {
    scheme = TagScheme(split_csv(types_csv));
  }
  std::istringstream stream(read_file(input));
  ParseOptions options;
  options.repair_iob1 = repair_iob1;
  ParseResult parsed = parse_conll(stream, scheme, options);
  const CorpusStats stats = corpus_stats(parsed.sentences);
  out << stats_to_text(stats);
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + json_out + "'");
    f << stats_to_json(stats) << '\n';
  }
  if (!out_dir.empty()) write_resolved_config(out_dir, resolved);
  return 0;
}

int cmd_pretrain_lm(const std::string& text_path, const std::string& out_dir,
                    const LmPretrainConfig& config, const json& resolved,
                    std::ostream& out) {
  const std::u32string text = decode_utf8(read_file(text_path));
  LmPretrainResult result = pretrain_lm(text, config);
  fs::create_directories(out_dir);

  json meta;
  meta["corpus_digest"] = file_digest(text_path);
  meta["config"] = resolved;
  save_charlm(result.forward, out_dir + "/fwd.lm", meta);
  save_charlm(result.backward, out_dir + "/bwd.lm", meta);

  std::ofstream log(out_dir + "/pretrain_log.txt", std::ios::trunc);
  for (std::size_t e = 0; e < result.forward_epoch_ppl.size(); ++e) {
    std::ostringstream line;
    line << "epoch " << (e + 1) << " fwd_ppl " << std::setprecision(17)
         << result.forward_epoch_ppl[e] << " bwd_ppl "
         << result.backward_epoch_ppl[e];
    log << line.str() << '\n';
    out << line.str() << '\n';
  }
  write_resolved_config(out_dir, resolved);
  return 0;
}

struct TrainCliOptions {
  std::string train_path, dev_path, test_path, types_csv, vectors_path;
  std::string lm_forward, lm_backward;
  std::size_t hidden = 256;
  std::size_t d_char = 16;
  std::size_t d_lm = 32;
  double sigma_sq = 0.0;  // 0 means off (sigma^2 = infinity)
  bool fine_tune_lms = false;
  bool no_constrain_decode = false;
  bool repair_iob1 = false;
  std::string dev_metric = "micro_f1";
  std::string dropout_scope = "full";
  TrainConfig train;
  std::string out_dir;
};

std::vector<Sentence> load_split(const std::string& path, const TagScheme& scheme,
                                 bool repair_iob1, const char* name) {
  std::istringstream stream(read_file(path));
  ParseOptions options;
  options.repair_iob1 = repair_iob1;
  ParseResult parsed = parse_conll(stream, scheme, options);
  if (parsed.sentences.empty()) {
    throw ParseError(std::string(name) + " split '" + path + "' is empty");
  }
  for (const Sentence& s : parsed.sentences) {
    std::vector<Violation> v = validate_scheme(s, scheme);
    if (!v.empty()) {
      throw SchemeError(std::string(name) + " split '" + path +
                        "': IOB2 violation at token " +
                        std::to_string(v.front().index) + ": " +
                        v.front().reason + " (use --repair-iob1 for IOB1 data)");
    }
  }
  return std::move(parsed.sentences);
}

int cmd_train(const TrainCliOptions& opt, const json& resolved, std::ostream& out) {
  // Scheme: declared or inferred from all three splits.
  TagScheme scheme;
  if (!opt.types_csv.empty()) {
    scheme = TagScheme(split_csv(opt.types_csv));
  } else {
    std::set<std::string> types;
    for (const std::string& p : {opt.train_path, opt.dev_path, opt.test_path}) {
      std::istringstream stream(read_file(p));
      for (const std::string& t : infer_scheme(stream).entity_types()) {
        types.insert(t);
      }
    }
    scheme = TagScheme(std::vector<std::string>(types.begin(), types.end()));
  }

  Corpus corpus;
  corpus.scheme = scheme;
  corpus.train = load_split(opt.train_path, scheme, opt.repair_iob1, "train");
  corpus.dev = load_split(opt.dev_path, scheme, opt.repair_iob1, "dev");
  corpus.test = load_split(opt.test_path, scheme, opt.repair_iob1, "test");

  Rng rng(opt.train.seed);
  StackedEmbedding stack;
  {
    std::istringstream vec_stream(read_file(opt.vectors_path));
    stack.word_table = load_word_vectors(vec_stream);
  }
  json provenance;
  provenance["train_digest"] = file_digest(opt.train_path);
  provenance["dev_digest"] = file_digest(opt.dev_path);
  provenance["test_digest"] = file_digest(opt.test_path);
  provenance["vectors_digest"] = file_digest(opt.vectors_path);
  if (!opt.lm_forward.empty() || !opt.lm_backward.empty()) {
    if (opt.lm_forward.empty() || opt.lm_backward.empty()) {
      throw ParseError("--lm-forward and --lm-backward must be given together");
    }
    stack.fwd_lm = load_charlm(opt.lm_forward);
    stack.bwd_lm = load_charlm(opt.lm_backward);
    provenance["lm_forward_digest"] = file_digest(opt.lm_forward);
    provenance["lm_backward_digest"] = file_digest(opt.lm_backward);
  } else {
    // No pretrained LMs: random character LMs over the training text.
    std::u32string text;
    for (const Sentence& s : corpus.train) {
      for (const Token& t : s.tokens) {
        text += decode_utf8(t.text);
        text.push_back(U' ');
      }
    }
    CharVocab vocab = CharVocab::from_text(text);
    stack.fwd_lm = CharLm::init(CharLm::Direction::kForward, vocab, opt.d_char,
                                opt.d_lm, rng);
    stack.bwd_lm = CharLm::init(CharLm::Direction::kBackward, vocab, opt.d_char,
                                opt.d_lm, rng);
    provenance["lm_init"] = "random";
  }
  stack.dropout_p = opt.train.embedding_dropout;
  stack.dropout_scope = opt.dropout_scope == "contextual"
                            ? StackedEmbedding::DropoutScope::kContextual
                            : StackedEmbedding::DropoutScope::kFull;

  const double sigma_sq = opt.sigma_sq > 0.0
                              ? opt.sigma_sq
                              : std::numeric_limits<double>::infinity();
  TaggerModel model =
      TaggerModel::init(std::move(stack), scheme, opt.hidden, rng, sigma_sq);
  model.fine_tune_lms = opt.fine_tune_lms;
  model.constrain_decode = !opt.no_constrain_decode;

  TrainConfig config = opt.train;
  if (opt.dev_metric == "loss") {
    config.dev_metric = TrainConfig::DevMetric::kLoss;
  } else if (opt.dev_metric != "micro_f1") {
    throw ParseError("dev_metric must be 'micro_f1' or 'loss'");
  }

  fs::create_directories(opt.out_dir);
  write_resolved_config(opt.out_dir, resolved);
  std::ofstream log_txt(opt.out_dir + "/train_log.txt", std::ios::trunc);
  std::vector<EpochLog> history;

  std::ostringstream tee;
  TrainState state = fit(model, corpus, config, opt.out_dir, &tee, &history,
                         provenance);
  log_txt << tee.str();
  out << tee.str();

  json jlog = json::array();
  for (const EpochLog& e : history) {
    jlog.push_back({{"epoch", e.epoch},
                    {"lr", e.lr},
                    {"train_loss", e.train_loss},
                    {"dev_p", e.dev_p},
                    {"dev_r", e.dev_r},
                    {"dev_f1", e.dev_f1},
                    {"improved", e.improved}});
  }
  std::ofstream log_json(opt.out_dir + "/train_log.json", std::ios::trunc);
  log_json << jlog.dump(2) << '\n';

  // Final test evaluation with the best checkpoint.
  TaggerModel best = state.best_checkpoint_path.empty()
                         ? std::move(model)
                         : load_checkpoint(state.best_checkpoint_path);
  const std::vector<Sentence> test =
      window_long_sentences(corpus.test, config.max_seq_len).sentences;
  std::vector<std::vector<std::string>> gold, pred;
  for (const Sentence& s : test) {
    gold.push_back(s.tags());
    pred.push_back(predict_tags(best, s));
  }
  const EvalReport report = evaluate(gold, pred);
  out << "test evaluation (best checkpoint, epoch to best dev "
      << format_percent(state.best_dev_score) << "):\n"
      << report_to_text(report);
  std::ofstream test_json(opt.out_dir + "/test_report.json", std::ios::trunc);
  test_json << report_to_json(report) << '\n';
  return 0;
}

int cmd_tag(const std::string& model_path, const std::string& input_path,
            const std::string& output_path, std::size_t max_seq_len,
            const std::string& out_dir, const json& resolved) {
  json meta;
  TaggerModel model = load_checkpoint(model_path, &meta);

  std::ifstream in(input_path);
  if (!in) throw IoError("cannot open '" + input_path + "'");
  std::ofstream out_file(output_path, std::ios::trunc);
  if (!out_file) throw IoError("cannot write '" + output_path + "'");

  std::vector<std::string> pending_lines;  // original token lines
  Sentence sentence;

  const auto flush = [&]() {
    if (sentence.tokens.empty()) return;
    std::vector<std::string> tags;
    const Windowed windows = window_long_sentences({sentence}, max_seq_len);
    for (const Sentence& w : windows.sentences) {
      for (const std::string& tag : predict_tags(model, w)) tags.push_back(tag);
    }
    for (std::size_t i = 0; i < pending_lines.size(); ++i) {
      out_file << pending_lines[i] << '\t' << tags[i] << '\n';
    }
    pending_lines.clear();
    sentence.tokens.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      out_file << line << '\n';
      continue;
    }
    if (line.rfind("-DOCSTART-", 0) == 0) {
      out_file << line << '\n';
      continue;
    }
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    pending_lines.push_back(line);
    sentence.tokens.push_back(Token{token, "O"});
  }
  flush();
  if (!out_dir.empty()) write_resolved_config(out_dir, resolved);
  return 0;
}

int cmd_evaluate(const std::string& gold_path, const std::string& pred_path,
                 const std::string& merged_path, const std::string& json_out,
                 bool strict, const std::string& out_dir, const json& resolved,
                 std::ostream& out) {
  std::vector<std::vector<std::string>> gold, pred;
  if (!merged_path.empty()) {
    // token, gold, pred columns
    TaggedFile g = read_tagged(merged_path, 1);
    TaggedFile p = read_tagged(merged_path, 0);
    gold = std::move(g.tags);
    pred = std::move(p.tags);
  } else {
    TaggedFile g = read_tagged(gold_path, 0);
    TaggedFile p = read_tagged(pred_path, 0);
    // Alignment: same sentence segmentation and token column.
    const std::size_t sentences = std::min(g.tokens.size(), p.tokens.size());
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t len = std::min(g.tokens[s].size(), p.tokens[s].size());
      for (std::size_t i = 0; i < len; ++i) {
        if (g.tokens[s][i] != p.tokens[s][i]) {
          throw ParseError("files diverge: token '" + g.tokens[s][i] +
                               "' vs '" + p.tokens[s][i] + "' (pred line " +
                               std::to_string(p.lines[s][i]) + ")",
                           g.lines[s][i]);
        }
      }
      if (g.tokens[s].size() != p.tokens[s].size()) {
        const bool gold_longer = g.tokens[s].size() > p.tokens[s].size();
        const auto& longer = gold_longer ? g : p;
        throw ParseError(std::string("files diverge: sentence ") +
                             std::to_string(s + 1) + " has " +
                             std::to_string(g.tokens[s].size()) +
                             " gold tokens vs " +
                             std::to_string(p.tokens[s].size()) + " predicted",
                         longer.lines[s][len]);
      }
    }
    if (g.tokens.size() != p.tokens.size()) {
      const auto& longer = g.tokens.size() > p.tokens.size() ? g : p;
      throw ParseError("files diverge: " + std::to_string(g.tokens.size()) +
                           " gold sentences vs " +
                           std::to_string(p.tokens.size()) + " predicted",
                       longer.lines[sentences][0]);
    }
    gold = std::move(g.tags);
    pred = std::move(p.tags);
  }

  const EvalReport report = evaluate(gold, pred, strict);
  out << report_to_text(report);
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + json_out + "'");
    f << report_to_json(report) << '\n';
  }
  if (!out_dir.empty()) write_resolved_config(out_dir, resolved);
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"BiLSTM-CRF sequence tagger with stacked character-LM and "
               "word embeddings"};
  app.require_subcommand(1);

  // Shared per-command state (only the chosen subcommand's values matter).
  std::string config_path, out_dir, input, types_csv, json_out;
  bool repair_iob1 = false;

  // corpus-stats
  CLI::App* stats_cmd =
      app.add_subcommand("corpus-stats", "Parse a CoNLL file and report "
                                         "sentence/token/annotation counts");
  stats_cmd->add_option("--config", config_path, "flat JSON config file");
  stats_cmd->add_option("--input", input, "CoNLL file");
  stats_cmd->add_option("--types", types_csv,
                        "comma-separated entity types (default: infer)");
  stats_cmd->add_option("--json", json_out, "also write stats as JSON");
  stats_cmd->add_option("--out", out_dir, "directory for the resolved config");
  stats_cmd->add_flag("--repair-iob1", repair_iob1,
                      "convert chain-opening I- tags to B-");

  // pretrain-lm
  LmPretrainConfig lm_config;
  std::string text_path;
  CLI::App* lm_cmd = app.add_subcommand(
      "pretrain-lm", "Train forward/backward character LMs on raw text");
  lm_cmd->add_option("--config", config_path, "flat JSON config file");
  lm_cmd->add_option("--text", text_path, "raw text corpus");
  lm_cmd->add_option("--out", out_dir, "output directory");
  lm_cmd->add_option("--d-char", lm_config.d_char, "char embedding dim");
  lm_cmd->add_option("--d-lm", lm_config.d_lm, "LM hidden size");
  lm_cmd->add_option("--lr", lm_config.lr, "SGD learning rate");
  lm_cmd->add_option("--epochs", lm_config.epochs, "training epochs");
  lm_cmd->add_option("--bptt-window", lm_config.bptt_window,
                     "truncated BPTT window");
  lm_cmd->add_option("--batch", lm_config.batch, "parallel stream chunks");
  lm_cmd->add_option("--seed", lm_config.seed, "RNG seed");

  // train
  TrainCliOptions train_opt;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train the BiLSTM-CRF tagger");
  train_cmd->add_option("--config", config_path, "flat JSON config file");
  train_cmd->add_option("--train", train_opt.train_path, "training split");
  train_cmd->add_option("--dev", train_opt.dev_path, "development split");
  train_cmd->add_option("--test", train_opt.test_path, "test split");
  train_cmd->add_option("--types", train_opt.types_csv,
                        "comma-separated entity types (default: infer)");
  train_cmd->add_option("--vectors", train_opt.vectors_path,
                        "word-vector text file");
  train_cmd->add_option("--lm-forward", train_opt.lm_forward,
                        "forward char-LM checkpoint");
  train_cmd->add_option("--lm-backward", train_opt.lm_backward,
                        "backward char-LM checkpoint");
  train_cmd->add_option("--hidden", train_opt.hidden, "BiLSTM hidden size");
  train_cmd->add_option("--d-char", train_opt.d_char,
                        "char embedding dim for random LMs");
  train_cmd->add_option("--d-lm", train_opt.d_lm,
                        "LM hidden size for random LMs");
  train_cmd->add_option("--lr", train_opt.train.initial_lr, "initial lr");
  train_cmd->add_option("--anneal-factor", train_opt.train.anneal_factor,
                        "lr anneal factor");
  train_cmd->add_option("--patience", train_opt.train.patience,
                        "epochs without improvement before annealing");
  train_cmd->add_option("--batch-size", train_opt.train.batch_size, "batch size");
  train_cmd->add_option("--max-seq-len", train_opt.train.max_seq_len,
                        "window length for long sentences");
  train_cmd->add_option("--dropout", train_opt.train.embedding_dropout,
                        "embedding dropout");
  train_cmd->add_option("--max-epochs", train_opt.train.max_epochs, "epoch cap");
  train_cmd->add_option("--min-lr", train_opt.train.min_lr,
                        "stop once lr falls below");
  train_cmd->add_option("--seed", train_opt.train.seed, "RNG seed");
  train_cmd->add_option("--sigma-sq", train_opt.sigma_sq,
                        "L2 variance (0 = off)");
  train_cmd->add_flag("--fine-tune-lms", train_opt.fine_tune_lms,
                      "update char-LM encoders during training");
  train_cmd->add_flag("--no-constrain-decode", train_opt.no_constrain_decode,
                      "disable IOB2 transition constraints at decode time");
  train_cmd->add_flag("--repair-iob1", train_opt.repair_iob1,
                      "convert chain-opening I- tags to B-");
  train_cmd->add_option("--dev-metric", train_opt.dev_metric,
                        "micro_f1 or loss");
  train_cmd->add_option("--dropout-scope", train_opt.dropout_scope,
                        "full or contextual");
  train_cmd->add_option("--out", train_opt.out_dir, "output directory");

  // tag
  std::string model_path, tag_input, tag_output;
  std::size_t tag_max_seq_len = 512;
  CLI::App* tag_cmd = app.add_subcommand(
      "tag", "Append a predicted tag column to a CoNLL file");
  tag_cmd->add_option("--config", config_path, "flat JSON config file");
  tag_cmd->add_option("--model", model_path, "tagger checkpoint");
  tag_cmd->add_option("--input", tag_input, "input CoNLL file");
  tag_cmd->add_option("--output", tag_output, "output file");
  tag_cmd->add_option("--max-seq-len", tag_max_seq_len,
                      "window length for long sentences");
  tag_cmd->add_option("--out", out_dir, "directory for the resolved config");

  // evaluate
  std::string gold_path, pred_path, merged_path;
  bool strict = false;
  CLI::App* eval_cmd = app.add_subcommand(
      "evaluate", "Entity-level exact-match P/R/F1 of predictions vs gold");
  eval_cmd->add_option("--config", config_path, "flat JSON config file");
  eval_cmd->add_option("--gold", gold_path, "gold CoNLL file (tag = last column)");
  eval_cmd->add_option("--pred", pred_path, "predicted CoNLL file");
  eval_cmd->add_option("--merged", merged_path,
                       "single file: token, gold, pred columns");
  eval_cmd->add_flag("--strict", strict,
                     "drop (rather than repair) chain-opening I- spans");
  eval_cmd->add_option("--json", json_out, "also write the report as JSON");
  eval_cmd->add_option("--out", out_dir, "directory for the resolved config");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    const int threads = env_threads();

    if (stats_cmd->parsed()) {
      ConfigLayer layer(stats_cmd, config_path);
      layer.merge("input", input);
      layer.merge("types", types_csv);
      layer.merge("json", json_out);
      layer.merge("out", out_dir);
      layer.merge("repair_iob1", repair_iob1);
      layer.finish();
      if (input.empty()) throw ParseError("corpus-stats requires --input");
      json resolved{{"command", "corpus-stats"}, {"input", input},
                    {"types", types_csv},        {"json", json_out},
                    {"out", out_dir},            {"repair_iob1", repair_iob1},
                    {"threads", threads}};
      return cmd_corpus_stats(input, types_csv, json_out, out_dir, repair_iob1,
                              resolved, out);
    }
    if (lm_cmd->parsed()) {
      ConfigLayer layer(lm_cmd, config_path);
      layer.merge("text", text_path);
      layer.merge("out", out_dir);
      layer.merge("d_char", lm_config.d_char);
      layer.merge("d_lm", lm_config.d_lm);
      layer.merge("lr", lm_config.lr);
      layer.merge("epochs", lm_config.epochs);
      layer.merge("bptt_window", lm_config.bptt_window);
      layer.merge("batch", lm_config.batch);
      layer.merge("seed", lm_config.seed);
      layer.finish();
      if (text_path.empty() || out_dir.empty()) {
        throw ParseError("pretrain-lm requires --text and --out");
      }
      json resolved{{"command", "pretrain-lm"},
                    {"text", text_path},
                    {"out", out_dir},
                    {"d_char", lm_config.d_char},
                    {"d_lm", lm_config.d_lm},
                    {"lr", lm_config.lr},
                    {"epochs", lm_config.epochs},
                    {"bptt_window", lm_config.bptt_window},
                    {"batch", lm_config.batch},
                    {"seed", lm_config.seed},
                    {"threads", threads}};
      return cmd_pretrain_lm(text_path, out_dir, lm_config, resolved, out);
    }
    if (train_cmd->parsed()) {
      ConfigLayer layer(train_cmd, config_path);
      layer.merge("train", train_opt.train_path);
      layer.merge("dev", train_opt.dev_path);
      layer.merge("test", train_opt.test_path);
      layer.merge("types", train_opt.types_csv);
      layer.merge("vectors", train_opt.vectors_path);
      layer.merge("lm_forward", train_opt.lm_forward);
      layer.merge("lm_backward", train_opt.lm_backward);
      layer.merge("hidden", train_opt.hidden);
      layer.merge("d_char", train_opt.d_char);
      layer.merge("d_lm", train_opt.d_lm);
      layer.merge("lr", train_opt.train.initial_lr);
      layer.merge("anneal_factor", train_opt.train.anneal_factor);
      layer.merge("patience", train_opt.train.patience);
      layer.merge("batch_size", train_opt.train.batch_size);
      layer.merge("max_seq_len", train_opt.train.max_seq_len);
      layer.merge("dropout", train_opt.train.embedding_dropout);
      layer.merge("max_epochs", train_opt.train.max_epochs);
      layer.merge("min_lr", train_opt.train.min_lr);
      layer.merge("seed", train_opt.train.seed);
      layer.merge("sigma_sq", train_opt.sigma_sq);
      layer.merge("fine_tune_lms", train_opt.fine_tune_lms);
      layer.merge("no_constrain_decode", train_opt.no_constrain_decode);
      layer.merge("repair_iob1", train_opt.repair_iob1);
      layer.merge("dev_metric", train_opt.dev_metric);
      layer.merge("dropout_scope", train_opt.dropout_scope);
      layer.merge("out", train_opt.out_dir);
      layer.finish();
      if (train_opt.train_path.empty() || train_opt.dev_path.empty() ||
          train_opt.test_path.empty()) {
        throw ParseError("train requires --train, --dev and --test");
      }
      if (train_opt.vectors_path.empty()) {
        throw ParseError("train requires --vectors");
      }
      if (train_opt.out_dir.empty()) throw ParseError("train requires --out");
      json resolved{{"command", "train"},
                    {"train", train_opt.train_path},
                    {"dev", train_opt.dev_path},
                    {"test", train_opt.test_path},
                    {"types", train_opt.types_csv},
                    {"vectors", train_opt.vectors_path},
                    {"lm_forward", train_opt.lm_forward},
                    {"lm_backward", train_opt.lm_backward},
                    {"hidden", train_opt.hidden},
                    {"d_char", train_opt.d_char},
                    {"d_lm", train_opt.d_lm},
                    {"lr", train_opt.train.initial_lr},
                    {"anneal_factor", train_opt.train.anneal_factor},
                    {"patience", train_opt.train.patience},
                    {"batch_size", train_opt.train.batch_size},
                    {"max_seq_len", train_opt.train.max_seq_len},
                    {"dropout", train_opt.train.embedding_dropout},
                    {"max_epochs", train_opt.train.max_epochs},
                    {"min_lr", train_opt.train.min_lr},
                    {"seed", train_opt.train.seed},
                    {"sigma_sq", train_opt.sigma_sq},
                    {"fine_tune_lms", train_opt.fine_tune_lms},
                    {"no_constrain_decode", train_opt.no_constrain_decode},
                    {"repair_iob1", train_opt.repair_iob1},
                    {"dev_metric", train_opt.dev_metric},
                    {"dropout_scope", train_opt.dropout_scope},
                    {"out", train_opt.out_dir},
                    {"threads", threads}};
      return cmd_train(train_opt, resolved, out);
    }
    if (tag_cmd->parsed()) {
      ConfigLayer layer(tag_cmd, config_path);
      layer.merge("model", model_path);
      layer.merge("input", tag_input);
      layer.merge("output", tag_output);
      layer.merge("max_seq_len", tag_max_seq_len);
      layer.merge("out", out_dir);
      layer.finish();
      if (model_path.empty() || tag_input.empty() || tag_output.empty()) {
        throw ParseError("tag requires --model, --input and --output");
      }
      json resolved{{"command", "tag"},
                    {"model", model_path},
                    {"input", tag_input},
                    {"output", tag_output},
                    {"max_seq_len", tag_max_seq_len},
                    {"out", out_dir},
                    {"threads", threads}};
      return cmd_tag(model_path, tag_input, tag_output, tag_max_seq_len,
                     out_dir, resolved);
    }
    if (eval_cmd->parsed()) {
      ConfigLayer layer(eval_cmd, config_path);
      layer.merge("gold", gold_path);
      layer.merge("pred", pred_path);
      layer.merge("merged", merged_path);
      layer.merge("strict", strict);
      layer.merge("json", json_out);
      layer.merge("out", out_dir);
      layer.finish();
      if (merged_path.empty() && (gold_path.empty() || pred_path.empty())) {
        throw ParseError("evaluate requires --gold and --pred, or --merged");
      }
      json resolved{{"command", "evaluate"}, {"gold", gold_path},
                    {"pred", pred_path},     {"merged", merged_path},
                    {"strict", strict},      {"json", json_out},
                    {"out", out_dir},        {"threads", threads}};
      return cmd_evaluate(gold_path, pred_path, merged_path, json_out, strict,
                          out_dir, resolved, out);
    }
    return 2;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingFault& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace seqtag
