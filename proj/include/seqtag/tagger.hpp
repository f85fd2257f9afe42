#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "seqtag/corpus.hpp"
#include "seqtag/crf.hpp"
#include "seqtag/embeddings.hpp"
#include "seqtag/lstm.hpp"

#include "json.hpp"

namespace seqtag {

// Stacked embeddings -> single-layer BiLSTM -> linear projection -> CRF.
struct TaggerModel {
  StackedEmbedding stack;
  LstmCellParams fwd_cell;  // d_in = stack.total_dim()
  LstmCellParams bwd_cell;
  Parameter proj_w;  // T x 2h
  Parameter proj_b;  // T
  CrfParams crf;
  TagScheme scheme;
  std::size_t hidden = 0;
  // Word vectors are always frozen; char LMs train only when fine-tuning.
  bool fine_tune_lms = false;
  // Apply IOB2 transition constraints when decoding (training stays soft).
  bool constrain_decode = true;

  static TaggerModel init(StackedEmbedding stack, TagScheme scheme,
                          std::size_t hidden, Rng& rng,
                          double sigma_sq = std::numeric_limits<double>::infinity());

  std::size_t num_tags() const { return scheme.size(); }
  std::vector<Parameter*> trainable_params();
};

struct TrainConfig {
  double initial_lr = 0.1;
  double anneal_factor = 0.5;
  std::size_t patience = 3;
  std::size_t batch_size = 32;
  std::size_t max_seq_len = 512;
  double embedding_dropout = 0.5;
  std::size_t max_epochs = 100;
  double min_lr = 1e-4;
  std::uint64_t seed = 1;
  enum class DevMetric { kMicroF1, kLoss };
  DevMetric dev_metric = DevMetric::kMicroF1;
};

// Learning-rate schedule: anneal by `factor` every `patience` consecutive
// epochs without strict improvement of the dev score.
class PatienceAnnealer {
 public:
  PatienceAnnealer(double initial_lr, double factor, std::size_t patience);

  struct Outcome {
    bool improved;
    bool annealed;
    double lr;
  };
  Outcome observe(double score);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t since_improvement() const { return since_improvement_; }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double best_;
  std::size_t since_improvement_ = 0;
};

struct TrainState {
  double current_lr = 0.0;
  std::size_t epoch = 0;
  double best_dev_score = 0.0;
  std::size_t epochs_since_improvement = 0;
  std::string best_checkpoint_path;
};

struct EpochLog {
  std::size_t epoch;
  double lr;
  double train_loss;
  double dev_p, dev_r, dev_f1;
  double dev_score;  // selection metric (micro-F1, or -loss)
  bool improved;
};

// BiLSTM over embedded inputs; per-token output is [h_fwd ; h_bwd] (2h).
std::vector<Array> bilstm(TaggerModel& model, const std::vector<Array>& embedded);

// N x T emission matrix for one sentence (eval path; training mode applies
// embedding dropout and then needs `rng`).
Array forward_pass(TaggerModel& model, const Sentence& sentence, bool training,
                   Rng* rng = nullptr);

// Per-sentence regularized CRF loss in eval mode.
double sentence_nll(TaggerModel& model, const Sentence& sentence);

// Viterbi decode in eval mode (constrained per model.constrain_decode).
std::vector<std::size_t> predict(TaggerModel& model, const Sentence& sentence);
std::vector<std::string> predict_tags(TaggerModel& model, const Sentence& sentence);

// One sentence's loss graph, shared by fit() and the gradient checks.
// When `cached` is given (frozen-LM fast path) it must hold the pre-dropout
// contextual and word parts for each token.
struct CachedEmbedding {
  std::vector<Array> contextual;
  std::vector<Array> word;
};
CachedEmbedding cache_embedding(const TaggerModel& model, const Sentence& sentence);
Var sentence_loss_graph(Tape& tape, TaggerModel& model, const Sentence& sentence,
                        bool training, Rng* dropout_rng,
                        const CachedEmbedding* cached);

// SGD training with seeded shuffling, mean-of-batch loss, per-epoch dev
// evaluation and patience annealing. Writes the best checkpoint to
// out_dir + "/best.ckpt". `log` (optional) receives one line per epoch.
TrainState fit(TaggerModel& model, const Corpus& corpus, const TrainConfig& config,
               const std::string& out_dir, std::ostream* log = nullptr,
               std::vector<EpochLog>* history = nullptr,
               const nlohmann::json& provenance = {});

std::string epoch_log_line(const EpochLog& e);

void save_checkpoint(const TaggerModel& model, const std::string& path,
                     const nlohmann::json& metadata = {});
TaggerModel load_checkpoint(const std::string& path,
                            nlohmann::json* metadata = nullptr);

}  // namespace seqtag
