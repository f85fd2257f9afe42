#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqtag/array.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/lstm.hpp"
#include "seqtag/tape.hpp"

#include "json.hpp"

namespace seqtag {

enum class OovPolicy { kZero, kLowercaseThenZero };

// Frozen pretrained word vectors. Lookup never fails: out-of-vocabulary
// words fall back per policy, terminating in the zero vector.
struct WordEmbeddingTable {
  std::unordered_map<std::string, std::size_t> vocab;
  Array vectors;  // |V| x dim
  std::size_t dim = 0;
  OovPolicy oov_policy = OovPolicy::kLowercaseThenZero;

  Array lookup(std::string_view word) const;
};

// Text format: one entry per line, "word v1 v2 ... vd". First occurrence
// of a duplicate word wins (with a warning).
WordEmbeddingTable load_word_vectors(std::istream& stream,
                                     OovPolicy policy = OovPolicy::kLowercaseThenZero,
                                     std::vector<std::string>* warnings = nullptr);

// Character inventory of a char LM. Index 0 is the unknown symbol, index 1
// the sentence-boundary symbol; the space character is always present.
class CharVocab {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kBoundary = 1;
  // U+2401 (symbol for start-of-heading) stands in for the boundary when a
  // vocab is built from text; it never appears in real corpora.
  static constexpr char32_t kBoundaryChar = 0x2401;

  CharVocab() = default;
  static CharVocab from_text(std::u32string_view text);
  static CharVocab from_list(const std::vector<std::string>& utf8_chars);

  std::size_t size() const { return chars_.size(); }
  std::size_t index(char32_t c) const;
  // Inventory in index order, each code point UTF-8 encoded (for checkpoints).
  std::vector<std::string> to_list() const;

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, std::size_t> index_;
};

// Character-level language model: embedding lookup, one LSTM cell, and a
// softmax head over the inventory. A backward-direction LM consumes its
// input reversed; callers of the raw scoring functions pass the stream in
// consumption order.
struct CharLm {
  enum class Direction { kForward, kBackward };

  Direction direction = Direction::kForward;
  CharVocab vocab;
  std::size_t d_char = 0;
  std::size_t d_lm = 0;
  Parameter char_embed;  // |C| x d_char
  LstmCellParams cell;   // hidden d_lm, input d_char
  Parameter out_w;       // |C| x d_lm
  Parameter out_b;       // |C|

  static CharLm init(Direction dir, const CharVocab& vocab, std::size_t d_char,
                     std::size_t d_lm, Rng& rng);

  std::vector<Parameter*> params();
  // Parameters that feed contextual embeddings (excludes the softmax head).
  std::vector<Parameter*> encoder_params();
};

// Tape subgraph of an LM run. hidden[t] is the state after consuming
// character t; logits[t] scores character t+1 (built only on request).
struct LmGraph {
  std::vector<Var> hidden;
  std::vector<Var> logits;
  Var last_h;
  Var last_c;
};

LmGraph lm_graph(Tape& tape, CharLm& lm, std::u32string_view text,
                 bool want_logits, const Array* h0 = nullptr,
                 const Array* c0 = nullptr);

// Value-level scoring: per-position hidden states and next-character
// log-probabilities (log-softmax of the head).
struct LmScore {
  std::vector<Array> hidden;
  std::vector<Array> logprob;
};

LmScore lm_score(const CharLm& lm, std::u32string_view text);

// exp(mean next-character NLL) over the |text|-1 transitions.
double lm_perplexity(const CharLm& lm, std::u32string_view text);

struct StackedEmbedding {
  enum class DropoutScope { kFull, kContextual };

  WordEmbeddingTable word_table;
  CharLm fwd_lm;
  CharLm bwd_lm;
  double dropout_p = 0.5;
  DropoutScope dropout_scope = DropoutScope::kFull;

  std::size_t total_dim() const {
    return word_table.dim + fwd_lm.d_lm + bwd_lm.d_lm;
  }
};

// Character stream of a sentence: boundary, tokens joined by single
// spaces, boundary. Records each token's first/last character index.
struct CharStream {
  std::u32string chars;
  std::vector<std::size_t> token_first;
  std::vector<std::size_t> token_last;
};

CharStream sentence_char_stream(const Sentence& sentence);

// Contextual part of Eq-style stacked embeddings: for each token, the
// forward LM state just after its last character concatenated with the
// backward LM state just before its first character; length 2*d_lm.
std::vector<Array> extract_contextual(const StackedEmbedding& stack,
                                      const Sentence& sentence);

// Full per-token embeddings: [contextual ; word vector]. In training mode
// inverted dropout is applied per the stack's scope; rng is then required.
std::vector<Array> embed_sentence(const StackedEmbedding& stack,
                                  const Sentence& sentence, bool training,
                                  Rng* rng = nullptr);

struct LmPretrainConfig {
  std::size_t d_char = 16;
  std::size_t d_lm = 32;
  double lr = 0.5;
  std::size_t epochs = 5;
  std::size_t bptt_window = 32;
  std::size_t batch = 4;
  std::uint64_t seed = 1;
};

struct LmPretrainResult {
  CharLm forward;
  CharLm backward;
  std::vector<double> forward_epoch_ppl;
  std::vector<double> backward_epoch_ppl;
};

// Trains forward and backward next-character LMs over `text` by truncated
// backpropagation through time on fixed windows, SGD, mean window loss.
// The stream is cut into `batch` chunks trained in lockstep; hidden state
// carries across windows within a chunk and is reset each epoch.
LmPretrainResult pretrain_lm(std::u32string_view text,
                             const LmPretrainConfig& config);

// Checkpoint I/O (binary container + JSON sidecar at path + ".json").
void save_charlm(const CharLm& lm, const std::string& path,
                 const nlohmann::json& metadata);
CharLm load_charlm(const std::string& path);

}  // namespace seqtag
