#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqtag/common.hpp"

namespace seqtag {

struct Token {
  std::string text;      // no whitespace, kept byte-exact
  std::string gold_tag;  // "O", "B-<type>" or "I-<type>"
};

struct Sentence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> tags() const;
  std::vector<std::string> texts() const;
};

// IOB2 tag inventory over a set of entity types. Index layout is fixed:
// O = 0, then B-t/I-t pairs with types in sorted order.
class TagScheme {
 public:
  TagScheme() = default;
  explicit TagScheme(std::vector<std::string> entity_types);

  static constexpr std::size_t kOutside = 0;

  std::size_t size() const { return tags_.size(); }  // 2K + 1
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& entity_types() const { return types_; }

  std::optional<std::size_t> tag_index(std::string_view tag) const;
  const std::string& tag_name(std::size_t i) const { return tags_.at(i); }

  bool is_begin(std::size_t i) const { return i != 0 && (i - 1) % 2 == 0; }
  bool is_inside(std::size_t i) const { return i != 0 && (i - 1) % 2 == 1; }
  // Index into entity_types(); only meaningful for non-O tags.
  std::size_t type_of(std::size_t i) const { return (i - 1) / 2; }
  std::size_t begin_index(std::size_t type) const { return 1 + 2 * type; }
  std::size_t inside_index(std::size_t type) const { return 2 + 2 * type; }

  // IOB2: tag `to` may follow tag `from`. I-t requires B-t or I-t before it.
  bool legal_transition(std::size_t from, std::size_t to) const;
  bool legal_start(std::size_t to) const;

 private:
  std::vector<std::string> types_;
  std::vector<std::string> tags_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Collect entity types from the tags present in CoNLL `stream` (second pass
// parsing still validates). Malformed tag strings raise SchemeError.
TagScheme infer_scheme(std::istream& stream, std::size_t tag_col_from_end = 0);

struct ParseOptions {
  std::size_t token_col = 0;
  // Tag column; unset means the last column on each line.
  std::optional<std::size_t> tag_col;
  // Field delimiter; unset splits on any run of spaces/tabs.
  std::optional<char> delimiter;
  // Lenient IOB1 handling: a chain-opening I-t becomes B-t with a warning.
  bool repair_iob1 = false;
  // Token-only input (e.g. text to tag); all gold tags read as "O".
  bool has_tags = true;
};

struct ParseResult {
  std::vector<Sentence> sentences;
  std::size_t repairs = 0;
  std::vector<std::string> warnings;
};

ParseResult parse_conll(std::istream& stream, const TagScheme& scheme,
                        const ParseOptions& options = {});

void serialize_conll(const std::vector<Sentence>& sentences, std::ostream& out,
                     char delimiter = '\t');

struct Violation {
  std::size_t index;
  std::string reason;
};

// Empty iff every tag is in the inventory and every I-t follows B-t/I-t.
std::vector<Violation> validate_scheme(const Sentence& sentence,
                                       const TagScheme& scheme);

struct Windowed {
  std::vector<Sentence> sentences;
  std::size_t forced_splits = 0;
  std::vector<std::string> warnings;
};

// Splits sentences longer than max_seq_len at token boundaries, backing off
// so no window bisects an entity span; when one span fills the whole window
// the split is forced at the limit and a warning is recorded. Concatenating
// the windows reproduces the original token sequence.
Windowed window_long_sentences(const std::vector<Sentence>& sentences,
                               std::size_t max_seq_len);

struct CorpusStats {
  std::size_t sentence_count = 0;
  std::size_t token_count = 0;
  std::size_t annotation_count = 0;  // maximal B/I chains
  std::map<std::string, std::size_t> per_type;
};

CorpusStats corpus_stats(const std::vector<Sentence>& sentences);

std::string stats_to_text(const CorpusStats& stats);
std::string stats_to_json(const CorpusStats& stats);

struct Corpus {
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;
  TagScheme scheme;
};

}  // namespace seqtag
