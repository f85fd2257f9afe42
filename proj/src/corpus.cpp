#include "seqtag/corpus.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace seqtag {

namespace {

std::vector<std::string> split_fields(const std::string& line,
                                      std::optional<char> delimiter) {
  std::vector<std::string> fields;
  if (delimiter) {
    std::string cur;
    for (char c : line) {
      if (c == *delimiter) {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
  } else {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
      if (i > start) fields.push_back(line.substr(start, i - start));
    }
  }
  return fields;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

// "B-Disease" -> ('B', "Disease"); "O" -> ('O', ""). Anything else fails.
bool split_tag_label(std::string_view tag, char* kind, std::string_view* type) {
  if (tag == "O") {
    *kind = 'O';
    *type = {};
    return true;
  }
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    *kind = tag[0];
    *type = tag.substr(2);
    return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> Sentence::tags() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const Token& t : tokens) out.push_back(t.gold_tag);
  return out;
}

std::vector<std::string> Sentence::texts() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const Token& t : tokens) out.push_back(t.text);
  return out;
}

TagScheme::TagScheme(std::vector<std::string> entity_types) {
  std::sort(entity_types.begin(), entity_types.end());
  entity_types.erase(std::unique(entity_types.begin(), entity_types.end()),
                     entity_types.end());
  types_ = std::move(entity_types);
  tags_.push_back("O");
  for (const std::string& t : types_) {
    SEQTAG_CHECK(!t.empty(), "entity type name must be non-empty");
    tags_.push_back("B-" + t);
    tags_.push_back("I-" + t);
  }
  for (std::size_t i = 0; i < tags_.size(); ++i) index_[tags_[i]] = i;
}

std::optional<std::size_t> TagScheme::tag_index(std::string_view tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool TagScheme::legal_transition(std::size_t from, std::size_t to) const {
  if (!is_inside(to)) return true;
  return from != kOutside && type_of(from) == type_of(to);
}

bool TagScheme::legal_start(std::size_t to) const { return !is_inside(to); }

TagScheme infer_scheme(std::istream& stream, std::size_t tag_col_from_end) {
  std::set<std::string> types;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line) || line.rfind("-DOCSTART-", 0) == 0) continue;
    std::vector<std::string> fields = split_fields(line, std::nullopt);
    if (fields.size() < 2 + tag_col_from_end) {
      throw ParseError("expected at least " +
                           std::to_string(2 + tag_col_from_end) + " columns",
                       line_no);
    }
    const std::string& tag = fields[fields.size() - 1 - tag_col_from_end];
    char kind;
    std::string_view type;
    if (!split_tag_label(tag, &kind, &type)) {
      throw SchemeError("malformed tag '" + tag + "'", line_no);
    }
    if (kind != 'O') types.emplace(type);
  }
  return TagScheme(std::vector<std::string>(types.begin(), types.end()));
}

ParseResult parse_conll(std::istream& stream, const TagScheme& scheme,
                        const ParseOptions& options) {
  ParseResult result;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;

  const auto flush = [&]() {
    if (!current.tokens.empty()) {
      result.sentences.push_back(std::move(current));
      current = Sentence{};
    }
  };

  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) {
      flush();
      continue;
    }
    if (line.rfind("-DOCSTART-", 0) == 0) continue;

    std::vector<std::string> fields = split_fields(line, options.delimiter);
    std::size_t min_fields = options.token_col + 1;
    std::size_t tag_col = 0;
    if (options.has_tags) {
      if (options.tag_col) {
        tag_col = *options.tag_col;
        min_fields = std::max(min_fields, tag_col + 1);
      } else {
        // Tag defaults to the last column; a line must then carry at
        // least a token and a tag.
        min_fields = std::max<std::size_t>(min_fields, 2);
      }
    }
    if (fields.size() < min_fields) {
      throw ParseError("expected at least " + std::to_string(min_fields) +
                           " columns, got " + std::to_string(fields.size()),
                       line_no);
    }
    if (options.has_tags && !options.tag_col) tag_col = fields.size() - 1;

    Token token;
    token.text = fields[options.token_col];
    if (token.text.empty()) {
      throw ParseError("empty token text", line_no);
    }

    if (options.has_tags) {
      const std::string& raw = fields[tag_col];
      auto idx = scheme.tag_index(raw);
      if (!idx) {
        throw SchemeError("tag '" + raw + "' not in scheme", line_no);
      }
      std::size_t tag = *idx;
      if (scheme.is_inside(tag)) {
        bool chain_open = false;
        if (!current.tokens.empty()) {
          auto prev = scheme.tag_index(current.tokens.back().gold_tag);
          chain_open = prev && scheme.legal_transition(*prev, tag);
        }
        if (!chain_open && options.repair_iob1) {
          tag = scheme.begin_index(scheme.type_of(tag));
          ++result.repairs;
          result.warnings.push_back("line " + std::to_string(line_no) +
                                    ": chain-opening " + raw +
                                    " converted to " + scheme.tag_name(tag));
        }
      }
      token.gold_tag = scheme.tag_name(tag);
    } else {
      token.gold_tag = "O";
    }
    current.tokens.push_back(std::move(token));
  }
  flush();
  return result;
}

void serialize_conll(const std::vector<Sentence>& sentences, std::ostream& out,
                     char delimiter) {
  for (const Sentence& s : sentences) {
    for (const Token& t : s.tokens) {
      out << t.text << delimiter << t.gold_tag << '\n';
    }
    out << '\n';
  }
}

std::vector<Violation> validate_scheme(const Sentence& sentence,
                                       const TagScheme& scheme) {
  std::vector<Violation> violations;
  std::size_t prev = TagScheme::kOutside;
  bool has_prev = false;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    const std::string& tag = sentence.tokens[i].gold_tag;
    auto idx = scheme.tag_index(tag);
    if (!idx) {
      violations.push_back({i, "tag '" + tag + "' not in scheme"});
      has_prev = false;
      continue;
    }
    if (scheme.is_inside(*idx)) {
      bool ok = has_prev ? scheme.legal_transition(prev, *idx)
                         : scheme.legal_start(*idx);
      if (!ok) {
        violations.push_back(
            {i, "'" + tag + "' does not continue a '" +
                    scheme.tag_name(scheme.begin_index(scheme.type_of(*idx))) +
                    "' chain"});
      }
    }
    prev = *idx;
    has_prev = true;
  }
  return violations;
}

Windowed window_long_sentences(const std::vector<Sentence>& sentences,
                               std::size_t max_seq_len) {
  SEQTAG_CHECK(max_seq_len >= 1, "max_seq_len must be >= 1");
  Windowed out;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const Sentence& s = sentences[si];
    if (s.tokens.size() <= max_seq_len) {
      out.sentences.push_back(s);
      continue;
    }
    std::size_t pos = 0;
    while (pos < s.tokens.size()) {
      std::size_t remaining = s.tokens.size() - pos;
      if (remaining <= max_seq_len) {
        Sentence w;
        w.tokens.assign(s.tokens.begin() + pos, s.tokens.end());
        out.sentences.push_back(std::move(w));
        break;
      }
      // Candidate cut after max_seq_len tokens; back off while the first
      // token of the next window would continue an entity chain.
      std::size_t cut = pos + max_seq_len;
      while (cut > pos && s.tokens[cut].gold_tag.rfind("I-", 0) == 0) --cut;
      if (cut == pos) {
        cut = pos + max_seq_len;
        ++out.forced_splits;
        out.warnings.push_back(
            "sentence " + std::to_string(si) + ": entity span longer than " +
            std::to_string(max_seq_len) + " tokens split at the limit");
      }
      Sentence w;
      w.tokens.assign(s.tokens.begin() + pos, s.tokens.begin() + cut);
      out.sentences.push_back(std::move(w));
      pos = cut;
    }
  }
  return out;
}

CorpusStats corpus_stats(const std::vector<Sentence>& sentences) {
  CorpusStats stats;
  stats.sentence_count = sentences.size();
  for (const Sentence& s : sentences) {
    stats.token_count += s.tokens.size();
    std::string_view open_type;  // type of the chain currently open
    bool open = false;
    for (const Token& t : s.tokens) {
      char kind;
      std::string_view type;
      if (!split_tag_label(t.gold_tag, &kind, &type) || kind == 'O') {
        open = false;
        continue;
      }
      // B-t always opens a chain; an orphan I-t opens one as well, so
      // stats stay meaningful on unvalidated data.
      if (kind == 'B' || !open || open_type != type) {
        ++stats.annotation_count;
        ++stats.per_type[std::string(type)];
        open = true;
        open_type = type;
      }
    }
  }
  return stats;
}

std::string stats_to_text(const CorpusStats& stats) {
  std::ostringstream out;
  out << "sentences   " << stats.sentence_count << '\n';
  out << "tokens      " << stats.token_count << '\n';
  out << "annotations " << stats.annotation_count << '\n';
  for (const auto& [type, count] : stats.per_type) {
    out << "  " << type << " " << count << '\n';
  }
  return out.str();
}

std::string stats_to_json(const CorpusStats& stats) {
  nlohmann::json j;
  j["sentences"] = stats.sentence_count;
  j["tokens"] = stats.token_count;
  j["annotations"] = stats.annotation_count;
  j["per_type"] = nlohmann::json::object();
  for (const auto& [type, count] : stats.per_type) {
    j["per_type"][type] = count;
  }
  return j.dump(2);
}

}  // namespace seqtag
