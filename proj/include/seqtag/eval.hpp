#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace seqtag {

// Inclusive token span of one entity mention.
struct EntitySpan {
  std::string entity_type;
  std::size_t start;
  std::size_t end;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

struct Extraction {
  std::vector<EntitySpan> spans;  // disjoint, sorted by start
  std::size_t repairs = 0;        // chain-opening I- tags
};

// Maximal B-t (I-t)* chains. In the default tolerant mode an orphan I-t
// opens a new span and counts as a repair; in strict mode the orphan
// chain yields no span at all.
Extraction extract_entities(std::span<const std::string> tags,
                            bool strict = false);

struct PrfCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  // 0/0 reports 0 with the undefined flag set.
  double precision() const;
  double recall() const;
  double f1() const;
  bool precision_undefined() const { return tp + fp == 0; }
  bool recall_undefined() const { return tp + fn == 0; }
};

struct EvalReport {
  std::map<std::string, PrfCounts> per_type;
  PrfCounts micro;
  double macro_p = 0.0;
  double macro_r = 0.0;
  double macro_f1 = 0.0;
  std::size_t repairs = 0;  // repairs applied to predicted sequences
};

// Exact-match entity evaluation: a predicted span is correct iff type,
// start and end all equal a gold span. Inputs are per-sentence tag
// sequences; gold and pred must be sentence- and length-aligned.
EvalReport evaluate(const std::vector<std::vector<std::string>>& gold,
                    const std::vector<std::vector<std::string>>& pred,
                    bool strict = false);

// `fraction` in [0,1] rendered as a percentage with two decimals, rounding
// half away from zero in decimal (e.g. 0.90165 -> "90.17").
std::string format_percent(double fraction);

std::string report_to_text(const EvalReport& report);
std::string report_to_json(const EvalReport& report);

}  // namespace seqtag
