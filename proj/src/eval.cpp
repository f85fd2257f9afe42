#include "seqtag/eval.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

#include "seqtag/common.hpp"

namespace seqtag {

Extraction extract_entities(std::span<const std::string> tags, bool strict) {
  Extraction out;
  std::string open_type;
  std::size_t open_start = 0;
  bool open = false;
  bool open_repaired = false;

  const auto close = [&](std::size_t end) {
    if (!open) return;
    if (!(strict && open_repaired)) {
      out.spans.push_back({open_type, open_start, end});
    }
    open = false;
  };

  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    const bool is_b = tag.rfind("B-", 0) == 0;
    const bool is_i = tag.rfind("I-", 0) == 0;
    if (!is_b && !is_i) {  // "O" or anything unrecognized
      close(i - 1);
      continue;
    }
    const std::string type = tag.substr(2);
    if (is_b) {
      close(i - 1);
      open = true;
      open_type = type;
      open_start = i;
      open_repaired = false;
    } else if (open && open_type == type) {
      // continuation
    } else {
      // Orphan I-t: opens a new span in tolerant mode.
      close(i - 1);
      open = true;
      open_type = type;
      open_start = i;
      open_repaired = true;
      ++out.repairs;
    }
  }
  close(tags.empty() ? 0 : tags.size() - 1);
  return out;
}

double PrfCounts::precision() const {
  return precision_undefined() ? 0.0
                               : static_cast<double>(tp) /
                                     static_cast<double>(tp + fp);
}

double PrfCounts::recall() const {
  return recall_undefined() ? 0.0
                            : static_cast<double>(tp) /
                                  static_cast<double>(tp + fn);
}

double PrfCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

EvalReport evaluate(const std::vector<std::vector<std::string>>& gold,
                    const std::vector<std::vector<std::string>>& pred,
                    bool strict) {
  SEQTAG_CHECK(gold.size() == pred.size(),
               "gold has " << gold.size() << " sentences, pred has "
                           << pred.size());
  EvalReport report;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    SEQTAG_CHECK(gold[s].size() == pred[s].size(),
                 "sentence " << s << ": gold length " << gold[s].size()
                             << " != pred length " << pred[s].size());
    const Extraction g = extract_entities(gold[s], strict);
    const Extraction p = extract_entities(pred[s], strict);
    report.repairs += p.repairs;
    std::set<EntitySpan> gold_set(g.spans.begin(), g.spans.end());
    for (const EntitySpan& span : p.spans) {
      PrfCounts& c = report.per_type[span.entity_type];
      if (gold_set.erase(span)) {
        ++c.tp;
        ++report.micro.tp;
      } else {
        ++c.fp;
        ++report.micro.fp;
      }
    }
    for (const EntitySpan& span : gold_set) {
      ++report.per_type[span.entity_type].fn;
      ++report.micro.fn;
    }
  }
  if (!report.per_type.empty()) {
    for (const auto& [type, c] : report.per_type) {
      report.macro_p += c.precision();
      report.macro_r += c.recall();
      report.macro_f1 += c.f1();
    }
    const double n = static_cast<double>(report.per_type.size());
    report.macro_p /= n;
    report.macro_r /= n;
    report.macro_f1 /= n;
  }
  return report;
}

namespace {

// Decimal digit string with `point` digits before the decimal point.
struct DecimalDigits {
  std::string digits;
  long point;
};

// Exact decimal form of the shortest round-trip representation of v.
DecimalDigits decimal_of(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  SEQTAG_CHECK(ec == std::errc(), "to_chars failed");
  std::string_view s(buf, static_cast<std::size_t>(ptr - buf));

  DecimalDigits d;
  long exp10 = 0;
  if (auto e = s.find_first_of("eE"); e != std::string_view::npos) {
    exp10 = std::stol(std::string(s.substr(e + 1)));
    s = s.substr(0, e);
  }
  std::string int_part, frac_part;
  if (auto dot = s.find('.'); dot != std::string_view::npos) {
    int_part = std::string(s.substr(0, dot));
    frac_part = std::string(s.substr(dot + 1));
  } else {
    int_part = std::string(s);
  }
  d.digits = int_part + frac_part;
  d.point = static_cast<long>(int_part.size()) + exp10;
  return d;
}

}  // namespace

std::string format_percent(double fraction) {
  SEQTAG_CHECK(fraction >= 0.0, "format_percent expects a non-negative fraction");
  // Work on the decimal string so e.g. 0.90165 (stored slightly below the
  // decimal value) still rounds as the decimal 90.165 -> 90.17.
  DecimalDigits d = decimal_of(fraction);
  d.point += 2;  // x100
  if (d.point <= 0) {
    d.digits.insert(0, static_cast<std::size_t>(1 - d.point), '0');
    d.point = 1;
  }
  const std::size_t keep = static_cast<std::size_t>(d.point) + 2;
  while (d.digits.size() < keep + 1) d.digits.push_back('0');
  const bool round_up = d.digits[keep] >= '5';
  std::string kept = d.digits.substr(0, keep);
  if (round_up) {
    std::size_t i = kept.size();
    while (i > 0) {
      --i;
      if (kept[i] != '9') {
        ++kept[i];
        break;
      }
      kept[i] = '0';
      if (i == 0) {
        kept.insert(kept.begin(), '1');
        ++d.point;
      }
    }
  }
  std::string out = kept.substr(0, static_cast<std::size_t>(d.point)) + "." +
                    kept.substr(static_cast<std::size_t>(d.point));
  // Trim leading zeros but keep one integer digit.
  std::size_t nz = 0;
  while (nz + 1 < static_cast<std::size_t>(d.point) && out[nz] == '0') ++nz;
  return out.substr(nz);
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream out;
  bool any_undefined = false;
  const auto mark = [&](const PrfCounts& c, bool which) {
    const bool undef = which ? c.precision_undefined() : c.recall_undefined();
    any_undefined |= undef;
    return undef ? "*" : "";
  };
  out << std::left << std::setw(16) << "type" << std::right << std::setw(8)
      << "P" << std::setw(9) << "R" << std::setw(9) << "F1" << std::setw(7)
      << "TP" << std::setw(6) << "FP" << std::setw(6) << "FN" << '\n';
  const auto row = [&](const std::string& name, const PrfCounts& c) {
    out << std::left << std::setw(16) << name << std::right << std::setw(8)
        << (format_percent(c.precision()) + mark(c, true)) << std::setw(9)
        << (format_percent(c.recall()) + mark(c, false)) << std::setw(9)
        << format_percent(c.f1()) << std::setw(7) << c.tp << std::setw(6)
        << c.fp << std::setw(6) << c.fn << '\n';
  };
  for (const auto& [type, counts] : report.per_type) row(type, counts);
  row("micro", report.micro);
  out << std::left << std::setw(16) << "macro" << std::right << std::setw(8)
      << format_percent(report.macro_p) << std::setw(9)
      << format_percent(report.macro_r) << std::setw(9)
      << format_percent(report.macro_f1) << '\n';
  if (report.repairs > 0) {
    out << "repaired chain-opening I- tags in predictions: " << report.repairs
        << '\n';
  }
  if (any_undefined) {
    out << "* undefined (0/0), reported as 0.00\n";
  }
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  const auto counts = [](const PrfCounts& c) {
    return nlohmann::json{{"tp", c.tp},          {"fp", c.fp},
                          {"fn", c.fn},          {"p", c.precision()},
                          {"r", c.recall()},     {"f1", c.f1()}};
  };
  j["types"] = nlohmann::json::object();
  for (const auto& [type, c] : report.per_type) j["types"][type] = counts(c);
  j["micro"] = counts(report.micro);
  j["macro"] = {{"p", report.macro_p}, {"r", report.macro_r},
                {"f1", report.macro_f1}};
  j["repairs"] = report.repairs;
  return j.dump(2);
}

}  // namespace seqtag
