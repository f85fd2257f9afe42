// Test-only reference implementations, deliberately independent of the
// library's vectorized/tape code paths: plain scalar arithmetic only.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Score of one tag path, summed term by term.
inline double path_score(const std::vector<std::vector<double>>& emissions,
                         const std::vector<std::vector<double>>& transitions,
                         const std::vector<double>& start,
                         const std::vector<double>& stop,
                         const std::vector<std::size_t>& tags) {
  double s = start[tags[0]] + emissions[0][tags[0]];
  for (std::size_t t = 1; t < tags.size(); ++t) {
    s += transitions[tags[t - 1]][tags[t]] + emissions[t][tags[t]];
  }
  return s + stop[tags.back()];
}

// Enumerates all T^N tag sequences. Returns log of the summed exponentials
// (log partition), the best score, and the lexicographically-first argmax.
struct Enumeration {
  double log_z;
  double best_score;
  std::vector<std::size_t> best_tags;
  std::vector<double> all_scores;
};

inline Enumeration enumerate_sequences(
    const std::vector<std::vector<double>>& emissions,
    const std::vector<std::vector<double>>& transitions,
    const std::vector<double>& start, const std::vector<double>& stop) {
  const std::size_t n = emissions.size();
  const std::size_t T = start.size();
  Enumeration out;
  out.best_score = -1e300;
  std::vector<std::size_t> tags(n, 0);
  while (true) {
    const double s = path_score(emissions, transitions, start, stop, tags);
    out.all_scores.push_back(s);
    if (s > out.best_score) {  // strict: first maximum wins
      out.best_score = s;
      out.best_tags = tags;
    }
    // next sequence in lexicographic order (last index varies fastest)
    bool done = false;
    std::size_t k = n;
    while (true) {
      if (k == 0) {
        done = true;
        break;
      }
      --k;
      if (++tags[k] < T) break;
      tags[k] = 0;
    }
    if (done) break;
  }
  double m = out.all_scores[0];
  for (double s : out.all_scores) m = std::max(m, s);
  double sum = 0.0;
  for (double s : out.all_scores) sum += std::exp(s - m);
  out.log_z = m + std::log(sum);
  return out;
}

// Scalar transcription of the gated-recurrence equations: sigmoid gates on
// W [h, x] + b, candidate tanh, cell blend, tanh output gating.
struct ScalarLstmOut {
  std::vector<double> h;
  std::vector<double> c;
};

inline ScalarLstmOut scalar_lstm_step(
    const std::vector<std::vector<double>>& w_f,
    const std::vector<std::vector<double>>& w_i,
    const std::vector<std::vector<double>>& w_c,
    const std::vector<std::vector<double>>& w_o,
    const std::vector<double>& b_f, const std::vector<double>& b_i,
    const std::vector<double>& b_c, const std::vector<double>& b_o,
    const std::vector<double>& x, const std::vector<double>& h_prev,
    const std::vector<double>& c_prev) {
  const std::size_t hidden = h_prev.size();
  std::vector<double> hx;
  hx.insert(hx.end(), h_prev.begin(), h_prev.end());
  hx.insert(hx.end(), x.begin(), x.end());
  const auto affine = [&](const std::vector<std::vector<double>>& w,
                          const std::vector<double>& b, std::size_t row) {
    double s = b[row];
    for (std::size_t j = 0; j < hx.size(); ++j) s += w[row][j] * hx[j];
    return s;
  };
  const auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  ScalarLstmOut out;
  out.h.resize(hidden);
  out.c.resize(hidden);
  for (std::size_t r = 0; r < hidden; ++r) {
    const double f = sigm(affine(w_f, b_f, r));
    const double i = sigm(affine(w_i, b_i, r));
    const double c_tilde = std::tanh(affine(w_c, b_c, r));
    const double c = f * c_prev[r] + i * c_tilde;
    const double o = sigm(affine(w_o, b_o, r));
    out.c[r] = c;
    out.h[r] = o * std::tanh(c);
  }
  return out;
}

// Decimal rounding oracle: percentage with two decimals, half away from
// zero, computed over the decimal numerator/denominator (exact integers).
inline std::string percent_of_ratio(long long num, long long den) {
  // round(num/den * 100, 2) == round(num * 10000 / den) / 100
  const long long scaled = num * 10000;
  long long q = scaled / den;
  const long long r = scaled % den;
  if (2 * r >= den) ++q;
  std::string digits = std::to_string(q);
  while (digits.size() < 3) digits.insert(digits.begin(), '0');
  return digits.substr(0, digits.size() - 2) + "." +
         digits.substr(digits.size() - 2);
}

}  // namespace oracle
