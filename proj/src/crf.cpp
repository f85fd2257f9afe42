#include "seqtag/crf.hpp"

#include <cmath>

namespace seqtag {

namespace {

void check_shapes(const Array& emissions, const CrfParams& crf) {
  SEQTAG_CHECK(emissions.is_matrix() && emissions.rows() >= 1,
               "emissions must be a non-empty N x T matrix");
  SEQTAG_CHECK(emissions.cols() == crf.num_tags(),
               "emissions width " << emissions.cols() << " != tag count "
                                  << crf.num_tags());
}

}  // namespace

double score_sequence(const Array& emissions, const CrfParams& crf,
                      std::span<const std::size_t> tags) {
  check_shapes(emissions, crf);
  SEQTAG_CHECK(tags.size() == emissions.rows(),
               "tag sequence length " << tags.size() << " != emission rows "
                                      << emissions.rows());
  const std::size_t num_tags = crf.num_tags();
  for (std::size_t t : tags) {
    SEQTAG_CHECK(t < num_tags, "tag index " << t << " out of range");
  }
  double score = crf.start_scores.value[tags[0]] + emissions.at(0, tags[0]);
  for (std::size_t t = 1; t < tags.size(); ++t) {
    score = (score + crf.transitions.value.at(tags[t - 1], tags[t])) +
            emissions.at(t, tags[t]);
  }
  score += crf.stop_scores.value[tags.back()];
  return score;
}

double forward_logz(const Array& emissions, const CrfParams& crf) {
  check_shapes(emissions, crf);
  const std::size_t n = emissions.rows();
  const std::size_t T = crf.num_tags();
  std::vector<double> alpha(T), next(T), terms(T);
  for (std::size_t j = 0; j < T; ++j) {
    alpha[j] = crf.start_scores.value[j] + emissions.at(0, j);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < T; ++j) {
      for (std::size_t i = 0; i < T; ++i) {
        terms[i] = alpha[i] + crf.transitions.value.at(i, j);
      }
      next[j] = emissions.at(t, j) + logsumexp_values(terms);
    }
    alpha.swap(next);
  }
  for (std::size_t j = 0; j < T; ++j) alpha[j] += crf.stop_scores.value[j];
  return logsumexp_values(alpha);
}

std::pair<std::vector<std::size_t>, double> viterbi(const Array& emissions,
                                                    const CrfParams& crf) {
  check_shapes(emissions, crf);
  const std::size_t n = emissions.rows();
  const std::size_t T = crf.num_tags();
  std::vector<double> delta(T), next(T);
  std::vector<std::vector<std::size_t>> backptr(n, std::vector<std::size_t>(T, 0));
  for (std::size_t j = 0; j < T; ++j) {
    delta[j] = crf.start_scores.value[j] + emissions.at(0, j);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < T; ++j) {
      std::size_t best_i = 0;
      double best = delta[0] + crf.transitions.value.at(0, j);
      for (std::size_t i = 1; i < T; ++i) {
        const double cand = delta[i] + crf.transitions.value.at(i, j);
        if (cand > best) {  // strict: ties keep the lowest i
          best = cand;
          best_i = i;
        }
      }
      next[j] = best + emissions.at(t, j);
      backptr[t][j] = best_i;
    }
    delta.swap(next);
  }
  std::size_t best_j = 0;
  double best = delta[0] + crf.stop_scores.value[0];
  for (std::size_t j = 1; j < T; ++j) {
    const double cand = delta[j] + crf.stop_scores.value[j];
    if (cand > best) {
      best = cand;
      best_j = j;
    }
  }
  std::vector<std::size_t> tags(n);
  tags[n - 1] = best_j;
  for (std::size_t t = n - 1; t > 0; --t) {
    tags[t - 1] = backptr[t][tags[t]];
  }
  return {std::move(tags), best};
}

CrfParams constrain_transitions(const CrfParams& crf, const TagScheme& scheme) {
  SEQTAG_CHECK(crf.num_tags() == scheme.size(),
               "CRF tag count " << crf.num_tags() << " != scheme inventory "
                                << scheme.size());
  CrfParams out(crf.num_tags(), crf.sigma_sq);
  out.transitions.value = crf.transitions.value;
  out.start_scores.value = crf.start_scores.value;
  out.stop_scores.value = crf.stop_scores.value;
  for (std::size_t to = 0; to < scheme.size(); ++to) {
    if (!scheme.is_inside(to)) continue;
    if (!scheme.legal_start(to)) {
      out.start_scores.value[to] = kIllegalTransitionScore;
    }
    for (std::size_t from = 0; from < scheme.size(); ++from) {
      if (!scheme.legal_transition(from, to)) {
        out.transitions.value.at(from, to) = kIllegalTransitionScore;
      }
    }
  }
  return out;
}

double nll(const Array& emissions, const CrfParams& crf,
           std::span<const std::size_t> gold_tags,
           std::span<Parameter* const> all_params) {
  double loss = forward_logz(emissions, crf) -
                score_sequence(emissions, crf, gold_tags);
  if (std::isfinite(crf.sigma_sq)) {
    double sq = 0.0;
    for (const Parameter* p : all_params) {
      for (double v : p->value.data()) sq += v * v;
    }
    loss += sq / (2.0 * crf.sigma_sq);
  }
  return loss;
}

CrfVars bind_crf(Tape& tape, CrfParams& crf) {
  return CrfVars{tape.param(crf.transitions), tape.param(crf.start_scores),
                 tape.param(crf.stop_scores)};
}

Var crf_logz_graph(Tape& tape, std::span<const Var> emissions,
                   const CrfVars& vars) {
  SEQTAG_CHECK(!emissions.empty(), "empty emission sequence");
  Var alpha = tape.add(vars.start, emissions[0]);
  for (std::size_t t = 1; t < emissions.size(); ++t) {
    Var scores = tape.add_to_rows(vars.transitions, alpha);
    alpha = tape.add(emissions[t], tape.logsumexp_columns(scores));
  }
  return tape.logsumexp(tape.add(alpha, vars.stop));
}

Var crf_gold_score_graph(Tape& tape, std::span<const Var> emissions,
                         const CrfVars& vars,
                         std::span<const std::size_t> tags) {
  SEQTAG_CHECK(tags.size() == emissions.size(),
               "tag sequence length != emission count");
  std::vector<Var> terms;
  terms.reserve(2 * tags.size() + 1);
  terms.push_back(tape.pick(vars.start, tags[0]));
  terms.push_back(tape.pick(emissions[0], tags[0]));
  for (std::size_t t = 1; t < tags.size(); ++t) {
    terms.push_back(tape.pick2(vars.transitions, tags[t - 1], tags[t]));
    terms.push_back(tape.pick(emissions[t], tags[t]));
  }
  terms.push_back(tape.pick(vars.stop, tags.back()));
  return tape.add_many(terms);
}

Var crf_nll_graph(Tape& tape, std::span<const Var> emissions, CrfParams& crf,
                  std::span<const std::size_t> tags,
                  std::span<Parameter* const> reg_params) {
  CrfVars vars = bind_crf(tape, crf);
  Var loss = tape.sub(crf_logz_graph(tape, emissions, vars),
                      crf_gold_score_graph(tape, emissions, vars, tags));
  if (std::isfinite(crf.sigma_sq)) {
    std::vector<Var> sq;
    sq.reserve(reg_params.size());
    for (Parameter* p : reg_params) {
      sq.push_back(tape.sum_of_squares(tape.param(*p)));
    }
    if (!sq.empty()) {
      loss = tape.add(loss, tape.scale(tape.add_many(sq), 0.5 / crf.sigma_sq));
    }
  }
  return loss;
}

}  // namespace seqtag
