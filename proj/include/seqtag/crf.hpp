#pragma once

#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "seqtag/array.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/tape.hpp"

namespace seqtag {

// Score assigned to transitions the IOB2 scheme forbids (kept finite so
// the forward recursion stays well-defined).
inline constexpr double kIllegalTransitionScore = -1.0e4;

// Linear-chain CRF parameters. transitions[from][to]; sigma_sq is the
// L2 variance of the regularized conditional log-likelihood, infinity
// meaning no regularization.
struct CrfParams {
  Parameter transitions;
  Parameter start_scores;
  Parameter stop_scores;
  double sigma_sq = std::numeric_limits<double>::infinity();

  CrfParams() = default;
  explicit CrfParams(std::size_t num_tags,
                     double sigma_sq_in = std::numeric_limits<double>::infinity())
      : transitions("crf.transitions", Array::mat(num_tags, num_tags)),
        start_scores("crf.start", Array::vec(num_tags)),
        stop_scores("crf.stop", Array::vec(num_tags)),
        sigma_sq(sigma_sq_in) {}

  std::size_t num_tags() const { return start_scores.value.len(); }
  std::vector<Parameter*> params() {
    return {&transitions, &start_scores, &stop_scores};
  }
};

// Emissions are an N x T matrix: per-token unnormalized tag scores.

// start[y0] + sum_t em[t][y_t] + sum_t trans[y_{t-1}][y_t] + stop[y_last].
double score_sequence(const Array& emissions, const CrfParams& crf,
                      std::span<const std::size_t> tags);

// Log partition over all T^N tag sequences, by the forward recursion.
double forward_logz(const Array& emissions, const CrfParams& crf);

// Best-scoring tag sequence; ties broken toward the lowest tag index at
// every backtrace step.
std::pair<std::vector<std::size_t>, double> viterbi(const Array& emissions,
                                                    const CrfParams& crf);

// Copy of `crf` with every transition into I-t that IOB2 forbids (from O,
// from B-s/I-s with s != t, or at sentence start) set to
// kIllegalTransitionScore.
CrfParams constrain_transitions(const CrfParams& crf, const TagScheme& scheme);

// forward_logz - score_sequence(gold) + sum_k lambda_k^2 / (2 sigma^2),
// the regularization ranging over `all_params` when sigma_sq is finite.
double nll(const Array& emissions, const CrfParams& crf,
           std::span<const std::size_t> gold_tags,
           std::span<Parameter* const> all_params);

// --- tape builders (training path) ---

struct CrfVars {
  Var transitions;
  Var start;
  Var stop;
};

CrfVars bind_crf(Tape& tape, CrfParams& crf);

// `emissions` holds one length-T vector Var per token.
Var crf_logz_graph(Tape& tape, std::span<const Var> emissions,
                   const CrfVars& vars);

Var crf_gold_score_graph(Tape& tape, std::span<const Var> emissions,
                         const CrfVars& vars,
                         std::span<const std::size_t> tags);

// Full regularized loss on the tape. reg_params contributes
// sum ||p||^2 / (2 sigma_sq) when sigma_sq is finite.
Var crf_nll_graph(Tape& tape, std::span<const Var> emissions, CrfParams& crf,
                  std::span<const std::size_t> tags,
                  std::span<Parameter* const> reg_params);

}  // namespace seqtag
