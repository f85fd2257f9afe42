#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqtag/tape.hpp"

namespace seqtag {

// One LSTM cell: four gate matrices of shape h x (h + d_in) acting on the
// concatenation [h_{t-1}, x_t], with per-gate biases.
struct LstmCellParams {
  Parameter w_f, w_i, w_c, w_o;  // h x (h + d_in)
  Parameter b_f, b_i, b_c, b_o;  // h
  std::size_t hidden = 0;
  std::size_t input = 0;

  LstmCellParams() = default;
  // Glorot-uniform weights, zero biases.
  LstmCellParams(const std::string& prefix, std::size_t hidden_size,
                 std::size_t input_size, Rng& rng);

  std::vector<Parameter*> params() {
    return {&w_f, &w_i, &w_c, &w_o, &b_f, &b_i, &b_c, &b_o};
  }
};

struct LstmCellVars {
  Var w_f, w_i, w_c, w_o, b_f, b_i, b_c, b_o;
};

LstmCellVars bind_cell(Tape& tape, LstmCellParams& cell);

// One step of the gated recurrence:
//   f = sigmoid(W_f [h,x] + b_f)      i = sigmoid(W_i [h,x] + b_i)
//   c~ = tanh(W_c [h,x] + b_c)        C = f*C_prev + i*c~
//   o = sigmoid(W_o [h,x] + b_o)      h = o * tanh(C)
// Returns (h, C).
std::pair<Var, Var> lstm_step(Tape& tape, const LstmCellVars& cell, Var x,
                              Var h_prev, Var c_prev);

}  // namespace seqtag
