#include "seqtag/lstm.hpp"

#include <array>

namespace seqtag {

LstmCellParams::LstmCellParams(const std::string& prefix, std::size_t hidden_size,
                               std::size_t input_size, Rng& rng)
    : hidden(hidden_size), input(input_size) {
  const std::size_t in = hidden_size + input_size;
  w_f = Parameter(prefix + ".w_f", xavier_uniform(hidden_size, in, rng));
  w_i = Parameter(prefix + ".w_i", xavier_uniform(hidden_size, in, rng));
  w_c = Parameter(prefix + ".w_c", xavier_uniform(hidden_size, in, rng));
  w_o = Parameter(prefix + ".w_o", xavier_uniform(hidden_size, in, rng));
  b_f = Parameter(prefix + ".b_f", Array::vec(hidden_size));
  b_i = Parameter(prefix + ".b_i", Array::vec(hidden_size));
  b_c = Parameter(prefix + ".b_c", Array::vec(hidden_size));
  b_o = Parameter(prefix + ".b_o", Array::vec(hidden_size));
}

LstmCellVars bind_cell(Tape& tape, LstmCellParams& cell) {
  return LstmCellVars{tape.param(cell.w_f), tape.param(cell.w_i),
                      tape.param(cell.w_c), tape.param(cell.w_o),
                      tape.param(cell.b_f), tape.param(cell.b_i),
                      tape.param(cell.b_c), tape.param(cell.b_o)};
}

std::pair<Var, Var> lstm_step(Tape& tape, const LstmCellVars& cell, Var x,
                              Var h_prev, Var c_prev) {
  const std::array<Var, 2> hx_parts = {h_prev, x};
  Var hx = tape.concat(hx_parts);
  Var f = tape.sigmoid(tape.add(tape.matvec(cell.w_f, hx), cell.b_f));
  Var i = tape.sigmoid(tape.add(tape.matvec(cell.w_i, hx), cell.b_i));
  Var c_tilde = tape.tanh(tape.add(tape.matvec(cell.w_c, hx), cell.b_c));
  Var c = tape.add(tape.mul(f, c_prev), tape.mul(i, c_tilde));
  Var o = tape.sigmoid(tape.add(tape.matvec(cell.w_o, hx), cell.b_o));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

}  // namespace seqtag
