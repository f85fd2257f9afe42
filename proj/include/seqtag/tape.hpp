#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqtag/array.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

// A trainable weight. Gradients accumulate into `grad` across backward
// passes and are cleared by sgd_step (or zero_grad).
struct Parameter {
  std::string name;
  Array value;
  Array grad;

  Parameter() = default;
  Parameter(std::string n, Array v)
      : name(std::move(n)), value(std::move(v)), grad(zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

using VarId = std::int32_t;

// Handle into a Tape.
struct Var {
  VarId id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode computation graph. Nodes are appended in evaluation order,
// so walking ids backwards is a topological order for the backward sweep.
// One tape per loss evaluation; tapes are single-threaded.
class Tape {
 public:
  // Leaf holding a constant (no gradient of interest).
  Var constant(Array v);
  // Leaf bound to a Parameter; backward() adds into p.grad. The same
  // Parameter maps to the same node within one tape.
  Var param(Parameter& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var matmul(Var a, Var b);
  Var matvec(Var m, Var v);
  Var concat(std::span<const Var> parts);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var sum(Var x);             // all elements -> scalar
  Var sum_of_squares(Var x);  // all elements -> scalar
  Var add_many(std::span<const Var> xs);
  Var logsumexp(Var v);          // vector -> scalar, max-shifted
  Var logsumexp_columns(Var m);  // matrix -> vector: out[j] = lse_i m[i][j]
  Var add_to_rows(Var m, Var v);  // out[i][j] = m[i][j] + v[i]
  Var pick(Var v, std::size_t i);                 // vector -> scalar
  Var pick2(Var m, std::size_t i, std::size_t j); // matrix -> scalar
  Var pick_row(Var m, std::size_t i);             // matrix -> vector
  // Inverted dropout: kept entries scaled by 1/(1-p). Identity when not
  // training or p == 0. Mask is drawn at construction time.
  Var dropout(Var x, double p, Rng& rng, bool training);

  // Seeds d(loss)/d(loss) = seed and accumulates into every reachable
  // Parameter's grad. Repeated calls accumulate. `loss` must be scalar.
  void backward(Var loss, double seed = 1.0);

  const Array& value(Var v) const { return nodes_[v.id].value; }
  const Array& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar_value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    Array grad;
    Parameter* parameter = nullptr;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Var emplace(Array value, std::function<void(Tape&)> back = {});
  Array& grad_ref(VarId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, VarId> param_nodes_;
};

// value <- value - lr * grad, then grad <- 0. Throws TrainingFault naming
// the parameter if its gradient is non-finite.
void sgd_step(std::span<Parameter* const> params, double lr);

void zero_grads(std::span<Parameter* const> params);

// Central-difference check. `loss_fn` must rebuild the graph from current
// parameter values, run backward into the parameter grads, and return the
// loss. Returns the max over sampled coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// At most `max_coords` coordinates are tested, sampled with `rng` when the
// total exceeds the budget (all coordinates otherwise).
double gradient_check(const std::function<double()>& loss_fn,
                      std::span<Parameter* const> params, double eps = 1e-5,
                      std::size_t max_coords = SIZE_MAX, Rng* rng = nullptr);

// Weight init: Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(...)). Biases
// are zero-initialized by constructing plain zero arrays.
Array xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Stable log(sum(exp(v))) over raw values; shared by tape and plain code.
double logsumexp_values(std::span<const double> v);

// Non-tape inverted dropout, for eval-path embedding code.
Array apply_dropout(const Array& x, double p, Rng& rng);

}  // namespace seqtag
