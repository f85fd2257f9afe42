#include "seqtag/tape.hpp"

#include <algorithm>
#include <cmath>

namespace seqtag {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double logsumexp_values(std::span<const double> v) {
  SEQTAG_CHECK(!v.empty(), "logsumexp of empty vector");
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Var Tape::emplace(Array value, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<VarId>(nodes_.size() - 1)};
}

Var Tape::constant(Array v) { return emplace(std::move(v)); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Var v = emplace(p.value);
  nodes_[v.id].parameter = &p;
  param_nodes_[&p] = v.id;
  return v;
}

Var Tape::add(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  SEQTAG_CHECK(av.same_shape(bv), "add: shape mismatch");
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return emplace(std::move(out), [a, b, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    Array& ga = t.grad_ref(a.id);
    Array& gb = t.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  SEQTAG_CHECK(av.same_shape(bv), "sub: shape mismatch");
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return emplace(std::move(out), [a, b, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    Array& ga = t.grad_ref(a.id);
    Array& gb = t.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  SEQTAG_CHECK(av.same_shape(bv), "mul: shape mismatch");
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return emplace(std::move(out), [a, b, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    Array& ga = t.grad_ref(a.id);
    Array& gb = t.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Array out = value(a);
  out *= c;
  return emplace(std::move(out), [a, c, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    Array& ga = t.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  SEQTAG_CHECK(av.is_matrix() && bv.is_matrix() && av.cols() == bv.rows(),
               "matmul: incompatible shapes");
  Array out = Array::mat(av.rows(), bv.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t k = 0; k < av.cols(); ++k) {
      const double aik = av.at(i, k);
      for (std::size_t j = 0; j < bv.cols(); ++j) {
        out.at(i, j) += aik * bv.at(k, j);
      }
    }
  }
  return emplace(std::move(out), [a, b, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    Array& ga = t.grad_ref(a.id);
    Array& gb = t.grad_ref(b.id);
    // dA = g * B^T, dB = A^T * g
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t k = 0; k < av.cols(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < bv.cols(); ++j) {
          s += g.at(i, j) * bv.at(k, j);
        }
        ga.at(i, k) += s;
      }
    }
    for (std::size_t k = 0; k < bv.rows(); ++k) {
      for (std::size_t j = 0; j < bv.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < av.rows(); ++i) {
          s += av.at(i, k) * g.at(i, j);
        }
        gb.at(k, j) += s;
      }
    }
  });
}

Var Tape::matvec(Var m, Var v) {
  const Array& mv = value(m);
  const Array& vv = value(v);
  SEQTAG_CHECK(mv.is_matrix() && vv.is_vector() && mv.cols() == vv.len(),
               "matvec: incompatible shapes");
  Array out = Array::vec(mv.rows());
  for (std::size_t i = 0; i < mv.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < mv.cols(); ++j) s += mv.at(i, j) * vv[j];
    out[i] = s;
  }
  return emplace(std::move(out), [m, v, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    const Array& mv = t.value(m);
    const Array& vv = t.value(v);
    Array& gm = t.grad_ref(m.id);
    Array& gv = t.grad_ref(v.id);
    for (std::size_t i = 0; i < mv.rows(); ++i) {
      const double gi = g[i];
      for (std::size_t j = 0; j < mv.cols(); ++j) {
        gm.at(i, j) += gi * vv[j];
        gv[j] += gi * mv.at(i, j);
      }
    }
  });
}

Var Tape::concat(std::span<const Var> parts) {
  SEQTAG_CHECK(!parts.empty(), "concat: no parts");
  std::size_t total = 0;
  for (Var p : parts) {
    SEQTAG_CHECK(value(p).is_vector(), "concat: parts must be vectors");
    total += value(p).len();
  }
  Array out = Array::vec(total);
  std::size_t off = 0;
  for (Var p : parts) {
    const Array& pv = value(p);
    for (std::size_t i = 0; i < pv.len(); ++i) out[off + i] = pv[i];
    off += pv.len();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return emplace(std::move(out),
                 [owned = std::move(owned), self = VarId(nodes_.size())](Tape& t) {
                   const Array& g = t.grad_ref(self);
                   std::size_t off = 0;
                   for (Var p : owned) {
                     Array& gp = t.grad_ref(p.id);
                     for (std::size_t i = 0; i < gp.size(); ++i) {
                       gp[i] += g[off + i];
                     }
                     off += gp.size();
                   }
                 });
}

Var Tape::sigmoid(Var x) {
  Array out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
  return emplace(std::move(out), [x, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    const Array& y = t.value(Var{self});
    Array& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var Tape::tanh(Var x) {
  Array out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return emplace(std::move(out), [x, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    const Array& y = t.value(Var{self});
    Array& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var Tape::sum(Var x) {
  double s = 0.0;
  for (double v : value(x).data()) s += v;
  return emplace(Array::scalar(s), [x, self = VarId(nodes_.size())](Tape& t) {
    const double g = t.grad_ref(self)[0];
    Array& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var Tape::sum_of_squares(Var x) {
  double s = 0.0;
  for (double v : value(x).data()) s += v * v;
  return emplace(Array::scalar(s), [x, self = VarId(nodes_.size())](Tape& t) {
    const double g = t.grad_ref(self)[0];
    const Array& xv = t.value(x);
    Array& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * xv[i] * g;
  });
}

Var Tape::add_many(std::span<const Var> xs) {
  SEQTAG_CHECK(!xs.empty(), "add_many: no inputs");
  Array out = value(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Array& v = value(xs[k]);
    SEQTAG_CHECK(v.same_shape(out), "add_many: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  std::vector<Var> owned(xs.begin(), xs.end());
  return emplace(std::move(out),
                 [owned = std::move(owned), self = VarId(nodes_.size())](Tape& t) {
                   const Array& g = t.grad_ref(self);
                   for (Var p : owned) {
                     Array& gp = t.grad_ref(p.id);
                     for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
                   }
                 });
}

Var Tape::logsumexp(Var v) {
  const Array& vv = value(v);
  SEQTAG_CHECK(vv.is_vector() && vv.len() > 0, "logsumexp: non-empty vector expected");
  const double out = logsumexp_values(vv.data());
  return emplace(Array::scalar(out), [v, self = VarId(nodes_.size())](Tape& t) {
    const double g = t.grad_ref(self)[0];
    const double out = t.value(Var{self})[0];
    const Array& vv = t.value(v);
    Array& gv = t.grad_ref(v.id);
    for (std::size_t i = 0; i < vv.len(); ++i) {
      gv[i] += g * std::exp(vv[i] - out);
    }
  });
}

Var Tape::logsumexp_columns(Var m) {
  const Array& mv = value(m);
  SEQTAG_CHECK(mv.is_matrix() && mv.rows() > 0, "logsumexp_columns: matrix expected");
  Array out = Array::vec(mv.cols());
  for (std::size_t j = 0; j < mv.cols(); ++j) {
    double mx = mv.at(0, j);
    for (std::size_t i = 1; i < mv.rows(); ++i) mx = std::max(mx, mv.at(i, j));
    double s = 0.0;
    for (std::size_t i = 0; i < mv.rows(); ++i) s += std::exp(mv.at(i, j) - mx);
    out[j] = mx + std::log(s);
  }
  return emplace(std::move(out), [m, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    const Array& out = t.value(Var{self});
    const Array& mv = t.value(m);
    Array& gm = t.grad_ref(m.id);
    for (std::size_t i = 0; i < mv.rows(); ++i) {
      for (std::size_t j = 0; j < mv.cols(); ++j) {
        gm.at(i, j) += g[j] * std::exp(mv.at(i, j) - out[j]);
      }
    }
  });
}

Var Tape::add_to_rows(Var m, Var v) {
  const Array& mv = value(m);
  const Array& vv = value(v);
  SEQTAG_CHECK(mv.is_matrix() && vv.is_vector() && mv.rows() == vv.len(),
               "add_to_rows: incompatible shapes");
  Array out = mv;
  for (std::size_t i = 0; i < mv.rows(); ++i) {
    for (std::size_t j = 0; j < mv.cols(); ++j) out.at(i, j) += vv[i];
  }
  return emplace(std::move(out), [m, v, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    Array& gm = t.grad_ref(m.id);
    Array& gv = t.grad_ref(v.id);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) {
        gm.at(i, j) += g.at(i, j);
        s += g.at(i, j);
      }
      gv[i] += s;
    }
  });
}

Var Tape::pick(Var v, std::size_t i) {
  const Array& vv = value(v);
  SEQTAG_CHECK(vv.is_vector() && i < vv.len(), "pick: index out of range");
  return emplace(Array::scalar(vv[i]), [v, i, self = VarId(nodes_.size())](Tape& t) {
    t.grad_ref(v.id)[i] += t.grad_ref(self)[0];
  });
}

Var Tape::pick2(Var m, std::size_t i, std::size_t j) {
  const Array& mv = value(m);
  SEQTAG_CHECK(mv.is_matrix() && i < mv.rows() && j < mv.cols(),
               "pick2: index out of range");
  return emplace(Array::scalar(mv.at(i, j)),
                 [m, i, j, self = VarId(nodes_.size())](Tape& t) {
                   t.grad_ref(m.id).at(i, j) += t.grad_ref(self)[0];
                 });
}

Var Tape::pick_row(Var m, std::size_t i) {
  const Array& mv = value(m);
  SEQTAG_CHECK(mv.is_matrix() && i < mv.rows(), "pick_row: index out of range");
  Array out = Array::vec(mv.cols());
  for (std::size_t j = 0; j < mv.cols(); ++j) out[j] = mv.at(i, j);
  return emplace(std::move(out), [m, i, self = VarId(nodes_.size())](Tape& t) {
    const Array& g = t.grad_ref(self);
    Array& gm = t.grad_ref(m.id);
    for (std::size_t j = 0; j < g.len(); ++j) gm.at(i, j) += g[j];
  });
}

Var Tape::dropout(Var x, double p, Rng& rng, bool training) {
  SEQTAG_CHECK(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const Array& xv = value(x);
  const double keep_scale = 1.0 / (1.0 - p);
  Array mask = zeros_like(xv);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
  }
  Array out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return emplace(std::move(out),
                 [x, mask = std::move(mask), self = VarId(nodes_.size())](Tape& t) {
                   const Array& g = t.grad_ref(self);
                   Array& gx = t.grad_ref(x.id);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     gx[i] += g[i] * mask[i];
                   }
                 });
}

double Tape::scalar_value(Var v) const {
  SEQTAG_CHECK(value(v).is_scalar(), "scalar_value: node is not scalar");
  return value(v)[0];
}

void Tape::backward(Var loss, double seed) {
  SEQTAG_CHECK(loss.valid() && loss.id < static_cast<VarId>(nodes_.size()),
               "backward: invalid var");
  SEQTAG_CHECK(nodes_[loss.id].value.is_scalar(), "backward: loss must be scalar");
  for (VarId id = 0; id <= loss.id; ++id) {
    nodes_[id].grad = zeros_like(nodes_[id].value);
  }
  nodes_[loss.id].grad[0] = seed;
  for (VarId id = loss.id; id >= 0; --id) {
    if (nodes_[id].back) nodes_[id].back(*this);
  }
  for (VarId id = 0; id <= loss.id; ++id) {
    if (nodes_[id].parameter) nodes_[id].parameter->grad += nodes_[id].grad;
  }
}

void sgd_step(std::span<Parameter* const> params, double lr) {
  SEQTAG_CHECK(lr > 0.0, "sgd_step: lr must be positive");
  for (Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw TrainingFault("non-finite gradient for parameter '" + p->name + "'");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] -= lr * p->grad[i];
    }
    p->zero_grad();
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

double gradient_check(const std::function<double()>& loss_fn,
                      std::span<Parameter* const> params, double eps,
                      std::size_t max_coords, Rng* rng) {
  zero_grads(params);
  loss_fn();
  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  std::size_t total = 0;
  for (Parameter* p : params) total += p->value.size();

  // (param index, coordinate) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  if (total <= max_coords) {
    coords.reserve(total);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      for (std::size_t i = 0; i < params[pi]->value.size(); ++i) {
        coords.emplace_back(pi, i);
      }
    }
  } else {
    coords.reserve(max_coords);
    for (std::size_t k = 0; k < max_coords; ++k) {
      std::size_t flat = rng ? static_cast<std::size_t>(rng->index(total))
                             : (k * total) / max_coords;
      std::size_t pi = 0;
      while (flat >= params[pi]->value.size()) {
        flat -= params[pi]->value.size();
        ++pi;
      }
      coords.emplace_back(pi, flat);
    }
  }

  const auto eval = [&]() {
    zero_grads(params);
    return loss_fn();
  };

  double max_rel = 0.0;
  for (auto [pi, i] : coords) {
    double& theta = params[pi]->value[i];
    const double saved = theta;
    theta = saved + eps;
    const double lp = eval();
    theta = saved - eps;
    const double lm = eval();
    theta = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double a = analytic[pi][i];
    const double rel =
        std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  zero_grads(params);
  return max_rel;
}

Array xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Array a = Array::mat(rows, cols);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-limit, limit);
  return a;
}

Array apply_dropout(const Array& x, double p, Rng& rng) {
  SEQTAG_CHECK(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  Array out = x;
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = rng.bernoulli(p) ? 0.0 : out[i] * keep_scale;
  }
  return out;
}

}  // namespace seqtag
