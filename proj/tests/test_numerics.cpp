#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "seqtag/rng.hpp"
#include "seqtag/tape.hpp"

using namespace seqtag;

TEST_CASE("sigmoid(0) is exactly 0.5") {
  Tape t;
  Var x = t.constant(Array::scalar(0.0));
  CHECK(t.value(t.sigmoid(x))[0] == 0.5);
}

TEST_CASE("logsumexp of [1000, 1000] does not overflow") {
  Tape t;
  Var v = t.constant(Array::from(std::vector<double>{1000.0, 1000.0}));
  const double out = t.scalar_value(t.logsumexp(v));
  CHECK(out == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(std::isfinite(out));
}

TEST_CASE("logsumexp shift invariance") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Array v = Array::vec(5);
    for (std::size_t i = 0; i < 5; ++i) v[i] = rng.uniform(-3.0, 3.0);
    const double c = rng.uniform(-10.0, 10.0);
    Array shifted = v;
    for (std::size_t i = 0; i < 5; ++i) shifted[i] += c;
    Tape t;
    const double a = t.scalar_value(t.logsumexp(t.constant(v)));
    const double b = t.scalar_value(t.logsumexp(t.constant(shifted)));
    CHECK(b == doctest::Approx(a + c).epsilon(1e-12));
  }
}

TEST_CASE("dropout identities") {
  Rng rng(1);
  Array x = Array::from(std::vector<double>{1.0, -2.0, 3.0});
  Tape t;
  Var v = t.constant(x);
  SUBCASE("p = 0 is the identity") {
    Var y = t.dropout(v, 0.0, rng, true);
    CHECK(y.id == v.id);
  }
  SUBCASE("training off is the identity") {
    Var y = t.dropout(v, 0.9, rng, false);
    CHECK(y.id == v.id);
  }
  SUBCASE("p >= 1 is rejected") {
    CHECK_THROWS_AS(t.dropout(v, 1.0, rng, true), ContractViolation);
  }
}

TEST_CASE("dropout is unbiased: mean over many masks within 1%") {
  Rng rng(42);
  const double p = 0.5;
  Array x = Array::from(std::vector<double>{2.0, -4.0});
  Array mean = Array::vec(2);
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    Array d = apply_dropout(x, p, rng);
    for (std::size_t i = 0; i < 2; ++i) mean[i] += d[i] / reps;
  }
  CHECK(mean[0] == doctest::Approx(2.0).epsilon(0.01));
  CHECK(mean[1] == doctest::Approx(-4.0).epsilon(0.01));
}

TEST_CASE("backward through a linear map: d(sum(Wx))/dW = outer(1, x)") {
  Parameter w("w", Array::mat(2, 3));
  w.value.at(0, 0) = 1.0;
  w.value.at(1, 2) = -2.0;
  Array x = Array::from(std::vector<double>{0.5, -1.0, 2.0});
  Tape t;
  Var loss = t.sum(t.matvec(t.param(w), t.constant(x)));
  t.backward(loss);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(w.grad.at(i, j) == doctest::Approx(x[j]).epsilon(1e-15));
    }
  }
}

TEST_CASE("chain rule closed form: d(sigmoid(w)^2)/dw at w=0 is 0.25") {
  Parameter w("w", Array::scalar(0.0));
  Tape t;
  Var s = t.sigmoid(t.param(w));
  Var loss = t.mul(s, s);
  t.backward(loss);
  CHECK(w.grad[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward accumulates across calls") {
  Parameter w("w", Array::scalar(3.0));
  Tape t;
  Var loss = t.sum_of_squares(t.param(w));  // d/dw = 2w = 6
  t.backward(loss);
  t.backward(loss);
  CHECK(w.grad[0] == doctest::Approx(12.0).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  Var v = t.constant(Array::vec(3, 1.0));
  CHECK_THROWS_AS(t.backward(v), ContractViolation);
}

TEST_CASE("shape mismatches are contract violations") {
  Tape t;
  Var a = t.constant(Array::vec(2, 1.0));
  Var b = t.constant(Array::vec(3, 1.0));
  CHECK_THROWS_AS(t.add(a, b), ContractViolation);
  CHECK_THROWS_AS(t.mul(a, b), ContractViolation);
  Var m = t.constant(Array::mat(2, 2, 1.0));
  CHECK_THROWS_AS(t.matvec(m, b), ContractViolation);
}

TEST_CASE("sgd_step arithmetic") {
  Parameter w("w", Array::scalar(1.0));
  w.grad[0] = 0.5;
  Parameter* params[] = {&w};
  sgd_step(params, 0.1);
  CHECK(w.value[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(w.grad[0] == 0.0);

  SUBCASE("zero grad leaves the value unchanged") {
    sgd_step(params, 0.1);
    CHECK(w.value[0] == doctest::Approx(0.95).epsilon(1e-15));
  }
}

TEST_CASE("two accumulated backward passes step twice as far") {
  const auto run = [](int backward_calls) {
    Parameter w("w", Array::scalar(2.0));
    Tape t;
    Var loss = t.sum_of_squares(t.param(w));
    for (int i = 0; i < backward_calls; ++i) t.backward(loss);
    Parameter* params[] = {&w};
    sgd_step(params, 0.1);
    return w.value[0];
  };
  const double once = run(1);
  const double twice = run(2);
  // step(2 accumulated grads) == 2 * step(1): 2 - 0.1*8 vs 2 - 2*(0.1*4)
  CHECK(2.0 - twice == doctest::Approx(2.0 * (2.0 - once)).epsilon(1e-12));
}

TEST_CASE("sgd_step faults on non-finite gradients, naming the parameter") {
  Parameter w("w_bad", Array::scalar(1.0));
  w.grad[0] = std::numeric_limits<double>::quiet_NaN();
  Parameter* params[] = {&w};
  try {
    sgd_step(params, 0.1);
    FAIL("expected TrainingFault");
  } catch (const TrainingFault& e) {
    CHECK(std::string(e.what()).find("w_bad") != std::string::npos);
  }
}

TEST_CASE("gradient_check: quadratic is exact to rounding") {
  Parameter w("w", Array::from(std::vector<double>{1.5, -0.5}));
  Parameter* params[] = {&w};
  const auto loss = [&]() {
    Tape t;
    Var l = t.sum_of_squares(t.param(w));
    t.backward(l);
    return t.scalar_value(l);
  };
  CHECK(gradient_check(loss, params) < 1e-9);
}

TEST_CASE("gradient_check: constant function reports zero error") {
  Parameter w("w", Array::scalar(1.0));
  Parameter* params[] = {&w};
  const auto loss = [&]() {
    Tape t;
    Var l = t.constant(Array::scalar(4.0));
    t.backward(l);
    return t.scalar_value(l);
  };
  CHECK(gradient_check(loss, params) == 0.0);
}

TEST_CASE("every differentiable op passes the gradient check") {
  Rng rng(123);
  Parameter m("m", xavier_uniform(3, 4, rng));
  Parameter v("v", Array::vec(4));
  Parameter u("u", Array::vec(3));
  Parameter a("a", xavier_uniform(4, 2, rng));
  for (std::size_t i = 0; i < 4; ++i) v.value[i] = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < 3; ++i) u.value[i] = rng.uniform(-1.0, 1.0);
  Parameter* params[] = {&m, &v, &u, &a};

  // A composite touching matmul, matvec, add, sub, mul, concat, sigmoid,
  // tanh, logsumexp(+columns), add_to_rows, picks, sum, scale.
  const auto loss = [&]() {
    Tape t;
    Var mv = t.param(m);
    Var vv = t.param(v);
    Var uv = t.param(u);
    Var av = t.param(a);
    Var y = t.matvec(mv, vv);                 // 3
    Var z = t.tanh(t.add(y, uv));             // 3
    Var s = t.sigmoid(t.sub(z, uv));          // 3
    Var prod = t.mul(z, s);                   // 3
    const std::array<Var, 2> parts = {prod, uv};
    Var cat = t.concat(parts);                // 6
    Var mm = t.matmul(mv, av);                // 3x2
    Var rows = t.add_to_rows(mm, prod);       // 3x2
    Var lcols = t.logsumexp_columns(rows);    // 2
    std::vector<Var> terms = {
        t.logsumexp(cat),
        t.pick(lcols, 1),
        t.pick2(rows, 2, 0),
        t.scale(t.sum(t.pick_row(mm, 1)), 0.5),
        t.sum_of_squares(z),
    };
    Var l = t.add_many(terms);
    t.backward(l);
    return t.scalar_value(l);
  };
  CHECK(gradient_check(loss, params) < 1e-4);
}

TEST_CASE("rng stream is identical for identical seeds") {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next() == b.next());
  }
}

TEST_CASE("rng stream is pinned (portability)") {
  // mt19937_64's output is fixed by the standard; the 10000th draw from a
  // default-seeded engine is the published constant.
  std::mt19937_64 ref(std::mt19937_64::default_seed);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = ref();
  CHECK(x == 9981545732273789042ull);
}

TEST_CASE("uniform stays in [0, 1) and shuffle is a permutation") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  std::vector<int> items = {0, 1, 2, 3, 4, 5, 6, 7};
  rng.shuffle(std::span<int>(items));
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>({0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST_CASE("determinism: same seed gives bit-identical dropout graphs") {
  const auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape t;
    Var x = t.constant(Array::vec(64, 1.0));
    Var d = t.dropout(x, 0.5, rng, true);
    return t.value(d);
  };
  const Array a = run(11), b = run(11), c = run(12);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i] == b[i];
    differ = differ || a[i] != c[i];
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("xavier init is within the fan bound and seeded") {
  Rng rng(3);
  Array w = xavier_uniform(10, 20, rng);
  const double limit = std::sqrt(6.0 / 30.0);
  for (double v : w.data()) {
    CHECK(std::abs(v) <= limit);
  }
  Rng rng2(3);
  Array w2 = xavier_uniform(10, 20, rng2);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == w2[i]);
}
