#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "langsamp/adamw.hpp"
#include "langsamp/autograd.hpp"
#include "langsamp/grad_check.hpp"
#include "langsamp/kernels.hpp"
#include "langsamp/types.hpp"

using namespace langsamp;

namespace {

Matd row(std::initializer_list<double> xs) {
  Matd m(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("softmax matches hand-computed values") {
  const Matd p = softmax_rows(row({1.0, 2.0}));
  CHECK(p(0, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-9));
  CHECK(p(0, 0) == doctest::Approx(0.26894).epsilon(1e-4));
  CHECK(p(0, 1) == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax of a constant row is uniform") {
  const Matd p = softmax_rows(row({0.0, 0.0, 0.0}));
  for (int i = 0; i < 3; ++i) CHECK(p(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax is invariant under additive shifts") {
  const Matd v = row({0.5, -1.25, 3.0, 0.25});
  const Matd a = softmax_rows(v);
  // dyadic values and an integer shift keep every addition exact, so the
  // max-subtracted inputs are bit-identical
  const Matd b = softmax_rows(Matd(v.array() + 7.0));
  for (int i = 0; i < 4; ++i) CHECK(a(0, i) == b(0, i));
  // arbitrary shifts agree up to rounding
  const Matd c = softmax_rows(Matd(v.array() + 0.1234567));
  for (int i = 0; i < 4; ++i) CHECK(a(0, i) == doctest::Approx(c(0, i)).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-finite input") {
  Matd v = row({1.0, 2.0});
  v(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax_rows(v), NumericError);
  v(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax_rows(v), NumericError);
}

TEST_CASE("layer_norm normalizes and applies scale and shift") {
  const Matd gamma = Matd::Ones(1, 3);
  const Matd beta = Matd::Zero(1, 3);
  const Matd out = layer_norm_rows(row({0.0, 2.0, 4.0}), gamma, beta, 1e-9);
  CHECK(out(0, 0) == doctest::Approx(-1.2247).epsilon(1e-3));
  CHECK(out(0, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(out(0, 2) == doctest::Approx(1.2247).epsilon(1e-3));

  // constant vector collapses to beta for any eps
  const Matd c = layer_norm_rows(row({5.0, 5.0, 5.0}), gamma, beta, 1e-5);
  for (int i = 0; i < 3; ++i) CHECK(c(0, i) == doctest::Approx(0.0).scale(1.0));

  // [-1, 1] is already normalized as eps -> 0
  const Matd gamma2 = Matd::Ones(1, 2);
  const Matd beta2 = Matd::Zero(1, 2);
  const Matd n = layer_norm_rows(row({-1.0, 1.0}), gamma2, beta2, 1e-12);
  CHECK(n(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(n(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm output has zero mean and unit variance before affine") {
  Rng rng(7);
  Matd x(4, 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * 3.0 + 1.0;
  const Matd out = layer_norm_rows(x, Matd(Matd::Ones(1, 16)), Matd(Matd::Zero(1, 16)), 1e-12);
  for (Eigen::Index r = 0; r < 4; ++r) {
    CHECK(out.row(r).mean() == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK((out.row(r).array().square().sum() / 16.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm rejects mismatched scale/shift lengths") {
  CHECK_THROWS_AS(layer_norm_rows(row({1.0, 2.0}), Matd(Matd::Ones(1, 3)), Matd(Matd::Zero(1, 2)), 1e-5),
                  ShapeError);
  CHECK_THROWS_AS(layer_norm_rows(row({1.0, 2.0}), Matd(Matd::Ones(1, 2)), Matd(Matd::Zero(1, 2)), 0.0),
                  ValueError);
}

TEST_CASE("cross_entropy matches hand-computed values") {
  CHECK(cross_entropy(row({1.0, 2.0}), 0) == doctest::Approx(1.31326).epsilon(1e-4));
  // uniform logits give exactly log(V)
  for (int v : {2, 7, 50})
    CHECK(cross_entropy(Matd(Matd::Zero(1, v)), 0) ==
          doctest::Approx(std::log(double(v))).epsilon(1e-12));
  // a dominant correct logit drives the loss to ~0
  Matd dom = Matd::Zero(1, 8);
  dom(0, 3) = 30.0;
  CHECK(cross_entropy(dom, 3) < 1e-6);
}

TEST_CASE("cross_entropy rejects bad targets") {
  CHECK_THROWS_AS(cross_entropy(row({1.0, 2.0}), 2), ValueError);
  CHECK_THROWS_AS(cross_entropy(row({1.0, 2.0}), -1), ValueError);
  std::vector<int> targets{0, 5};
  Matd logits = Matd::Zero(2, 3);
  CHECK_THROWS_AS(cross_entropy_sum(logits, targets), ValueError);
}

TEST_CASE("gelu matches its tanh approximation at reference points") {
  CHECK(gelu_scalar(0.0) == doctest::Approx(0.0).scale(1.0));
  CHECK(gelu_scalar(10.0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(gelu_scalar(-10.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  // derivative agrees with central differences
  for (double x : {-2.0, -0.3, 0.0, 0.7, 1.9}) {
    const double h = 1e-6;
    const double num = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2 * h);
    CHECK(gelu_grad_scalar(x) == doctest::Approx(num).epsilon(1e-6));
  }
}

TEST_CASE("rng categorical draws honor the weights") {
  Rng rng(123);
  std::vector<double> w{1.0, 0.0};
  for (int i = 0; i < 200; ++i) CHECK(rng.categorical(w) == 0);

  std::vector<double> bad{0.5, -0.1};
  CHECK_THROWS_AS(rng.categorical(bad), ValueError);
  std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(rng.categorical(zero), ValueError);
}

TEST_CASE("rng state round-trips bit-exactly") {
  Rng a(99);
  for (int i = 0; i < 17; ++i) a.normal();  // leave a cached Box-Muller spare
  const std::string blob = a.save_state();
  Rng b(0);
  b.load_state(blob);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform_int(17) == b.uniform_int(17));
  }
}

TEST_CASE("derive_seed separates tagged streams") {
  CHECK(derive_seed(42, "sampler") != derive_seed(42, "masking"));
  CHECK(derive_seed(42, "sampler") == derive_seed(42, "sampler"));
  CHECK(derive_seed(42, "sampler") != derive_seed(43, "sampler"));
}

TEST_CASE("adamw first step moves by ~lr against the gradient sign") {
  Matd p(1, 1);
  p(0, 0) = 1.0;
  Matd g(1, 1);
  g(0, 0) = 0.5;
  AdamWOptions<double> opts;
  opts.lr = 0.1;
  opts.eps = 1e-6;
  opts.weight_decay = 0.0;
  std::vector<Mat<double>*> params{&p};
  std::vector<const Mat<double>*> grads{&g};
  auto state = AdamWState<double>::zeros_like(grads, opts);
  adamw_step<double>(params, grads, state);
  CHECK(state.step_count == 1);
  // mhat/(sqrt(vhat)+eps) == g/(|g|+eps) on the first step
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1 * (0.5 / (0.5 + 1e-6))).epsilon(1e-12));
  CHECK(p(0, 0) == doctest::Approx(0.9).epsilon(1e-4));
}

TEST_CASE("adamw decoupled weight decay shrinks params when grad is zero") {
  Matd p(2, 2);
  p << 1.0, -2.0, 0.5, 4.0;
  const Matd before = p;
  Matd g = Matd::Zero(2, 2);
  AdamWOptions<double> opts;
  opts.lr = 0.1;
  opts.weight_decay = 0.01;
  std::vector<Mat<double>*> params{&p};
  std::vector<const Mat<double>*> grads{&g};
  auto state = AdamWState<double>::zeros_like(grads, opts);
  adamw_step<double>(params, grads, state);
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(p.data()[i] == doctest::Approx(before.data()[i] * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
}

TEST_CASE("adamw with zero grad and zero decay leaves params unchanged") {
  Matd p(1, 3);
  p << 1.0, 2.0, 3.0;
  const Matd before = p;
  Matd g = Matd::Zero(1, 3);
  AdamWOptions<double> opts;
  opts.weight_decay = 0.0;
  std::vector<Mat<double>*> params{&p};
  std::vector<const Mat<double>*> grads{&g};
  auto state = AdamWState<double>::zeros_like(grads, opts);
  adamw_step<double>(params, grads, state);
  CHECK(state.step_count == 1);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(p.data()[i] == before.data()[i]);
}

TEST_CASE("adamw is a pure function of params, grads and state") {
  Rng rng(5);
  Matd p1(3, 4), g1(3, 4);
  for (Eigen::Index i = 0; i < p1.size(); ++i) {
    p1.data()[i] = rng.normal();
    g1.data()[i] = rng.normal();
  }
  Matd p2 = p1;
  AdamWOptions<double> opts;
  std::vector<Mat<double>*> params1{&p1}, params2{&p2};
  std::vector<const Mat<double>*> grads{&g1};
  auto s1 = AdamWState<double>::zeros_like(grads, opts);
  auto s2 = AdamWState<double>::zeros_like(grads, opts);
  for (int step = 0; step < 5; ++step) {
    adamw_step<double>(params1, grads, s1);
    adamw_step<double>(params2, grads, s2);
  }
  for (Eigen::Index i = 0; i < p1.size(); ++i) CHECK(p1.data()[i] == p2.data()[i]);
}

TEST_CASE("adamw rejects shape mismatches and bad hyperparameters") {
  Matd p(2, 2);
  p.setZero();
  Matd g(2, 3);
  g.setZero();
  AdamWOptions<double> opts;
  std::vector<Mat<double>*> params{&p};
  std::vector<const Mat<double>*> self{&p};
  auto state = AdamWState<double>::zeros_like(self, opts);
  std::vector<const Mat<double>*> grads{&g};
  CHECK_THROWS_AS(adamw_step<double>(params, grads, state), ShapeError);

  AdamWOptions<double> bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = AdamWOptions<double>{};
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("adamw frozen mask skips listed tensors entirely") {
  Matd p(1, 2), q(1, 2), g(1, 2);
  p << 1.0, 2.0;
  q << 1.0, 2.0;
  g << 0.3, -0.7;
  AdamWOptions<double> opts;
  std::vector<Mat<double>*> params{&p, &q};
  std::vector<const Mat<double>*> grads{&g, &g};
  auto state = AdamWState<double>::zeros_like(grads, opts);
  std::vector<std::uint8_t> frozen{0, 1};
  adamw_step<double>(params, grads, state, frozen);
  CHECK(p(0, 0) != 1.0);
  CHECK(q(0, 0) == 1.0);
  CHECK(q(0, 1) == 2.0);
  CHECK(state.m[1].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad_check validates d/dx x^2 = 2x at x = 3") {
  Matd x(1, 1);
  x(0, 0) = 3.0;
  Matd analytic(1, 1);
  {
    Graph<double> g;
    auto xv = leaf(g, x, true);
    auto y = matmul(xv, xv);
    g.backward(y.id);
    analytic = xv.grad();
  }
  CHECK(analytic(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
  auto loss = [&]() { return x(0, 0) * x(0, 0); };
  std::vector<GradCheckTarget<double>> targets{{"x", &x, &analytic}};
  const auto report = grad_check<double>(loss, targets, 1e-4);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.checked == 1);
}

TEST_CASE("grad_check flags a wrong gradient") {
  Matd x(1, 1);
  x(0, 0) = 3.0;
  Matd wrong(1, 1);
  wrong(0, 0) = 5.0;  // truth is 6
  auto loss = [&]() { return x(0, 0) * x(0, 0); };
  std::vector<GradCheckTarget<double>> targets{{"x", &x, &wrong}};
  const auto report = grad_check<double>(loss, targets, 1e-4);
  CHECK(report.max_rel_error > 0.1);
  CHECK(report.worst_tensor == "x");
}
