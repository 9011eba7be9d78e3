#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "memcap/adam.hpp"
#include "memcap/gradcheck.hpp"
#include "memcap/rng.hpp"
#include "memcap/tensor.hpp"

using memcap::Rng;
using namespace memcap::nn;

namespace {

template <typename T>
TensorNode<T> make_tensor(std::vector<int> shape, std::vector<T> values, const char* name) {
  TensorNode<T> t(shape, true, name);
  t.value = std::move(values);
  return t;
}

template <typename T>
void fill_random(TensorNode<T>& t, uint64_t seed) {
  Rng rng(seed);
  for (auto& v : t.value) v = static_cast<T>(2.0 * rng.next_unit() - 1.0);
}

}  // namespace

TEST_CASE("matmul identity and hand-computed products") {
  auto a = make_tensor<double>({2, 2}, {1, 0, 0, 1}, "a");
  auto b = make_tensor<double>({2, 1}, {3, 4}, "b");
  Graph<double> g;
  auto* out = g.matmul(&a, &b);
  g.forward();
  CHECK(out->value[0] == 3.0);
  CHECK(out->value[1] == 4.0);

  auto c = make_tensor<double>({1, 2}, {1, 2}, "c");
  Graph<double> g2;
  auto* out2 = g2.matmul(&c, &b);
  g2.forward();
  CHECK(out2->value[0] == 11.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions with a dimension report") {
  auto a = make_tensor<double>({2, 3}, std::vector<double>(6, 0.0), "a");
  auto b = make_tensor<double>({2, 2}, std::vector<double>(4, 0.0), "b");
  Graph<double> g;
  CHECK_THROWS_WITH_AS(g.matmul(&a, &b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient matches central finite differences on random 3x3") {
  TensorNode<double> a({3, 3}, true, "a");
  TensorNode<double> b({3, 3}, true, "b");
  fill_random(a, 11);
  fill_random(b, 22);
  Graph<double> g;
  auto* loss = g.reduce_sum(g.matmul(&a, &b));
  g.forward();
  a.alloc_grad();
  b.alloc_grad();
  a.zero_grad();
  b.zero_grad();
  g.backward(loss);

  auto loss_fn = [&]() {
    g.forward();
    return static_cast<double>(loss->value[0]);
  };
  auto report = finite_diff_check<double>(loss_fn, {&a, &b});
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("softmax cross entropy on uniform and near-deterministic logits") {
  // all-equal logits: every target costs ln(V) nats
  TensorNode<double> logits({3, 4}, true, "logits");
  logits.fill(0.7);
  std::vector<int32_t> targets = {0, 2, 3};
  Graph<double> g;
  auto* loss = g.softmax_cross_entropy(&logits, &targets, Reduction::kMean);
  g.forward();
  CHECK(loss->value[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  TensorNode<double> sharp({1, 4}, true, "sharp");
  sharp.value = {1000.0, 0.0, 0.0, 0.0};
  std::vector<int32_t> t0 = {0};
  Graph<double> g2;
  auto* loss2 = g2.softmax_cross_entropy(&sharp, &t0, Reduction::kSum);
  g2.forward();
  CHECK(loss2->value[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy equals direct summation on random 5x7 logits") {
  TensorNode<double> logits({5, 7}, true, "logits");
  fill_random(logits, 33);
  std::vector<int32_t> targets = {3, 0, 6, 2, 5};
  Graph<double> g;
  auto* loss = g.softmax_cross_entropy(&logits, &targets, Reduction::kSum);
  g.forward();

  double expected = 0.0;
  for (int r = 0; r < 5; ++r) {
    double z = 0.0;
    for (int j = 0; j < 7; ++j) z += std::exp(logits.value[r * 7 + j]);
    expected += -std::log(std::exp(logits.value[r * 7 + targets[r]]) / z);
  }
  CHECK(loss->value[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy rejects out-of-range targets") {
  TensorNode<double> logits({2, 4}, true, "logits");
  std::vector<int32_t> targets = {1, 4};
  Graph<double> g;
  auto* loss = g.softmax_cross_entropy(&logits, &targets, Reduction::kSum);
  (void)loss;
  CHECK_THROWS_AS(g.forward(), InputError);
}

TEST_CASE("softmax rows are normalized: cross entropy row gradients sum to zero") {
  TensorNode<double> logits({6, 9}, true, "logits");
  fill_random(logits, 44);
  std::vector<int32_t> targets = {0, 1, 2, 3, 4, 5};
  Graph<double> g;
  auto* loss = g.softmax_cross_entropy(&logits, &targets, Reduction::kSum);
  g.forward();
  logits.alloc_grad();
  logits.zero_grad();
  g.backward(loss);
  // each row gradient is softmax(l) - onehot, so its sum is sum(p) - 1
  for (int r = 0; r < 6; ++r) {
    double s = 0.0;
    for (int j = 0; j < 9; ++j) s += logits.grad[r * 9 + j];
    CHECK(std::abs(s) <= 1e-9);
  }
}

TEST_CASE("layernorm maps constant rows to the bias") {
  TensorNode<double> x({2, 5}, true, "x");
  x.fill(3.25);
  TensorNode<double> gain({5}, true, "gain");
  gain.fill(1.7);
  TensorNode<double> bias({5}, true, "bias");
  for (int j = 0; j < 5; ++j) bias.value[j] = j * 0.5;
  Graph<double> g;
  auto* out = g.layernorm(&x, &gain, &bias);
  g.forward();
  for (int r = 0; r < 2; ++r)
    for (int j = 0; j < 5; ++j)
      CHECK(out->value[r * 5 + j] == doctest::Approx(bias.value[j]).epsilon(1e-9));
}

TEST_CASE("layernorm gradient matches finite differences on random 4x8") {
  TensorNode<double> x({4, 8}, true, "x");
  TensorNode<double> gain({8}, true, "gain");
  TensorNode<double> bias({8}, true, "bias");
  fill_random(x, 55);
  fill_random(gain, 56);
  fill_random(bias, 57);
  Graph<double> g;
  auto* loss = g.reduce_sum(g.gelu(g.layernorm(&x, &gain, &bias)));
  g.forward();
  for (auto* p : {&x, &gain, &bias}) {
    p->alloc_grad();
    p->zero_grad();
  }
  g.backward(loss);
  auto loss_fn = [&]() {
    g.forward();
    return static_cast<double>(loss->value[0]);
  };
  auto report = finite_diff_check<double>(loss_fn, {&x, &gain, &bias});
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("gelu fixes zero and matches finite differences") {
  TensorNode<double> x({1, 1}, true, "x");
  x.value[0] = 0.0;
  Graph<double> g;
  auto* y = g.gelu(&x);
  g.forward();
  CHECK(y->value[0] == 0.0);
}

TEST_CASE("causal attention gradient matches finite differences") {
  const int batch = 2, time = 3, d = 4, heads = 2;
  TensorNode<double> qkv({batch * time, 3 * d}, true, "qkv");
  fill_random(qkv, 66);
  Graph<double> g;
  auto* loss = g.reduce_sum(g.causal_self_attention(&qkv, batch, time, heads));
  g.forward();
  qkv.alloc_grad();
  qkv.zero_grad();
  g.backward(loss);
  auto loss_fn = [&]() {
    g.forward();
    return static_cast<double>(loss->value[0]);
  };
  auto report = finite_diff_check<double>(loss_fn, {&qkv});
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("adam leaves parameters unchanged on zero gradients from a fresh state") {
  TensorNode<float> w({3}, true, "w");
  w.value = {0.5f, -0.25f, 2.0f};
  w.alloc_grad();
  w.zero_grad();
  const auto before = w.value;
  AdamState<float> adam({&w}, {});
  adam.step({&w});
  CHECK(adam.step_count() == 1);
  CHECK(w.value == before);
}

TEST_CASE("adam single step matches a hand-rolled scalar oracle") {
  const double g = 0.37, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  TensorNode<double> w({1}, true, "w");
  w.value[0] = 1.5;
  w.alloc_grad();
  w.grad[0] = g;
  AdamState<double> adam({&w}, {lr, b1, b2, eps});
  adam.step({&w});

  // independent single-step computation
  const double m = (1 - b1) * g;
  const double v = (1 - b2) * g * g;
  const double mhat = m / (1 - b1);
  const double vhat = v / (1 - b2);
  const double expected = 1.5 - lr * mhat / (std::sqrt(vhat) + eps);
  CHECK(w.value[0] == doctest::Approx(expected).epsilon(1e-15));
  // after bias correction the first step is close to -lr * sign(g)
  CHECK(std::abs((w.value[0] - 1.5) + lr * g / (std::abs(g) + eps)) < 1e-6);
}

TEST_CASE("adam aborts on non-finite gradients naming the tensor") {
  TensorNode<float> w({2}, true, "w_bad");
  w.alloc_grad();
  w.grad[0] = std::numeric_limits<float>::quiet_NaN();
  AdamState<float> adam({&w}, {});
  CHECK_THROWS_WITH_AS(adam.step({&w}), doctest::Contains("w_bad"), NonFiniteGradient);
}

template <typename T>
static std::vector<T> run_two_adam_steps(uint64_t seed) {
  TensorNode<T> w({4}, true, "w");
  Rng rng(seed);
  for (auto& v : w.value) v = static_cast<T>(rng.next_unit());
  AdamState<T> adam({&w}, {1e-2, 0.9, 0.999, 1e-8});
  for (int step = 0; step < 2; ++step) {
    w.alloc_grad();
    for (int j = 0; j < 4; ++j) w.grad[j] = w.value[j] * T(0.5) + T(0.1) * T(j);
    adam.step({&w});
  }
  return w.value;
}

TEST_CASE("adam trajectory is reproducible bit-exactly per precision mode") {
  auto f32_a = run_two_adam_steps<float>(7);
  auto f32_b = run_two_adam_steps<float>(7);
  CHECK(std::memcmp(f32_a.data(), f32_b.data(), f32_a.size() * sizeof(float)) == 0);
  auto f64_a = run_two_adam_steps<double>(7);
  auto f64_b = run_two_adam_steps<double>(7);
  CHECK(std::memcmp(f64_a.data(), f64_b.data(), f64_a.size() * sizeof(double)) == 0);
}

TEST_CASE("finite_diff_check is exact on a linear loss") {
  TensorNode<double> w({4}, true, "w");
  w.value = {0.1, -0.2, 0.3, 1.4};
  const std::vector<double> coef = {2.0, -1.0, 0.5, 3.0};
  w.alloc_grad();
  for (int j = 0; j < 4; ++j) w.grad[j] = coef[j];
  auto loss_fn = [&]() {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += coef[j] * w.value[j];
    return s;
  };
  auto report = finite_diff_check<double>(loss_fn, {&w});
  CHECK(report.max_rel_err <= 1e-10);
  CHECK(report.passed(1e-10));
}

TEST_CASE("finite_diff_check flags a sign-flipped backward pass") {
  TensorNode<double> w({3}, true, "w");
  w.value = {0.4, 0.7, -0.9};
  w.alloc_grad();
  for (int j = 0; j < 3; ++j) w.grad[j] = -2.0 * w.value[j];  // sign flip of d(sum w^2)
  auto loss_fn = [&]() {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += w.value[j] * w.value[j];
    return s;
  };
  auto report = finite_diff_check<double>(loss_fn, {&w});
  CHECK(report.max_rel_err > 0.5);
  CHECK_FALSE(report.passed(1e-4));
}
