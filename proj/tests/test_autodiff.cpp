#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "direp/adam.hpp"
#include "direp/networks.hpp"
#include "direp/ops.hpp"
#include "test_util.hpp"

using namespace direp;
using T = Tensor<double>;

TEST(Ops, MatmulIdentity) {
  const T eye = T::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const T m = T::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const T y = matmul(eye, m);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], m[i]);
}

TEST(Ops, Relu) {
  const T y = relu(T::from({3}, {-1, 0, 2}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  const T y = softmax_last(T::zeros({1, 10}));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(y[i], 0.1, 1e-15);
}

TEST(Ops, SoftmaxIsStableForLargeLogits) {
  const T y = softmax_last(T::from({1, 3}, {1000, 1000, -1000}));
  EXPECT_NEAR(y[0], 0.5, 1e-15);
  EXPECT_NEAR(y[2], 0.0, 1e-15);
}

TEST(Ops, SumOfSquares) { EXPECT_EQ(sum_of_squares(T::from({2}, {1, 1})).item(), 2.0); }

TEST(Ops, ShapeMismatchNamesBothShapes) {
  try {
    add(T::zeros({2, 3}), T::zeros({3, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3, 2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(T::zeros({2, 3}), T::zeros({2, 3})), ShapeError);
}

TEST(Ops, LogOfNonPositiveIsDomainError) {
  EXPECT_THROW(log(T::from({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(log(T::from({1}, {-2.0})), DomainError);
}

TEST(Ops, ApplyChecksArity) {
  const T a = T::from({2}, {1, 2});
  std::vector<T> one{a};
  EXPECT_THROW(apply<double>(OpKind::add, one), ShapeError);
  EXPECT_EQ(apply<double>(OpKind::sum_of_squares, one).item(), 5.0);
}

TEST(Backward, SquareGradient) {
  T w = T::from({1}, {3}, true);
  backward(sum_of_squares(w));
  EXPECT_EQ(w.grad()[0], 6.0);
}

TEST(Backward, MeanOfRelu) {
  T w = T::from({2}, {-1, 2}, true);
  backward(batch_mean(relu(w)));
  EXPECT_EQ(w.grad()[0], 0.0);
  EXPECT_EQ(w.grad()[1], 0.5);
}

TEST(Backward, NonScalarIsContractError) {
  T w = T::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(relu(w)), ContractError);
  clear_tape<double>();
}

TEST(Backward, TapeIsConsumed) {
  T w = T::from({2}, {1, 2}, true);
  backward(sum_of_squares(mul(w, w)));
  EXPECT_EQ(tape_size<double>(), 0u);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  T w = T::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    const T y = sum_of_squares(w);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(tape_size<double>(), 0u);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
  T w = T::from({1}, {2}, true);
  backward(add(sum_of_squares(w), scale(sum_all(w), 3.0)));
  EXPECT_EQ(w.grad()[0], 7.0);
}

TEST(Backward, ScaleGradientForwardIsIdentity) {
  const T x = T::from({3}, {1, -2, 3}, true);
  const T y = scale_gradient(x, -0.7);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y[i], x[i]);
  clear_tape<double>();
}

TEST(Backward, GradientReversalMatchesFiniteDifference) {
  // f(x) = sum x^2 behind a reversal layer reports -lambda f'(x).
  const double lambda = 0.462117, x0 = 1.3, h = 1e-5;
  T x = T::from({1}, {x0}, true);
  backward(sum_of_squares(scale_gradient(x, -lambda)));
  auto f = [](double v) { return v * v; };
  const double numeric = (f(x0 + h) - f(x0 - h)) / (2 * h);
  EXPECT_NEAR(x.grad()[0], -lambda * numeric, 1e-9);
}

TEST(Backward, EveryOpMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  auto rand_tensor = [&](Shape s) {
    std::vector<double> v(element_count(s));
    for (auto& e : v) e = u(rng) * (rng() % 2 ? 1 : -1);
    return T::from(std::move(s), std::move(v), true);
  };
  auto positive = [&](Shape s) {
    std::vector<double> v(element_count(s));
    for (auto& e : v) e = u(rng);
    return T::from(std::move(s), std::move(v), true);
  };
  const T probe = rand_tensor({3, 4});
  using Fn = std::function<T(std::vector<T>&)>;
  struct Case {
    const char* name;
    std::vector<T> inputs;
    Fn fn;
  };
  std::vector<Case> cases = {
      {"add", {rand_tensor({3, 4}), rand_tensor({3, 4})}, [](auto& in) { return add(in[0], in[1]); }},
      {"sub", {rand_tensor({3, 4}), rand_tensor({1})}, [](auto& in) { return sub(in[0], in[1]); }},
      {"mul", {rand_tensor({3, 4}), rand_tensor({3, 4})}, [](auto& in) { return mul(in[0], in[1]); }},
      {"matmul", {rand_tensor({3, 5}), rand_tensor({5, 4})}, [](auto& in) { return matmul(in[0], in[1]); }},
      {"affine", {rand_tensor({3, 5}), rand_tensor({5, 4}), rand_tensor({4})},
       [](auto& in) { return affine(in[0], in[1], in[2]); }},
      {"transpose", {rand_tensor({4, 3})}, [](auto& in) { return transpose(in[0]); }},
      {"concat", {rand_tensor({3, 1}), rand_tensor({3, 3})}, [](auto& in) { return concat_last(in[0], in[1]); }},
      {"concat_rows", {rand_tensor({1, 4}), rand_tensor({2, 4})},
       [](auto& in) { return concat_rows<double>(std::vector<T>{in[0], in[1]}); }},
      {"gather", {rand_tensor({5, 4})},
       [](auto& in) {
         const std::size_t idx[] = {4, 0, 4};
         return gather_rows<double>(in[0], idx);
       }},
      {"slice", {rand_tensor({6, 4})}, [](auto& in) { return slice_rows(in[0], 2, 5); }},
      {"relu", {rand_tensor({3, 4})}, [](auto& in) { return relu(in[0]); }},
      {"sigmoid", {rand_tensor({3, 4})}, [](auto& in) { return sigmoid(in[0]); }},
      {"softmax", {rand_tensor({3, 4})}, [](auto& in) { return softmax_last(in[0]); }},
      {"log_softmax", {rand_tensor({3, 4})}, [](auto& in) { return log_softmax_last(in[0]); }},
      {"log", {positive({3, 4})}, [](auto& in) { return log(in[0]); }},
      {"exp", {rand_tensor({3, 4})}, [](auto& in) { return exp(in[0]); }},
      {"batch_mean", {rand_tensor({3, 4})}, [](auto& in) { return batch_mean(in[0]); }},
      {"sum_last", {rand_tensor({3, 4})}, [](auto& in) { return sum_last(in[0]); }},
      {"sum_of_squares", {rand_tensor({3, 4})}, [](auto& in) { return sum_of_squares(in[0]); }},
      {"center_columns", {rand_tensor({3, 4})}, [](auto& in) { return center_columns(in[0]); }},
      {"normalize_rows", {rand_tensor({3, 4})}, [](auto& in) { return normalize_rows(in[0]); }},
  };
  for (auto& c : cases) {
    // Contract the output against fixed random weights so every element matters.
    auto loss = [&](std::vector<T>& in) {
      const T y = c.fn(in);
      std::vector<double> w(y.size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = probe[i % probe.size()] + 0.1 * static_cast<double>(i);
      return sum_all(mul(y, T::from(y.shape(), w)));
    };
    const double err = testutil::max_fd_error(c.inputs, loss, 1e-6);
    EXPECT_LT(err, 1e-6) << c.name;
  }
}

TEST(Backward, RandomMlpsMatchFiniteDifferences) {
  // 100 random stacks of varying depth, width and activation.
  std::mt19937_64 rng(2024);
  const Activation hidden_choices[] = {Activation::relu, Activation::sigmoid, Activation::identity};
  double worst = 0.0;
  for (int net = 0; net < 100; ++net) {
    const std::size_t depth = 1 + rng() % 3;
    std::vector<LayerSpec> layers;
    std::size_t in = 2 + rng() % 5;
    const std::size_t input_width = in;
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t out = 2 + rng() % 5;
      layers.push_back({in, out, hidden_choices[rng() % 3]});
      in = out;
    }
    layers.push_back({in, 3, Activation::softmax});
    Network<double> mlp(Role::classifier, layers, rng());
    std::normal_distribution<double> normal(0.0, 1.0);
    // Nonzero biases keep dead ReLU rows off the kink at exactly zero.
    for (std::size_t k = 1; k < mlp.parameters().size(); k += 2) {
      for (auto& b : mlp.parameters()[k].mutable_data()) b = 0.1 * normal(rng);
    }
    std::vector<double> xs(4 * input_width);
    for (auto& v : xs) v = normal(rng);
    const T x = T::from({4, input_width}, xs);
    const T labels = T::from({4, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0});
    std::vector<T> params = mlp.parameters();
    auto loss = [&](std::vector<T>&) {
      return mul(sum_all(mul(labels, log(mlp.forward(x)))), T::scalar(-0.25));
    };
    const double err = testutil::max_fd_error(params, loss, 1e-5);
    worst = std::max(worst, err);
    EXPECT_LT(err, 1e-4) << "network " << net;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Adam, ZeroGradientKeepsParameter) {
  T p = T::from({2}, {1.5, -2.0}, true);
  AdamState<double> state(2);
  state.first_moment = {0.4, -0.2};
  state.second_moment = {0.01, 0.02};
  p.zero_grad();
  adam_update(p, state, 1e-3);
  // m decays by beta1; the parameter moves only by the stale moment.
  EXPECT_NEAR(state.first_moment[0], 0.36, 1e-15);
  EXPECT_NEAR(state.second_moment[1], 0.01998, 1e-15);
  T q = T::from({1}, {0.7}, true);
  AdamState<double> fresh(1);
  q.zero_grad();
  adam_update(q, fresh, 1e-3);
  EXPECT_EQ(q[0], 0.7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  T p = T::from({3}, {0.0, 0.0, 0.0}, true);
  AdamState<double> state(3);
  p.mutable_grad()[0] = 2.5;
  p.mutable_grad()[1] = -0.01;
  p.mutable_grad()[2] = 40.0;
  adam_update(p, state, 0.01);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-8);
  EXPECT_NEAR(p[2], -0.01, 1e-9);
  EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Adam, TwoStepTraceMatchesScalarOracle) {
  T p = T::from({2}, {1.0, 1.0}, true);
  AdamState<double> state(2);
  const double g1[] = {0.5, 0.5}, g2[] = {0.5, -0.25};
  for (const double* g : {g1, g2}) {
    p.mutable_grad()[0] = g[0];
    p.mutable_grad()[1] = g[1];
    adam_update(p, state, 0.1);
  }
  EXPECT_NEAR(p[0], 0.8000000040000006, 1e-15);
  EXPECT_NEAR(p[1], 0.8733662987078463, 1e-15);
  EXPECT_NEAR(state.first_moment[0], 0.09499999999999997, 1e-15);
  EXPECT_NEAR(state.second_moment[0], 0.00049975, 1e-15);
}

TEST(Adam, MissingGradientIsContractError) {
  T p = T::from({1}, {1.0}, true);
  AdamState<double> state(1);
  EXPECT_THROW(adam_update(p, state, 0.1), ContractError);
}

TEST(Tensor, DetachSharesCloneCopies) {
  T a = T::from({2}, {1, 2}, true);
  T d = a.detach();
  T c = a.clone();
  a.mutable_data()[0] = 9;
  EXPECT_EQ(d[0], 9.0);
  EXPECT_EQ(c[0], 1.0);
  EXPECT_FALSE(d.requires_grad());
}

TEST(Tensor, FloatInstantiation) {
  Tensor<float> w = Tensor<float>::from({2}, {-1.0f, 2.0f}, true);
  backward(batch_mean(relu(w)));
  EXPECT_EQ(w.grad()[1], 0.5f);
}
