#include "beamfuse/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace beamfuse;

namespace {

using Mat = MatrixX<double>;
using Vec = VectorX<double>;

Mat random_matrix(std::mt19937_64& eng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = scale * gaussian(eng);
  return m;
}

Mat random_one_hot(std::mt19937_64& eng, int rows, int classes) {
  Mat t = Mat::Zero(rows, classes);
  for (int i = 0; i < rows; ++i) t(i, static_cast<int>(eng() % classes)) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("dense forward is x W + b and names both widths on mismatch") {
  Dense<double> layer(2, 3);
  layer.weight << 1, 2, 3, 4, 5, 6;
  layer.bias << 10, 20, 30;
  std::mt19937_64 rng(0);
  Mat x(1, 2);
  x << 1, 2;
  const Mat y = layer.forward(x, false, rng);
  CHECK(y(0, 0) == 19.0);
  CHECK(y(0, 1) == 32.0);
  CHECK(y(0, 2) == 45.0);

  Mat wide(1, 3);
  wide.setZero();
  CHECK_THROWS_WITH_AS(layer.forward(wide, false, rng),
                       doctest::Contains("input width 3"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(layer.forward(wide, false, rng),
                       doctest::Contains("layer input 2"), std::invalid_argument);
}

TEST_CASE("dense gradients match finite differences tightly") {
  std::mt19937_64 eng(21), rng(22);
  LayerStack<double> stack;
  stack.layers.emplace_back(Dense<double>(3, 4));
  init_xavier(stack, eng);
  const Mat x = random_matrix(eng, 5, 3);
  const Mat targets = random_one_hot(eng, 5, 4);

  SoftmaxCrossEntropy<double> ce;
  auto loss_fn = [&] { return ce.loss(stack.forward(x, true, rng), targets); };
  loss_fn();
  stack.backward(ce.grad());

  std::vector<ParamRef<double>> params;
  collect_params(stack, "net", params);
  CHECK(max_relative_gradient_error(params, loss_fn, 1e-5, 1) < 1e-5);
}

TEST_CASE("a quadratic loss through a dense layer is exact under central differences") {
  std::mt19937_64 eng(31), rng(32);
  LayerStack<double> stack;
  stack.layers.emplace_back(Dense<double>(4, 2));
  init_xavier(stack, eng);
  const Mat x = random_matrix(eng, 3, 4);
  const Mat target = random_matrix(eng, 3, 2);

  Mat residual;
  auto loss_fn = [&] {
    residual = stack.forward(x, true, rng) - target;
    return 0.5 * residual.squaredNorm();
  };
  loss_fn();
  stack.backward(residual);

  std::vector<ParamRef<double>> params;
  collect_params(stack, "net", params);
  CHECK(max_relative_gradient_error(params, loss_fn, 1e-4, 1) < 1e-7);
}

TEST_CASE("gradients flow correctly through batchnorm and relu") {
  std::mt19937_64 eng(41), rng(42);
  LayerStack<double> stack;
  stack.layers.emplace_back(Dense<double>(3, 5));
  stack.layers.emplace_back(BatchNorm<double>(5));
  stack.layers.emplace_back(Relu<double>{});
  stack.layers.emplace_back(Dense<double>(5, 4));
  init_xavier(stack, eng);
  const Mat x = random_matrix(eng, 8, 3, 2.0);
  const Mat targets = random_one_hot(eng, 8, 4);

  SoftmaxCrossEntropy<double> ce;
  auto loss_fn = [&] { return ce.loss(stack.forward(x, true, rng), targets); };
  loss_fn();
  stack.backward(ce.grad());

  std::vector<ParamRef<double>> params;
  collect_params(stack, "net", params);
  CHECK(max_relative_gradient_error(params, loss_fn, 1e-5, 1) < 1e-3);
}

TEST_CASE("a full block with frozen dropout passes the gradient check") {
  std::mt19937_64 eng(51), rng(52);
  LayerStack<double> stack;
  stack.layers.emplace_back(Dense<double>(4, 6));
  stack.layers.emplace_back(BatchNorm<double>(6));
  stack.layers.emplace_back(Relu<double>{});
  stack.layers.emplace_back(Dropout<double>(0.4));
  stack.layers.emplace_back(Dense<double>(6, 3));
  init_xavier(stack, eng);
  stack.freeze_dropout(true);
  const Mat x = random_matrix(eng, 6, 4, 2.0);
  const Mat targets = random_one_hot(eng, 6, 3);

  SoftmaxCrossEntropy<double> ce;
  auto loss_fn = [&] { return ce.loss(stack.forward(x, true, rng), targets); };
  loss_fn();
  stack.backward(ce.grad());

  std::vector<ParamRef<double>> params;
  collect_params(stack, "net", params);
  CHECK(max_relative_gradient_error(params, loss_fn, 1e-5, 1) < 1e-3);
}

TEST_CASE("relu clamps negatives and passes no gradient at zero") {
  Relu<double> relu;
  std::mt19937_64 rng(0);
  Mat x(1, 3);
  x << -1.0, 0.0, 2.0;
  const Mat y = relu.forward(x, true, rng);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 2.0);
  Mat g(1, 3);
  g << 5.0, 5.0, 5.0;
  const Mat gx = relu.backward(g);
  CHECK(gx(0, 0) == 0.0);
  CHECK(gx(0, 1) == 0.0);
  CHECK(gx(0, 2) == 5.0);
}

TEST_CASE("batchnorm standardizes each training batch column") {
  std::mt19937_64 eng(61), rng(62);
  BatchNorm<double> bn(3);
  const Mat x = random_matrix(eng, 64, 3, 10.0);
  const Mat y = bn.forward(x, true, rng);
  for (int c = 0; c < 3; ++c) {
    const double mean = y.col(c).mean();
    const double var = (y.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(bn.forward(x.topRows(1), true, rng), std::invalid_argument);
}

TEST_CASE("batchnorm running statistics follow the momentum recurrence") {
  std::mt19937_64 rng(0);
  BatchNorm<double> bn(2);
  Mat x(2, 2);
  x << 1, 3, 3, 7;  // column means {2, 5}, biased variances {1, 4}
  bn.forward(x, true, rng);
  CHECK(bn.running_mean(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(bn.running_mean(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bn.running_var(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bn.running_var(1) == doctest::Approx(1.3).epsilon(1e-12));
  bn.forward(x, true, rng);
  CHECK(bn.running_mean(0) == doctest::Approx(0.38).epsilon(1e-12));
  CHECK(bn.running_mean(1) == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("batchnorm evaluation uses the stored statistics") {
  std::mt19937_64 rng(0);
  BatchNorm<double> bn(2);
  bn.running_mean << 1.0, -2.0;
  bn.running_var << 4.0, 9.0;
  bn.gamma << 2.0, 1.0;
  bn.beta << 0.5, 0.0;
  Mat x(1, 2);
  x << 3.0, 1.0;
  const Mat y = bn.forward(x, false, rng);
  CHECK(y(0, 0) == doctest::Approx(0.5 + 2.0 * 2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(3.0 / std::sqrt(9.0 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("dropout passes evaluation through and scales training survivors") {
  std::mt19937_64 rng(71);
  Dropout<double> drop(0.5);
  const Mat x = Mat::Ones(20, 50);
  CHECK(drop.forward(x, false, rng) == x);

  const Mat y = drop.forward(x, true, rng);
  int kept = 0;
  for (int j = 0; j < y.cols(); ++j)
    for (int i = 0; i < y.rows(); ++i) {
      CHECK((y(i, j) == 0.0 || y(i, j) == 2.0));
      kept += y(i, j) != 0.0;
    }
  CHECK(kept > 400);
  CHECK(kept < 600);

  // Backward kills exactly the dropped coordinates.
  const Mat g = drop.backward(Mat::Ones(20, 50));
  CHECK((g.array() != 0.0).count() == kept);

  CHECK_THROWS_AS(Dropout<double>(1.0), std::invalid_argument);
  CHECK_THROWS_AS(Dropout<double>(-0.1), std::invalid_argument);
}

TEST_CASE("a frozen dropout mask repeats; a thawed one is redrawn") {
  std::mt19937_64 rng(81);
  Dropout<double> drop(0.4);
  const Mat x = Mat::Ones(10, 10);
  drop.freeze_mask();
  const Mat first = drop.forward(x, true, rng);
  const Mat second = drop.forward(x, true, rng);
  CHECK(first == second);
  drop.thaw_mask();
  const Mat third = drop.forward(x, true, rng);
  CHECK(third != first);

  Dropout<double> none(0.0);
  CHECK(none.forward(x, true, rng) == x);
  CHECK(none.backward(x) == x);  // no mask exists at rate zero
}

TEST_CASE("softmax cross-entropy matches the two-logit closed form") {
  SoftmaxCrossEntropy<double> ce;
  Mat logits(1, 2), target(1, 2);
  logits << 0.0, 0.0;
  target << 1.0, 0.0;
  CHECK(ce.loss(logits, target) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ce.probs(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  const Mat g = ce.grad();
  CHECK(g(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(g(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

  Mat bad(2, 2);
  bad.setZero();
  CHECK_THROWS_AS(ce.loss(bad, target), std::invalid_argument);
}

TEST_CASE("softmax cross-entropy is invariant to per-row logit shifts") {
  std::mt19937_64 eng(91);
  SoftmaxCrossEntropy<double> ce;
  const Mat logits = random_matrix(eng, 6, 5, 30.0);
  const Mat targets = random_one_hot(eng, 6, 5);
  const double base = ce.loss(logits, targets);
  Mat shifted = logits;
  for (int i = 0; i < shifted.rows(); ++i) shifted.row(i).array() += 100.0 * gaussian(eng);
  CHECK(std::abs(ce.loss(shifted, targets) - base) < 1e-9);
}

TEST_CASE("adam walks a scalar quadratic toward its minimum") {
  double w = 1.0, g = 0.0;
  std::vector<ParamRef<double>> params{{"w", &w, &g, 1}};
  AdamState<double> adam;
  adam.init(params);

  g = 2.0 * w;
  adam.step(params, 0.1);
  // Bias-corrected first step moves by almost exactly the learning rate.
  CHECK(w == doctest::Approx(0.9).epsilon(1e-6));

  double prev = std::abs(w);
  for (int i = 0; i < 60; ++i) {
    g = 2.0 * w;
    adam.step(params, 0.1);
    if (i < 5) {
      CHECK(std::abs(w) < prev);
      prev = std::abs(w);
    }
  }
  CHECK(std::abs(w) < 0.2);

  AdamState<double> fresh;
  CHECK_THROWS_AS(fresh.step(params, 0.1), std::logic_error);
}

TEST_CASE("xavier initialization respects the uniform fan bound") {
  std::mt19937_64 eng(101);
  LayerStack<double> stack;
  stack.layers.emplace_back(Dense<double>(50, 30));
  init_xavier(stack, eng);
  const auto& d = std::get<Dense<double>>(stack.layers[0]);
  const double limit = std::sqrt(6.0 / 80.0);
  CHECK(d.weight.cwiseAbs().maxCoeff() <= limit);
  CHECK(d.weight.cwiseAbs().maxCoeff() > 0.9 * limit);
  CHECK(d.bias.cwiseAbs().maxCoeff() == 0.0);

  // Same seed reproduces; the draws fill the weight in storage order.
  std::mt19937_64 again(101);
  LayerStack<double> copy;
  copy.layers.emplace_back(Dense<double>(50, 30));
  init_xavier(copy, again);
  CHECK(std::get<Dense<double>>(copy.layers[0]).weight == d.weight);

  std::mt19937_64 manual(101);
  CHECK(d.weight(0, 0) == uniform_range(manual, -limit, limit));
  CHECK(d.weight(1, 0) == uniform_range(manual, -limit, limit));
  CHECK(d.weight(2, 0) == uniform_range(manual, -limit, limit));
}

TEST_CASE("parameter collection names tensors by stack position") {
  LayerStack<double> stack;
  stack.layers.emplace_back(Dense<double>(2, 3));
  stack.layers.emplace_back(BatchNorm<double>(3));
  stack.layers.emplace_back(Relu<double>{});
  stack.layers.emplace_back(Dropout<double>(0.4));
  stack.layers.emplace_back(Dense<double>(3, 2));

  std::vector<ParamRef<double>> params;
  collect_params(stack, "trunk", params);
  REQUIRE(params.size() == 6);
  CHECK(params[0].name == "trunk.0.weight");
  CHECK(params[1].name == "trunk.0.bias");
  CHECK(params[2].name == "trunk.1.gamma");
  CHECK(params[3].name == "trunk.1.beta");
  CHECK(params[4].name == "trunk.4.weight");
  CHECK(params[5].name == "trunk.4.bias");
  CHECK(count_parameters(params) == 6 + 3 + 3 + 3 + 6 + 2);

  std::vector<ParamRef<double>> state;
  collect_state(stack, "trunk", state);
  REQUIRE(state.size() == 2);
  CHECK(state[0].name == "trunk.1.running_mean");
  CHECK(state[1].name == "trunk.1.running_var");

  std::get<Dense<double>>(stack.layers[0]).grad_weight.setOnes();
  zero_grads(params);
  CHECK(std::get<Dense<double>>(stack.layers[0]).grad_weight.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the learning rate drops at half and at ninety percent of training") {
  const LrSchedule s60{1e-3, 60};
  CHECK(lr_at(s60, 0) == 1e-3);
  CHECK(lr_at(s60, 29) == 1e-3);
  CHECK(lr_at(s60, 30) == 1e-4);
  CHECK(lr_at(s60, 53) == 1e-4);
  CHECK(lr_at(s60, 54) == 1e-5);
  CHECK(lr_at(s60, 59) == 1e-5);

  const LrSchedule s10{1e-3, 10};
  CHECK(lr_at(s10, 9) == 1e-5);

  CHECK_THROWS_AS(lr_at(s60, -1), std::out_of_range);
  CHECK_THROWS_AS(lr_at(s60, 60), std::out_of_range);
}

TEST_CASE("dense chain cost is the sum of consecutive width products") {
  const int widths[] = {4, 8, 2};
  CHECK(layer_chain_flops(widths) == 48);
  const int pair[] = {3, 5};
  CHECK(layer_chain_flops(pair) == 15);
  const int single[] = {7};
  CHECK(layer_chain_flops(single) == 0);
  CHECK(layer_chain_flops({}) == 0);
}

TEST_CASE("the gradient checker rejects a non-positive stride") {
  double w = 1.0, g = 0.0;
  std::vector<ParamRef<double>> params{{"w", &w, &g, 1}};
  CHECK_THROWS_AS(max_relative_gradient_error(params, [] { return 0.0; }, 1e-5, 0),
                  std::invalid_argument);
}
