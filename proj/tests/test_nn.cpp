#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "engage/nn.hpp"
#include "engage/rng.hpp"

using namespace engage;
using namespace engage::nn;

namespace {

Eigen::MatrixXd random_batch(Rng& rng, int dim, int n) {
  Eigen::MatrixXd X(dim, n);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < n; ++j) X(i, j) = rng.normal();
  }
  return X;
}

Eigen::VectorXd random_labels(Rng& rng, int n) {
  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j) y(j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return y;
}

}  // namespace

TEST_CASE("sigmoid is stable in both tails") {
  CHECK(sigmoid(0.0) == 0.5);
  const double lo = sigmoid(-745.0);
  CHECK(lo > 0.0);
  CHECK(lo <= 1e-300);
  // 1 + e^-745 rounds to 1 in doubles, so the upper tail saturates exactly.
  CHECK(sigmoid(745.0) == 1.0);
  CHECK(std::isfinite(sigmoid(745.0)));
  CHECK(sigmoid(2.0) == doctest::Approx(1.0 - sigmoid(-2.0)).epsilon(1e-15));

  Eigen::MatrixXd z(1, 3);
  z << -1.0, 0.0, 1.0;
  const Eigen::MatrixXd s = sigmoid(z);
  CHECK(s(0, 1) == 0.5);
  CHECK(s(0, 0) == sigmoid(-1.0));
  CHECK(s(0, 2) == sigmoid(1.0));
}

TEST_CASE("relu clamps negatives") {
  Eigen::MatrixXd z(1, 3);
  z << -1.0, 0.0, 2.0;
  const Eigen::MatrixXd r = relu(z);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 2.0);
}

TEST_CASE("dense_forward is the affine map") {
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  Eigen::MatrixXd W(2, 2);
  W << 1.0, 1.0, 0.0, 1.0;
  Eigen::VectorXd b(2);
  b << 0.0, 1.0;
  const Eigen::VectorXd out = dense_forward(x, W, b);
  CHECK(out(0) == 3.0);
  CHECK(out(1) == 3.0);

  const Eigen::VectorXd identity =
      dense_forward(x, Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2));
  CHECK((identity.array() == x.array()).all());

  CHECK_THROWS_AS(dense_forward(x, Eigen::MatrixXd::Identity(3, 3), b),
                  std::invalid_argument);
}

TEST_CASE("bce_loss hand values and clamping") {
  CHECK(bce_loss(0.5, 1.0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(bce_loss(0.5, 0.0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(bce_loss(0.9, 0.0) == doctest::Approx(2.3025850929940455).epsilon(1e-15));
  CHECK(bce_loss(1.0, 1.0) <= 1.1e-12);  // clamped at 1 - 1e-12
  CHECK(bce_loss(0.0, 0.0) <= 1.1e-12);
  CHECK(std::isfinite(bce_loss(0.0, 1.0)));  // clamp prevents infinity
  CHECK(bce_loss(0.0, 1.0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  Eigen::VectorXd p(2), y(2);
  p << 0.5, 0.9;
  y << 1.0, 0.0;
  CHECK(mean_bce(p, y) ==
        doctest::Approx((0.6931471805599453 + 2.3025850929940455) / 2).epsilon(1e-15));
}

TEST_CASE("bce_loss decreases monotonically as p approaches y") {
  double prev = bce_loss(0.05, 1.0);
  for (double p = 0.1; p < 1.0; p += 0.05) {
    const double cur = bce_loss(p, 1.0);
    CHECK(cur < prev);
    prev = cur;
  }
  prev = bce_loss(0.95, 0.0);
  for (double p = 0.9; p > 0.0; p -= 0.05) {
    const double cur = bce_loss(p, 0.0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("adam_step matches the hand-iterated reference") {
  ParamStore params;
  params.add("w", 1, 1).setZero();
  ParamStore grads = params.zeros_like();
  grads.at("w")(0, 0) = 1.0;
  auto state = AdamState::like(params, AdamConfig{});

  adam_step(params, grads, state);
  CHECK(state.step == 1);
  // m_hat = v_hat = 1 after bias correction, so theta = -lr / (1 + eps)
  CHECK(params.at("w")(0, 0) == doctest::Approx(-0.0009999999900000003).epsilon(1e-12));

  adam_step(params, grads, state);
  CHECK(std::abs(params.at("w")(0, 0) - (-0.002)) < 1e-6);
  CHECK(params.at("w")(0, 0) == doctest::Approx(-0.001999999979999993).epsilon(1e-12));
}

TEST_CASE("adam_step leaves parameters alone for zero gradient") {
  ParamStore params;
  params.add("w", 2, 2).setConstant(0.25);
  const ParamStore grads = params.zeros_like();
  auto state = AdamState::like(params, AdamConfig{});
  adam_step(params, grads, state);
  CHECK(params.at("w")(0, 0) == 0.25);
  CHECK(params.at("w")(1, 1) == 0.25);
}

TEST_CASE("adam_step rejects non-finite gradients by name") {
  ParamStore params;
  params.add("first", 1, 1).setZero();
  params.add("broken.W", 1, 1).setZero();
  ParamStore grads = params.zeros_like();
  grads.at("broken.W")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto state = AdamState::like(params, AdamConfig{});
  try {
    adam_step(params, grads, state);
    FAIL("expected TrainError");
  } catch (const TrainError& e) {
    CHECK(std::string(e.what()).find("broken.W") != std::string::npos);
  }
}

TEST_CASE("lstm_forward with all-zero parameters returns a zero state") {
  LstmCell cell;
  cell.hidden = 3;
  cell.W = Eigen::MatrixXd::Zero(12, 2);
  cell.U = Eigen::MatrixXd::Zero(12, 3);
  cell.b = Eigen::VectorXd::Zero(12);
  Eigen::MatrixXd seq = Eigen::MatrixXd::Random(2, 5);
  const Eigen::VectorXd h = lstm_forward(seq, cell);
  CHECK(h.norm() == 0.0);
}

TEST_CASE("lstm_forward single-step scalar cell matches the hand recurrence") {
  // gate order in the fused blocks: input, forget, candidate, output
  LstmCell cell;
  cell.hidden = 1;
  cell.W = Eigen::MatrixXd(4, 1);
  cell.W << 0.5, 0.25, 1.0, -0.5;
  cell.U = Eigen::MatrixXd::Zero(4, 1);
  cell.b = Eigen::VectorXd::Zero(4);

  Eigen::MatrixXd seq(1, 1);
  seq << 1.0;
  const Eigen::VectorXd h = lstm_forward(seq, cell);
  // i = sigmoid(0.5), g = tanh(1), c1 = i*g, o = sigmoid(-0.5), h1 = o*tanh(c1)
  CHECK(h(0) == doctest::Approx(0.16667476437297848).epsilon(1e-15));
}

TEST_CASE("lstm_forward with an open forget gate only re-reads the output gate") {
  LstmCell cell;
  cell.hidden = 1;
  cell.W = Eigen::MatrixXd(4, 1);
  cell.W << 0.3, 0.0, 0.8, 0.2;
  cell.U = Eigen::MatrixXd::Zero(4, 1);
  cell.b = Eigen::VectorXd::Zero(4);
  cell.b(1) = 100.0;  // forget gate pinned at ~1

  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  Eigen::MatrixXd two(1, 2);
  two << 1.0, 0.0;  // second step carries no input

  const double h1 = lstm_forward(one, cell)(0);
  const double h2 = lstm_forward(two, cell)(0);
  CHECK(h1 == doctest::Approx(0.20012136165981323).epsilon(1e-12));
  // candidate at step 2 is tanh(0) = 0 and f ~ 1, so c2 ~ c1; only o changes
  CHECK(h2 == doctest::Approx(0.1819834373992716).epsilon(1e-10));
  CHECK(h1 != h2);
}

TEST_CASE("lstm_forward validates its input") {
  LstmCell cell;
  cell.hidden = 2;
  cell.W = Eigen::MatrixXd::Zero(8, 1);
  cell.U = Eigen::MatrixXd::Zero(8, 2);
  cell.b = Eigen::VectorXd::Zero(8);
  Eigen::MatrixXd empty(1, 0);
  CHECK_THROWS_AS(lstm_forward(empty, cell), std::invalid_argument);
  Eigen::MatrixXd wrong(3, 2);
  wrong.setZero();
  CHECK_THROWS_AS(lstm_forward(wrong, cell), std::invalid_argument);
}

TEST_CASE("lstm hidden states stay inside (-1, 1)") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    LstmCell cell;
    cell.hidden = 1 + static_cast<int>(rng.below(4));
    const int input = 1 + static_cast<int>(rng.below(3));
    cell.W = 4.0 * random_batch(rng, 4 * cell.hidden, input);
    cell.U = 4.0 * random_batch(rng, 4 * cell.hidden, cell.hidden);
    cell.b = 4.0 * random_batch(rng, 4 * cell.hidden, 1).col(0);
    const Eigen::MatrixXd seq = 10.0 * random_batch(rng, input, 1 + rng.below(6));
    const Eigen::VectorXd h = lstm_forward(seq, cell);
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      CHECK(h(i) > -1.0);
      CHECK(h(i) < 1.0);
    }
  }
}

TEST_CASE("backward of a single sigmoid neuron matches the chain rule") {
  auto graph = make_dnn_graph(1, {}, 0);
  graph->params().at("out.W").setZero();
  graph->params().at("out.b").setZero();

  Eigen::MatrixXd X(1, 1);
  X << 1.0;
  Eigen::VectorXd y(1);
  y << 1.0;
  const auto grads = graph->backward(X, y);
  // dL/dw = (sigmoid(0) - y) * x = -0.5
  CHECK(grads.at("out.W")(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(grads.at("out.b")(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(graph->last_loss() == doctest::Approx(0.6931471805599453).epsilon(1e-15));
}

TEST_CASE("zero input batch produces zero first-layer weight gradients") {
  auto graph = make_dnn_graph(2, {3}, 9);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Zero(2, 4);
  Eigen::VectorXd y(4);
  y << 1, 0, 1, 0;
  const auto grads = graph->backward(X, y);
  CHECK(grads.at("dense0.W").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zeroed scoring graph outputs exactly one half") {
  auto graph = make_dnn_graph(3, {4}, 3);
  for (std::size_t i = 0; i < graph->params().size(); ++i) {
    graph->params()[i].value.setZero();
  }
  Eigen::VectorXd x(3);
  x << 0.7, -1.2, 3.4;
  CHECK(graph->score(x) == 0.5);
}

TEST_CASE("graph forward and score agree") {
  Rng rng(66);
  auto dnn = make_dnn_graph(5, {6, 3}, 21);
  auto lstm = make_lstm_graph(3, 2, 4, 3, {5}, 22);
  for (Graph* graph : {dnn.get(), lstm.get()}) {
    const Eigen::MatrixXd X = random_batch(rng, graph->input_dim(), 7);
    const Eigen::VectorXd out = graph->forward(X);
    for (int j = 0; j < 7; ++j) {
      CHECK(out(j) == doctest::Approx(graph->score(X.col(j))).epsilon(1e-15));
      CHECK(out(j) > 0.0);
      CHECK(out(j) < 1.0);
    }
  }
}

TEST_CASE("parameter initialization is seed-deterministic") {
  const auto a = make_dnn_graph(4, {8, 4}, 123);
  const auto b = make_dnn_graph(4, {8, 4}, 123);
  const auto c = make_dnn_graph(4, {8, 4}, 124);
  REQUIRE(a->params().size() == b->params().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a->params().size(); ++i) {
    CHECK(a->params()[i].name == b->params()[i].name);
    CHECK((a->params()[i].value.array() == b->params()[i].value.array()).all());
    if (!(a->params()[i].value.array() == c->params()[i].value.array()).all()) any_diff = true;
  }
  CHECK(any_diff);

  // LSTM forget-gate bias starts at one
  const auto g = make_lstm_graph(3, 2, 4, 3, {5}, 7);
  const auto& lb = g->params().at("lstm.b");
  for (int i = 0; i < 4; ++i) {
    CHECK(lb(4 + i, 0) == 1.0);  // rows [h, 2h) hold the forget block
    CHECK(lb(i, 0) == 0.0);
  }
}

TEST_CASE("finite differences confirm the analytic gradients") {
  Rng rng(17);

  // affine model: central differences are exact up to rounding
  auto linear = make_dnn_graph(4, {}, 3);
  const Eigen::MatrixXd Xl = random_batch(rng, 4, 16);
  const Eigen::VectorXd yl = random_labels(rng, 16);
  CHECK(finite_diff_check(*linear, Xl, yl) < 1e-9);

  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    auto dnn = make_dnn_graph(7, {8, 4}, seed);
    const Eigen::MatrixXd X = random_batch(rng, 7, 12);
    const Eigen::VectorXd y = random_labels(rng, 12);
    CHECK(finite_diff_check(*dnn, X, y, 1e-5, 64, seed) < 1e-4);

    auto lstm = make_lstm_graph(4, 3, 5, 4, {6}, seed);
    const Eigen::MatrixXd Xs = random_batch(rng, 7, 12);
    CHECK(finite_diff_check(*lstm, Xs, y, 1e-5, 64, seed) < 1e-4);
  }
}
