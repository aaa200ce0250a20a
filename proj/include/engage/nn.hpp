#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "engage/errors.hpp"

namespace engage::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Named parameter arrays in a fixed order. Everything is 64-bit.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Eigen::MatrixXd value;
  };

  Eigen::MatrixXd& add(std::string name, Eigen::Index rows, Eigen::Index cols);
  Eigen::MatrixXd& at(std::string_view name);
  const Eigen::MatrixXd& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  ParamStore zeros_like() const;
  std::size_t coefficient_count() const;

 private:
  std::vector<Entry> entries_;
};

struct AdamState {
  AdamConfig config;
  ParamStore m;
  ParamStore v;
  long step = 0;

  static AdamState like(const ParamStore& params, const AdamConfig& config);
};

// One update with bias correction: theta -= lr * m_hat / (sqrt(v_hat) + eps).
// A non-finite gradient throws TrainError naming the offending array.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

// Stable in both tails; never returns exactly 0 or 1 for finite input.
double sigmoid(double x);
Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z);
Eigen::MatrixXd relu(const Eigen::MatrixXd& z);

Eigen::VectorXd dense_forward(const Eigen::VectorXd& x, const Eigen::MatrixXd& W,
                              const Eigen::VectorXd& b);

// Binary cross entropy with p clamped to [1e-12, 1 - 1e-12].
double bce_loss(double p, double y);
double mean_bce(const Eigen::VectorXd& p, const Eigen::VectorXd& y);

// Fused-gate LSTM cell. Row blocks of W, U, b hold the input, forget,
// candidate and output gates in that order (h rows each).
struct LstmCell {
  Eigen::MatrixXd W;  // 4h x input_dim
  Eigen::MatrixXd U;  // 4h x h
  Eigen::VectorXd b;  // 4h
  int hidden = 0;
};

// Final hidden state after consuming the sequence (one step per column),
// starting from zero h and c.
Eigen::VectorXd lstm_forward(const Eigen::MatrixXd& sequence, const LstmCell& cell);

// A fixed scoring architecture with analytic reverse-mode gradients.
// Columns of X are items; the label vector aligns with columns.
class Graph {
 public:
  virtual ~Graph() = default;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  virtual Eigen::VectorXd forward(const Eigen::MatrixXd& X) = 0;

  // Gradients of the mean BCE over the batch; also records the loss.
  virtual ParamStore backward(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) = 0;

  // Stateless single-item score; safe to call concurrently on a const graph.
  virtual double score(const Eigen::VectorXd& x) const = 0;

  double last_loss() const { return last_loss_; }
  int input_dim() const { return input_dim_; }

 protected:
  ParamStore params_;
  double last_loss_ = std::numeric_limits<double>::quiet_NaN();
  int input_dim_ = 0;
};

// input -> dense+ReLU per hidden width -> dense(1) -> sigmoid. An empty
// hidden list gives plain logistic regression.
std::unique_ptr<Graph> make_dnn_graph(int input_dim, const std::vector<int>& hidden,
                                      std::uint64_t seed);

// Rows [0, M) of X feed the LSTM as a length-M sequence of scalars; rows
// [M, M + feature_dim) feed a dense+ReLU branch; the concatenated outputs run
// through the dense+ReLU head widths and a sigmoid unit.
std::unique_ptr<Graph> make_lstm_graph(int M, int feature_dim, int lstm_hidden, int feature_dense,
                                       const std::vector<int>& head, std::uint64_t seed);

// Central-difference check of backward() on a subsample of coordinates per
// parameter array. Returns the max relative error, with the relative error
// denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(Graph& graph, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         double h = 1e-5, int max_coords_per_array = 64, std::uint64_t seed = 0);

// Canned probe behind `engage gradcheck` and the python binding: builds a
// small instance of the named architecture ("dnn" or "lstm"), nudges it to a
// generic parameter point, and runs finite_diff_check on a random batch.
// Throws std::invalid_argument on an unknown model or non-positive sizes.
double gradcheck_probe(std::string_view model, std::uint64_t seed, int M, int feature_dim,
                       int batch);

}  // namespace engage::nn
