#include "engage/nn.hpp"

#include <algorithm>
#include <cmath>

#include "engage/rng.hpp"

namespace engage::nn {

// ---- parameter store ---------------------------------------------------

Eigen::MatrixXd& ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  entries_.push_back({std::move(name), Eigen::MatrixXd::Zero(rows, cols)});
  return entries_.back().value;
}

Eigen::MatrixXd& ParamStore::at(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw std::out_of_range("no parameter array named '" + std::string(name) + "'");
}

const Eigen::MatrixXd& ParamStore::at(std::string_view name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.value.rows(), e.value.cols());
  return out;
}

std::size_t ParamStore::coefficient_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

AdamState AdamState::like(const ParamStore& params, const AdamConfig& config) {
  AdamState st;
  st.config = config;
  st.m = params.zeros_like();
  st.v = params.zeros_like();
  return st;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("gradient store shape mismatch");
  state.step += 1;
  const auto& hp = state.config;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads[i].value;
    if (grads[i].name != params[i].name || g.rows() != params[i].value.rows() ||
        g.cols() != params[i].value.cols()) {
      throw std::invalid_argument("gradient store shape mismatch at '" + params[i].name + "'");
    }
    if (!g.allFinite()) {
      throw TrainError("non-finite gradient in parameter array '" + params[i].name + "'");
    }
    auto& m = state.m[i].value;
    auto& v = state.v[i].value;
    m = hp.beta1 * m + (1.0 - hp.beta1) * g;
    v = hp.beta2 * v + (1.0 - hp.beta2) * g.cwiseProduct(g);
    params[i].value.array() -=
        hp.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hp.epsilon);
  }
}

// ---- primitives ----------------------------------------------------------

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::VectorXd dense_forward(const Eigen::VectorXd& x, const Eigen::MatrixXd& W,
                              const Eigen::VectorXd& b) {
  if (W.cols() != x.size() || W.rows() != b.size()) {
    throw std::invalid_argument("dense_forward: shape mismatch");
  }
  return W * x + b;
}

namespace {
constexpr double kProbClamp = 1e-12;
}

double bce_loss(double p, double y) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

double mean_bce(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
  if (p.size() != y.size()) throw std::invalid_argument("mean_bce: size mismatch");
  double s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) s += bce_loss(p[i], y[i]);
  return s / static_cast<double>(p.size());
}

// ---- LSTM cell -------------------------------------------------------------

namespace {

struct LstmStepCache {
  Eigen::MatrixXd I, F, G, O;  // gate activations, h x B
  Eigen::MatrixXd c_prev, TC;  // previous cell state, tanh of new cell state
  Eigen::MatrixXd h_prev;
};

// H and C are updated in place; cache may be null.
void lstm_step(const Eigen::MatrixXd& W, const Eigen::MatrixXd& U, const Eigen::VectorXd& b,
               const Eigen::MatrixXd& Xt, Eigen::MatrixXd& H, Eigen::MatrixXd& C,
               LstmStepCache* cache) {
  const Eigen::Index h = U.cols();
  Eigen::MatrixXd Z = W * Xt;
  Z.noalias() += U * H;
  Z.colwise() += b;
  Eigen::MatrixXd I = sigmoid(Z.topRows(h));
  Eigen::MatrixXd F = sigmoid(Z.middleRows(h, h));
  Eigen::MatrixXd G = Z.middleRows(2 * h, h).array().tanh().matrix();
  Eigen::MatrixXd O = sigmoid(Z.bottomRows(h));
  if (cache) {
    cache->c_prev = C;
    cache->h_prev = H;
  }
  C = F.cwiseProduct(C) + I.cwiseProduct(G);
  Eigen::MatrixXd TC = C.array().tanh().matrix();
  H = O.cwiseProduct(TC);
  if (cache) {
    cache->I = std::move(I);
    cache->F = std::move(F);
    cache->G = std::move(G);
    cache->O = std::move(O);
    cache->TC = std::move(TC);
  }
}

}  // namespace

Eigen::VectorXd lstm_forward(const Eigen::MatrixXd& sequence, const LstmCell& cell) {
  const int h = cell.hidden;
  if (sequence.cols() == 0) throw std::invalid_argument("lstm_forward: empty sequence");
  if (cell.W.rows() != 4 * h || cell.U.rows() != 4 * h || cell.U.cols() != h ||
      cell.b.size() != 4 * h || cell.W.cols() != sequence.rows()) {
    throw std::invalid_argument("lstm_forward: shape mismatch");
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(h, 1);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(h, 1);
  for (Eigen::Index t = 0; t < sequence.cols(); ++t) {
    lstm_step(cell.W, cell.U, cell.b, sequence.col(t), H, C, nullptr);
  }
  return H.col(0);
}

// ---- initialization --------------------------------------------------------

namespace {

void glorot_fill(Eigen::MatrixXd& m, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = rng.uniform(-limit, limit);
    }
  }
}

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& a) {
  return (a.array() > 0.0).cast<double>().matrix();
}

// ---- feedforward graph -----------------------------------------------------

class DnnGraph final : public Graph {
 public:
  DnnGraph(int input_dim, std::vector<int> hidden, std::uint64_t seed)
      : hidden_(std::move(hidden)) {
    input_dim_ = input_dim;
    Rng rng(seed);
    int in = input_dim;
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      const int out = hidden_[l];
      auto& W = params_.add("dense" + std::to_string(l) + ".W", out, in);
      glorot_fill(W, in, out, rng);
      params_.add("dense" + std::to_string(l) + ".b", out, 1);
      in = out;
    }
    auto& W = params_.add("out.W", 1, in);
    glorot_fill(W, in, 1, rng);
    params_.add("out.b", 1, 1);
  }

  Eigen::VectorXd forward(const Eigen::MatrixXd& X) override {
    acts_.clear();
    acts_.push_back(X);
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      Eigen::MatrixXd Z = params_[2 * l].value * acts_.back();
      Z.colwise() += params_[2 * l + 1].value.col(0);
      acts_.push_back(relu(Z));
    }
    Eigen::MatrixXd Z = params_[2 * hidden_.size()].value * acts_.back();
    Z.colwise() += params_[2 * hidden_.size() + 1].value.col(0);
    probs_ = sigmoid(Z).row(0).transpose();
    return probs_;
  }

  ParamStore backward(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override {
    const Eigen::VectorXd p = forward(X);
    last_loss_ = mean_bce(p, y);
    ParamStore grads = params_.zeros_like();
    const double inv_b = 1.0 / static_cast<double>(X.cols());

    // delta at the sigmoid unit's pre-activation
    Eigen::MatrixXd delta = ((p - y) * inv_b).transpose();  // 1 x B
    const std::size_t out_idx = 2 * hidden_.size();
    grads[out_idx].value.noalias() = delta * acts_.back().transpose();
    grads[out_idx + 1].value(0, 0) = delta.sum();
    Eigen::MatrixXd dA = params_[out_idx].value.transpose() * delta;

    for (std::size_t l = hidden_.size(); l-- > 0;) {
      const Eigen::MatrixXd dZ = dA.cwiseProduct(relu_mask(acts_[l + 1]));
      grads[2 * l].value.noalias() = dZ * acts_[l].transpose();
      grads[2 * l + 1].value = dZ.rowwise().sum();
      if (l > 0) dA = params_[2 * l].value.transpose() * dZ;
    }
    return grads;
  }

  double score(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      a = (params_[2 * l].value * a + params_[2 * l + 1].value.col(0)).cwiseMax(0.0);
    }
    const double z = (params_[2 * hidden_.size()].value * a)(0) +
                     params_[2 * hidden_.size() + 1].value(0, 0);
    return sigmoid(z);
  }

 private:
  std::vector<int> hidden_;
  std::vector<Eigen::MatrixXd> acts_;
  Eigen::VectorXd probs_;
};

// ---- recurrent graph ---------------------------------------------------

class LstmGraph final : public Graph {
 public:
  LstmGraph(int M, int feature_dim, int lstm_hidden, int feature_dense, std::vector<int> head,
            std::uint64_t seed)
      : M_(M), feat_dim_(feature_dim), h_(lstm_hidden), fd_(feature_dense),
        head_(std::move(head)) {
    input_dim_ = M + feature_dim;
    Rng rng(seed);
    auto& W = params_.add("lstm.W", 4 * h_, 1);
    glorot_fill(W, 1, h_, rng);
    auto& U = params_.add("lstm.U", 4 * h_, h_);
    glorot_fill(U, h_, h_, rng);
    auto& b = params_.add("lstm.b", 4 * h_, 1);
    b.block(h_, 0, h_, 1).setOnes();  // forget gate starts open
    auto& Wf = params_.add("feat.W", fd_, feat_dim_);
    glorot_fill(Wf, feat_dim_, fd_, rng);
    params_.add("feat.b", fd_, 1);
    int in = h_ + fd_;
    for (std::size_t l = 0; l < head_.size(); ++l) {
      auto& Wh = params_.add("head" + std::to_string(l) + ".W", head_[l], in);
      glorot_fill(Wh, in, head_[l], rng);
      params_.add("head" + std::to_string(l) + ".b", head_[l], 1);
      in = head_[l];
    }
    auto& Wo = params_.add("out.W", 1, in);
    glorot_fill(Wo, in, 1, rng);
    params_.add("out.b", 1, 1);
  }

  Eigen::VectorXd forward(const Eigen::MatrixXd& X) override {
    const Eigen::Index B = X.cols();
    const auto& W = params_.at("lstm.W");
    const auto& U = params_.at("lstm.U");
    const Eigen::VectorXd b = params_.at("lstm.b").col(0);

    steps_.assign(M_, LstmStepCache{});
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(h_, B);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(h_, B);
    for (int t = 0; t < M_; ++t) {
      lstm_step(W, U, b, X.row(t), H, C, &steps_[t]);
    }
    h_final_ = H;

    Eigen::MatrixXd Zf = params_.at("feat.W") * X.bottomRows(feat_dim_);
    Zf.colwise() += params_.at("feat.b").col(0);
    feat_act_ = relu(Zf);

    head_acts_.clear();
    Eigen::MatrixXd cat(h_ + fd_, B);
    cat.topRows(h_) = H;
    cat.bottomRows(fd_) = feat_act_;
    head_acts_.push_back(std::move(cat));
    for (std::size_t l = 0; l < head_.size(); ++l) {
      Eigen::MatrixXd Z = params_.at("head" + std::to_string(l) + ".W") * head_acts_.back();
      Z.colwise() += params_.at("head" + std::to_string(l) + ".b").col(0);
      head_acts_.push_back(relu(Z));
    }
    Eigen::MatrixXd Z = params_.at("out.W") * head_acts_.back();
    Z.colwise() += params_.at("out.b").col(0);
    probs_ = sigmoid(Z).row(0).transpose();
    return probs_;
  }

  ParamStore backward(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override {
    const Eigen::VectorXd p = forward(X);
    last_loss_ = mean_bce(p, y);
    ParamStore grads = params_.zeros_like();
    const double inv_b = 1.0 / static_cast<double>(X.cols());

    Eigen::MatrixXd delta = ((p - y) * inv_b).transpose();  // 1 x B
    grads.at("out.W").noalias() = delta * head_acts_.back().transpose();
    grads.at("out.b")(0, 0) = delta.sum();
    Eigen::MatrixXd dA = params_.at("out.W").transpose() * delta;

    for (std::size_t l = head_.size(); l-- > 0;) {
      const Eigen::MatrixXd dZ = dA.cwiseProduct(relu_mask(head_acts_[l + 1]));
      grads.at("head" + std::to_string(l) + ".W").noalias() =
          dZ * head_acts_[l].transpose();
      grads.at("head" + std::to_string(l) + ".b") = dZ.rowwise().sum();
      dA = params_.at("head" + std::to_string(l) + ".W").transpose() * dZ;
    }

    // split the concat gradient into the two branches
    Eigen::MatrixXd dH = dA.topRows(h_);
    const Eigen::MatrixXd dFeat = dA.bottomRows(fd_);

    const Eigen::MatrixXd dZf = dFeat.cwiseProduct(relu_mask(feat_act_));
    grads.at("feat.W").noalias() = dZf * X.bottomRows(feat_dim_).transpose();
    grads.at("feat.b") = dZf.rowwise().sum();

    const auto& U = params_.at("lstm.U");
    auto& gW = grads.at("lstm.W");
    auto& gU = grads.at("lstm.U");
    auto& gb = grads.at("lstm.b");
    Eigen::MatrixXd dC = Eigen::MatrixXd::Zero(h_, X.cols());
    for (int t = M_ - 1; t >= 0; --t) {
      const auto& s = steps_[t];
      const Eigen::MatrixXd dO = dH.cwiseProduct(s.TC);
      dC.array() += dH.array() * s.O.array() * (1.0 - s.TC.array().square());
      const Eigen::MatrixXd dI = dC.cwiseProduct(s.G);
      const Eigen::MatrixXd dG = dC.cwiseProduct(s.I);
      const Eigen::MatrixXd dF = dC.cwiseProduct(s.c_prev);

      Eigen::MatrixXd dZ(4 * h_, X.cols());
      dZ.topRows(h_) = dI.array() * s.I.array() * (1.0 - s.I.array());
      dZ.middleRows(h_, h_) = dF.array() * s.F.array() * (1.0 - s.F.array());
      dZ.middleRows(2 * h_, h_) = dG.array() * (1.0 - s.G.array().square());
      dZ.bottomRows(h_) = dO.array() * s.O.array() * (1.0 - s.O.array());

      gW.noalias() += dZ * X.row(t).transpose();
      gU.noalias() += dZ * s.h_prev.transpose();
      gb += dZ.rowwise().sum();

      dH.noalias() = U.transpose() * dZ;
      dC = dC.cwiseProduct(s.F);
    }
    return grads;
  }

  double score(const Eigen::VectorXd& x) const override {
    const auto& W = params_.at("lstm.W");
    const auto& U = params_.at("lstm.U");
    const Eigen::VectorXd b = params_.at("lstm.b").col(0);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(h_, 1);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(h_, 1);
    for (int t = 0; t < M_; ++t) {
      lstm_step(W, U, b, x.segment(t, 1), H, C, nullptr);
    }
    const Eigen::VectorXd h_end = H.col(0);
    Eigen::VectorXd feat =
        (params_.at("feat.W") * x.tail(feat_dim_) + params_.at("feat.b").col(0)).cwiseMax(0.0);
    Eigen::VectorXd a(h_ + fd_);
    a << h_end, feat;
    for (std::size_t l = 0; l < head_.size(); ++l) {
      a = (params_.at("head" + std::to_string(l) + ".W") * a +
           params_.at("head" + std::to_string(l) + ".b").col(0))
              .cwiseMax(0.0);
    }
    const double z = (params_.at("out.W") * a)(0) + params_.at("out.b")(0, 0);
    return sigmoid(z);
  }

 private:
  int M_, feat_dim_, h_, fd_;
  std::vector<int> head_;
  std::vector<LstmStepCache> steps_;
  Eigen::MatrixXd h_final_, feat_act_;
  std::vector<Eigen::MatrixXd> head_acts_;
  Eigen::VectorXd probs_;
};

}  // namespace

std::unique_ptr<Graph> make_dnn_graph(int input_dim, const std::vector<int>& hidden,
                                      std::uint64_t seed) {
  return std::make_unique<DnnGraph>(input_dim, hidden, seed);
}

std::unique_ptr<Graph> make_lstm_graph(int M, int feature_dim, int lstm_hidden, int feature_dense,
                                       const std::vector<int>& head, std::uint64_t seed) {
  return std::make_unique<LstmGraph>(M, feature_dim, lstm_hidden, feature_dense, head, seed);
}

double finite_diff_check(Graph& graph, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         double h, int max_coords_per_array, std::uint64_t seed) {
  const ParamStore analytic = graph.backward(X, y);
  Rng rng(derive_seed(seed, "fdcheck"));
  double worst = 0.0;
  for (std::size_t e = 0; e < graph.params().size(); ++e) {
    auto& value = graph.params()[e].value;
    const Eigen::Index n = value.size();
    std::vector<Eigen::Index> coords(n);
    for (Eigen::Index i = 0; i < n; ++i) coords[i] = i;
    if (n > max_coords_per_array) {
      // partial Fisher-Yates: the first max_coords entries become the sample
      for (int i = 0; i < max_coords_per_array; ++i) {
        std::swap(coords[i], coords[i + static_cast<Eigen::Index>(rng.below(n - i))]);
      }
      coords.resize(max_coords_per_array);
    }
    for (const Eigen::Index c : coords) {
      double* slot = value.data() + c;
      const double orig = *slot;
      *slot = orig + h;
      const double up = mean_bce(graph.forward(X), y);
      *slot = orig - h;
      const double down = mean_bce(graph.forward(X), y);
      *slot = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[e].value.data()[c];
      const double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  // restore caches to the unperturbed state
  graph.forward(X);
  return worst;
}

double gradcheck_probe(std::string_view model, std::uint64_t seed, int M, int feature_dim,
                       int batch) {
  if (M < 1 || batch < 1 || feature_dim < 0) {
    throw std::invalid_argument("gradcheck_probe: M and batch must be >= 1");
  }
  const int input_dim = M + feature_dim;
  std::unique_ptr<Graph> graph;
  if (model == "dnn") {
    graph = make_dnn_graph(input_dim, {8, 4}, derive_seed(seed, "gradcheck/init"));
  } else if (model == "lstm") {
    graph = make_lstm_graph(M, feature_dim, 6, 5, {4}, derive_seed(seed, "gradcheck/init"));
  } else {
    throw std::invalid_argument("gradcheck model must be dnn or lstm");
  }
  // Check at a generic point. Fresh graphs have zero biases, so an input that
  // silences a whole ReLU layer leaves the next pre-activation exactly on its
  // kink, where central differences are meaningless.
  Rng jitter(derive_seed(seed, "gradcheck/jitter"));
  for (std::size_t e = 0; e < graph->params().size(); ++e) {
    auto& v = graph->params()[e].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += jitter.uniform(-0.05, 0.05);
  }
  Rng rng(derive_seed(seed, "gradcheck/data"));
  Eigen::MatrixXd X(input_dim, batch);
  Eigen::VectorXd y(batch);
  for (int c = 0; c < batch; ++c) {
    for (int r = 0; r < input_dim; ++r) X(r, c) = rng.normal();
    y[c] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  return finite_diff_check(*graph, X, y, 1e-5, 64, seed);
}

}  // namespace engage::nn
