#include "engage/models.hpp"

#include <algorithm>
#include <cmath>

#include "engage/rng.hpp"
#include "json.hpp"

namespace engage {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::lstm_net: return "lstm";
    case Variant::dnn_net: return "dnn";
    case Variant::random_forest: return "rf";
    case Variant::logistic_regression: return "lr";
  }
  throw std::logic_error("unreachable");
}

Variant variant_from(std::string_view name) {
  if (name == "lstm") return Variant::lstm_net;
  if (name == "dnn") return Variant::dnn_net;
  if (name == "rf") return Variant::random_forest;
  if (name == "lr") return Variant::logistic_regression;
  throw std::invalid_argument("unknown model '" + std::string(name) +
                              "' (valid: lstm, dnn, rf, lr)");
}

std::string model_filename(Variant v, int M, int gamma, int fold) {
  return variant_name(v) + "_M" + std::to_string(M) + "_g" + std::to_string(gamma) + "_fold" +
         std::to_string(fold) + ".model.json";
}

namespace {

void check_config(const ModelConfig& c) {
  if (c.M < 1) throw std::invalid_argument("M must be >= 1");
  if (c.epochs < 1 || c.lr_epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (c.tree_count < 1) throw std::invalid_argument("tree_count must be >= 1");
  if (c.max_depth < 1 || c.min_leaf < 1) throw std::invalid_argument("bad tree limits");
  if (c.l2_lambda < 0) throw std::invalid_argument("l2_lambda must be >= 0");
}

Eigen::MatrixXd design_matrix(std::span<const DatasetItem> items, const Normalizer& norm) {
  Eigen::MatrixXd X(norm.dims(), static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto v = norm.apply(items[i]);
    for (int d = 0; d < norm.dims(); ++d) X(d, static_cast<Eigen::Index>(i)) = v[d];
  }
  return X;
}

Eigen::VectorXd label_vector(std::span<const DatasetItem> items) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) y[static_cast<Eigen::Index>(i)] = items[i].label;
  return y;
}

// Minibatch Adam over shuffled epochs. l2_lambda > 0 adds a weight-decay
// gradient on every ".W" array, leaving biases alone.
void train_graph(nn::Graph& graph, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int epochs,
                 int batch_size, const nn::AdamConfig& adam, double l2_lambda,
                 std::uint64_t seed) {
  const Eigen::Index n = X.cols();
  nn::AdamState state = nn::AdamState::like(graph.params(), adam);
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;

  const Eigen::Index b = std::min<Eigen::Index>(batch_size, n);
  Eigen::MatrixXd Xb(X.rows(), b);
  Eigen::VectorXd yb(b);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (Eigen::Index start = 0, batch_no = 0; start < n; start += b, ++batch_no) {
      const Eigen::Index take = std::min(b, n - start);
      if (Xb.cols() != take) {
        Xb.resize(X.rows(), take);
        yb.resize(take);
      }
      for (Eigen::Index i = 0; i < take; ++i) {
        Xb.col(i) = X.col(order[start + i]);
        yb[i] = y[order[start + i]];
      }
      nn::ParamStore grads = graph.backward(Xb, yb);
      if (!std::isfinite(graph.last_loss())) {
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_no));
      }
      if (l2_lambda > 0) {
        for (std::size_t e = 0; e < grads.size(); ++e) {
          if (grads[e].name.size() > 2 &&
              grads[e].name.compare(grads[e].name.size() - 2, 2, ".W") == 0) {
            grads[e].value += l2_lambda * graph.params()[e].value;
          }
        }
      }
      nn::adam_step(graph.params(), grads, state);
    }
  }
}

}  // namespace

TrainedModel train_model(std::span<const DatasetItem> train, const ModelConfig& config) {
  check_config(config);
  if (train.empty()) throw std::invalid_argument("empty training slice");
  for (const auto& item : train) {
    if (static_cast<int>(item.deltas.size()) != config.M) {
      throw std::invalid_argument("training item delta width does not match config M");
    }
  }

  TrainedModel model;
  model.config_ = config;
  model.norm_ = Normalizer::fit(train, config.M);

  switch (config.variant) {
    case Variant::lstm_net: {
      auto graph = nn::make_lstm_graph(config.M, 7, config.lstm_hidden, config.feature_dense,
                                       config.head, derive_seed(config.seed, "init/lstm"));
      train_graph(*graph, design_matrix(train, model.norm_), label_vector(train), config.epochs,
                  config.batch_size, config.adam, 0.0, derive_seed(config.seed, "train/lstm"));
      model.graph_ = std::move(graph);
      break;
    }
    case Variant::dnn_net: {
      auto graph = nn::make_dnn_graph(config.M + 7, config.dnn_layers,
                                      derive_seed(config.seed, "init/dnn"));
      train_graph(*graph, design_matrix(train, model.norm_), label_vector(train), config.epochs,
                  config.batch_size, config.adam, 0.0, derive_seed(config.seed, "train/dnn"));
      model.graph_ = std::move(graph);
      break;
    }
    case Variant::logistic_regression: {
      auto graph =
          nn::make_dnn_graph(config.M + 7, {}, derive_seed(config.seed, "init/lr"));
      const Eigen::MatrixXd X = design_matrix(train, model.norm_);
      train_graph(*graph, X, label_vector(train), config.lr_epochs,
                  static_cast<int>(X.cols()), config.adam, config.l2_lambda,
                  derive_seed(config.seed, "train/lr"));
      model.graph_ = std::move(graph);
      break;
    }
    case Variant::random_forest: {
      std::vector<std::vector<double>> X;
      X.reserve(train.size());
      std::vector<int> y;
      y.reserve(train.size());
      for (const auto& item : train) {
        X.push_back(model.norm_.apply(item));
        y.push_back(item.label);
      }
      rf::ForestConfig fc{config.tree_count, config.max_depth, config.min_leaf,
                          derive_seed(config.seed, "forest")};
      model.forest_ = std::make_shared<rf::Forest>(rf::train_forest(X, y, fc));
      break;
    }
  }
  return model;
}

TrainedModel train_lstm_net(std::span<const DatasetItem> train, ModelConfig config) {
  config.variant = Variant::lstm_net;
  return train_model(train, config);
}
TrainedModel train_dnn_net(std::span<const DatasetItem> train, ModelConfig config) {
  config.variant = Variant::dnn_net;
  return train_model(train, config);
}
TrainedModel train_random_forest(std::span<const DatasetItem> train, ModelConfig config) {
  config.variant = Variant::random_forest;
  return train_model(train, config);
}
TrainedModel train_logreg(std::span<const DatasetItem> train, ModelConfig config) {
  config.variant = Variant::logistic_regression;
  return train_model(train, config);
}

double TrainedModel::predict_proba(const DatasetItem& item) const {
  const auto v = norm_.apply(item);
  if (forest_) return forest_->predict(v.data());
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
  return graph_->score(x);
}

double predict_proba(const TrainedModel& model, const DatasetItem& item) {
  return model.predict_proba(item);
}

// ---- serialization -----------------------------------------------------

namespace {

constexpr int kSchemaVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["variant"] = variant_name(c.variant);
  j["M"] = c.M;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["adam"] = {{"lr", c.adam.lr},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon}};
  j["lstm_hidden"] = c.lstm_hidden;
  j["feature_dense"] = c.feature_dense;
  j["head"] = c.head;
  j["dnn_layers"] = c.dnn_layers;
  j["tree_count"] = c.tree_count;
  j["max_depth"] = c.max_depth;
  j["min_leaf"] = c.min_leaf;
  j["l2_lambda"] = c.l2_lambda;
  j["lr_epochs"] = c.lr_epochs;
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from(j.at("variant").get<std::string>());
  c.M = j.at("M").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  const auto& a = j.at("adam");
  c.adam.lr = a.at("lr").get<double>();
  c.adam.beta1 = a.at("beta1").get<double>();
  c.adam.beta2 = a.at("beta2").get<double>();
  c.adam.epsilon = a.at("epsilon").get<double>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.feature_dense = j.at("feature_dense").get<int>();
  c.head = j.at("head").get<std::vector<int>>();
  c.dnn_layers = j.at("dnn_layers").get<std::vector<int>>();
  c.tree_count = j.at("tree_count").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.min_leaf = j.at("min_leaf").get<int>();
  c.l2_lambda = j.at("l2_lambda").get<double>();
  c.lr_epochs = j.at("lr_epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::unique_ptr<nn::Graph> graph_for_config(const ModelConfig& c) {
  switch (c.variant) {
    case Variant::lstm_net:
      return nn::make_lstm_graph(c.M, 7, c.lstm_hidden, c.feature_dense, c.head, 0);
    case Variant::dnn_net:
      return nn::make_dnn_graph(c.M + 7, c.dnn_layers, 0);
    case Variant::logistic_regression:
      return nn::make_dnn_graph(c.M + 7, {}, 0);
    default:
      throw std::logic_error("graph_for_config: not a net variant");
  }
}

}  // namespace

std::string TrainedModel::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["variant"] = variant_name(config_.variant);
  j["config"] = config_to_json(config_);
  j["normalizer"] = {{"M", norm_.window()}, {"mean", norm_.mean()}, {"stddev", norm_.stddev()}};
  if (graph_) {
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t e = 0; e < graph_->params().size(); ++e) {
      const auto& entry = graph_->params()[e];
      std::vector<double> data(entry.value.data(), entry.value.data() + entry.value.size());
      params.push_back({{"name", entry.name},
                        {"rows", entry.value.rows()},
                        {"cols", entry.value.cols()},
                        {"data", data}});
    }
    j["params"] = std::move(params);
  }
  if (forest_) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest_->trees) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : tree.nodes) {
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf_value});
      }
      trees.push_back(std::move(nodes));
    }
    j["forest"] = {{"dims", forest_->dims}, {"trees", std::move(trees)}};
  }
  return j.dump(2) + "\n";
}

TrainedModel TrainedModel::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("corrupt model file: ") + e.what());
  }
  try {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion) {
      throw SchemaError("unsupported model schema_version");
    }
    TrainedModel model;
    model.config_ = config_from_json(j.at("config"));
    const auto& nj = j.at("normalizer");
    model.norm_ = Normalizer::from_moments(nj.at("M").get<int>(),
                                           nj.at("mean").get<std::vector<double>>(),
                                           nj.at("stddev").get<std::vector<double>>());
    if (model.config_.variant == Variant::random_forest) {
      const auto& fj = j.at("forest");
      auto forest = std::make_shared<rf::Forest>();
      forest->dims = fj.at("dims").get<int>();
      for (const auto& tj : fj.at("trees")) {
        rf::Tree tree;
        for (const auto& njn : tj) {
          rf::TreeNode n;
          n.feature = njn.at(0).get<int>();
          n.threshold = njn.at(1).get<double>();
          n.left = njn.at(2).get<int>();
          n.right = njn.at(3).get<int>();
          n.leaf_value = njn.at(4).get<double>();
          tree.nodes.push_back(n);
        }
        forest->trees.push_back(std::move(tree));
      }
      model.forest_ = std::move(forest);
    } else {
      auto graph = graph_for_config(model.config_);
      const auto& pj = j.at("params");
      if (pj.size() != graph->params().size()) throw SchemaError("parameter array list mismatch");
      for (std::size_t e = 0; e < graph->params().size(); ++e) {
        auto& entry = graph->params()[e];
        const auto& ej = pj.at(e);
        if (ej.at("name").get<std::string>() != entry.name ||
            ej.at("rows").get<Eigen::Index>() != entry.value.rows() ||
            ej.at("cols").get<Eigen::Index>() != entry.value.cols()) {
          throw SchemaError("parameter array mismatch at '" + entry.name + "'");
        }
        const auto data = ej.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != entry.value.size()) {
          throw SchemaError("parameter data size mismatch at '" + entry.name + "'");
        }
        std::copy(data.begin(), data.end(), entry.value.data());
      }
      model.graph_ = std::move(graph);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("corrupt model file: ") + e.what());
  }
}

}  // namespace engage
