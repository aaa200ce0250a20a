#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "engage/featurizer.hpp"
#include "engage/forest.hpp"
#include "engage/nn.hpp"

namespace engage {

enum class Variant { lstm_net, dnn_net, random_forest, logistic_regression };

// Short names used by the CLI, model files and reports: lstm, dnn, rf, lr.
std::string variant_name(Variant v);
Variant variant_from(std::string_view name);  // throws std::invalid_argument listing the names

struct ModelConfig {
  Variant variant = Variant::dnn_net;
  int M = 5;

  // gradient-trained nets
  int epochs = 10;
  int batch_size = 32;
  nn::AdamConfig adam;

  // lstm variant
  int lstm_hidden = 32;
  int feature_dense = 32;
  std::vector<int> head{32, 16};

  // dnn variant
  std::vector<int> dnn_layers{64, 32, 16};

  // random forest
  int tree_count = 50;
  int max_depth = 16;
  int min_leaf = 2;

  // logistic regression: full-batch Adam with L2 on the weights (never the
  // intercept), loss = mean BCE + l2_lambda/2 * ||w||^2
  double l2_lambda = 1e-4;
  int lr_epochs = 200;

  std::uint64_t seed = 0;
};

// One trained classifier behind a uniform scoring interface. The fitted
// normalizer travels with the model, so predict_proba takes raw items.
class TrainedModel {
 public:
  double predict_proba(const DatasetItem& item) const;

  const ModelConfig& config() const { return config_; }
  const Normalizer& normalizer() const { return norm_; }

  std::string to_json() const;
  static TrainedModel from_json(std::string_view text);

  // accessors for tests
  const nn::Graph* graph() const { return graph_.get(); }
  const rf::Forest* forest() const { return forest_.get(); }

 private:
  friend TrainedModel train_model(std::span<const DatasetItem>, const ModelConfig&);
  ModelConfig config_;
  Normalizer norm_;
  std::shared_ptr<const nn::Graph> graph_;
  std::shared_ptr<const rf::Forest> forest_;
};

// Fits the normalizer on the training slice, then trains the configured
// variant. Deterministic for a fixed config (all randomness derives from
// config.seed).
TrainedModel train_model(std::span<const DatasetItem> train, const ModelConfig& config);

TrainedModel train_lstm_net(std::span<const DatasetItem> train, ModelConfig config);
TrainedModel train_dnn_net(std::span<const DatasetItem> train, ModelConfig config);
TrainedModel train_random_forest(std::span<const DatasetItem> train, ModelConfig config);
TrainedModel train_logreg(std::span<const DatasetItem> train, ModelConfig config);

double predict_proba(const TrainedModel& model, const DatasetItem& item);

// <variant>_M<M>_g<gamma>_fold<k>.model.json
std::string model_filename(Variant v, int M, int gamma, int fold);

}  // namespace engage
