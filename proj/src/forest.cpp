#include "engage/forest.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "engage/rng.hpp"

namespace engage::rf {

double Tree::predict(const double* x) const {
  int i = 0;
  while (nodes[i].feature >= 0) {
    i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  return nodes[i].leaf_value;
}

double Forest::predict(const double* x) const {
  double s = 0;
  for (const auto& t : trees) s += t.predict(x);
  return s / static_cast<double>(trees.size());
}

namespace {

struct Sample {
  std::uint32_t index;  // row in X
  std::uint32_t weight; // bootstrap multiplicity
  std::uint32_t pos;    // weight if the label is positive, else 0
};

struct Builder {
  const std::vector<std::vector<double>>& X;
  const std::vector<int>& y;
  const ForestConfig& cfg;
  int dims;
  int mtry;
  Tree* tree;
  Rng* rng;
  std::vector<std::pair<double, const Sample*>> scratch;

  int build(std::vector<Sample>& samples, int depth) {
    double total = 0, pos = 0;
    for (const auto& s : samples) {
      total += s.weight;
      pos += s.pos;
    }
    const int node_id = static_cast<int>(tree->nodes.size());
    tree->nodes.push_back({});

    const bool pure = pos == 0.0 || pos == total;
    if (pure || depth >= cfg.max_depth || total < 2.0 * cfg.min_leaf) {
      tree->nodes[node_id].leaf_value = pos / total;
      return node_id;
    }

    std::vector<int> feature_order(dims);
    for (int i = 0; i < dims; ++i) feature_order[i] = i;
    rng->shuffle(feature_order);

    int best_feature = -1;
    double best_threshold = 0, best_impurity = 0;
    int scanned = 0;
    for (const int f : feature_order) {
      if (scanned >= mtry && best_feature >= 0) break;
      ++scanned;
      scratch.clear();
      for (const auto& s : samples) scratch.emplace_back(X[s.index][f], &s);
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

      double left_w = 0, left_pos = 0;
      for (std::size_t i = 0; i + 1 < scratch.size(); ++i) {
        left_w += scratch[i].second->weight;
        left_pos += scratch[i].second->pos;
        if (scratch[i].first == scratch[i + 1].first) continue;  // not a value boundary
        const double right_w = total - left_w;
        if (left_w < cfg.min_leaf || right_w < cfg.min_leaf) continue;
        const double right_pos = pos - left_pos;
        // weighted Gini impurity of the two children
        const double gl = left_pos * (left_w - left_pos) / left_w;
        const double gr = right_pos * (right_w - right_pos) / right_w;
        const double impurity = 2.0 * (gl + gr) / total;
        if (best_feature < 0 || impurity < best_impurity) {
          best_feature = f;
          best_impurity = impurity;
          best_threshold = (scratch[i].first + scratch[i + 1].first) / 2.0;
        }
      }
    }

    if (best_feature < 0) {
      tree->nodes[node_id].leaf_value = pos / total;
      return node_id;
    }

    std::vector<Sample> left, right;
    for (const auto& s : samples) {
      (X[s.index][best_feature] <= best_threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();

    tree->nodes[node_id].feature = best_feature;
    tree->nodes[node_id].threshold = best_threshold;
    tree->nodes[node_id].left = build(left, depth + 1);
    tree->nodes[node_id].right = build(right, depth + 1);
    return node_id;
  }
};

}  // namespace

Forest train_forest(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                    const ForestConfig& config) {
  if (X.empty() || X.size() != y.size()) {
    throw std::invalid_argument("train_forest: bad training data");
  }
  const int n = static_cast<int>(X.size());
  const int dims = static_cast<int>(X[0].size());
  const int mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dims))));

  Forest forest;
  forest.dims = dims;
  forest.trees.resize(config.tree_count);
  for (int t = 0; t < config.tree_count; ++t) {
    Rng rng(derive_seed(config.seed, "tree/" + std::to_string(t)));

    std::vector<std::uint32_t> multiplicity(n, 0);
    for (int i = 0; i < n; ++i) multiplicity[rng.below(n)] += 1;
    std::vector<Sample> samples;
    samples.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (multiplicity[i] == 0) continue;
      samples.push_back({static_cast<std::uint32_t>(i), multiplicity[i],
                         y[i] ? multiplicity[i] : 0});
    }

    Builder builder{X, y, config, dims, mtry, &forest.trees[t], &rng, {}};
    builder.build(samples, 0);
  }
  return forest;
}

}  // namespace engage::rf
