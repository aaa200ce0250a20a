#pragma once

#include <cstdint>
#include <vector>

namespace engage::rf {

struct ForestConfig {
  int tree_count = 50;
  int max_depth = 16;
  int min_leaf = 2;  // minimum samples (bootstrap multiplicity included) per side
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;  // positive fraction at the leaf
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const double* x) const;
};

struct Forest {
  std::vector<Tree> trees;
  int dims = 0;
  // mean leaf positive fraction over the trees
  double predict(const double* x) const;
};

// CART with Gini impurity. Each tree grows on a bootstrap resample of the
// training set (drawn to the same size, with replacement); every node draws
// ceil(sqrt(d)) candidate features and splits on midpoints of sorted unique
// values, extending the candidate scan when none of the drawn features admits
// a valid split. Per-tree randomness is derived from the config seed.
Forest train_forest(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                    const ForestConfig& config);

}  // namespace engage::rf
