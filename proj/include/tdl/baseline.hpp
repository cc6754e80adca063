#pragma once

// CART / Gini random forest over the 34 handcrafted features. Ignores time gaps.

#include <cstdint>
#include <span>
#include <vector>

#include "tdl/features.hpp"

namespace tdl::baseline {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 5;
  int features_per_split = 5;  // floor(sqrt(34))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // x[feature] <= threshold
  int right = -1;
  double positive_fraction = 0.0;  // meaningful for leaves

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const features::FeatureVector& x) const;
  int depth() const;
};

struct Forest {
  std::vector<DecisionTree> trees;
};

// 1 - sum_c p_c^2 for a binary node.
double gini(std::size_t positives, std::size_t total);

/// Each tree draws its own bootstrap and split-feature subsets from
/// derive_seed(cfg.seed, "tree", index). Split thresholds are midpoints of
/// consecutive distinct values; ties in impurity go to the lower feature
/// index, then the lower threshold. Throws Error(InsufficientData) if the rows
/// contain a single class.
Forest fit(std::span<const features::FeatureVector> rows, std::span<const int> labels, const ForestConfig& cfg);

// Grows one tree on the given sample indices (duplicates allowed).
DecisionTree grow_tree(std::span<const features::FeatureVector> rows, std::span<const int> labels,
                       std::vector<std::size_t> sample, const ForestConfig& cfg, std::uint64_t tree_seed);

// Mean leaf positive fraction over trees.
double predict_proba(const Forest& forest, const features::FeatureVector& x);

}  // namespace tdl::baseline
