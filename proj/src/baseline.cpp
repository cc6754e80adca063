#include "tdl/baseline.hpp"

#include <algorithm>
#include <numeric>

#include "tdl/common.hpp"

namespace tdl::baseline {

double gini(std::size_t positives, std::size_t total) {
  if (total == 0) return 0.0;
  double p = static_cast<double>(positives) / static_cast<double>(total);
  return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

double DecisionTree::predict(const features::FeatureVector& x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(idx)];
    idx = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(idx)].positive_fraction;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct Split {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;  // size-weighted child Gini
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const features::FeatureVector> rows, std::span<const int> labels, const ForestConfig& cfg,
              std::uint64_t seed)
      : rows_(rows), labels_(labels), cfg_(cfg), rng_(seed) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    tree_.nodes.clear();
    tree_.nodes.emplace_back();
    grow(0, std::move(sample), 0);
    return std::move(tree_);
  }

 private:
  std::size_t count_positive(const std::vector<std::size_t>& idx) const {
    std::size_t pos = 0;
    for (std::size_t i : idx) pos += labels_[i] ? 1 : 0;
    return pos;
  }

  std::vector<int> candidate_features() {
    std::vector<int> all(features::kNumFeatures);
    std::iota(all.begin(), all.end(), 0);
    const auto k = static_cast<std::size_t>(std::clamp<int>(cfg_.features_per_split, 1, features::kNumFeatures));
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + rng_.below(all.size() - i);
      std::swap(all[i], all[j]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }

  Split best_split(const std::vector<std::size_t>& idx, const std::vector<int>& feats) const {
    Split best;
    const std::size_t n = idx.size();
    const std::size_t total_pos = count_positive(idx);
    const auto min_leaf = static_cast<std::size_t>(std::max(1, cfg_.min_leaf));
    std::vector<std::pair<double, int>> col(n);
    for (int f : feats) {
      for (std::size_t i = 0; i < n; ++i) col[i] = {rows_[idx[i]][static_cast<std::size_t>(f)], labels_[idx[i]]};
      std::sort(col.begin(), col.end());
      std::size_t left_pos = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_pos += col[i].second ? 1 : 0;
        if (col[i].first == col[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        double imp = (static_cast<double>(nl) * gini(left_pos, nl) + static_cast<double>(nr) * gini(total_pos - left_pos, nr)) /
                     static_cast<double>(n);
        // Features are visited in ascending order and thresholds ascending, so strict < keeps the lowest.
        if (!best.found || imp < best.impurity) {
          best = {true, f, 0.5 * (col[i].first + col[i + 1].first), imp};
        }
      }
    }
    return best;
  }

  void grow(std::size_t node, std::vector<std::size_t> idx, int depth) {
    const std::size_t pos = count_positive(idx);
    const double parent = gini(pos, idx.size());
    tree_.nodes[node].positive_fraction = idx.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(idx.size());
    if (parent == 0.0 || depth >= cfg_.max_depth || idx.size() < 2 * static_cast<std::size_t>(std::max(1, cfg_.min_leaf))) {
      return;
    }
    Split s = best_split(idx, candidate_features());
    if (!s.found || !(s.impurity < parent)) return;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) (rows_[i][static_cast<std::size_t>(s.feature)] <= s.threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();

    const auto l = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.emplace_back();
    tree_.nodes[node].feature = s.feature;
    tree_.nodes[node].threshold = s.threshold;
    tree_.nodes[node].left = l;
    tree_.nodes[node].right = l + 1;
    grow(static_cast<std::size_t>(l), std::move(left), depth + 1);
    grow(static_cast<std::size_t>(l + 1), std::move(right), depth + 1);
  }

  std::span<const features::FeatureVector> rows_;
  std::span<const int> labels_;
  const ForestConfig& cfg_;
  Rng rng_;
  DecisionTree tree_;
};

}  // namespace

DecisionTree grow_tree(std::span<const features::FeatureVector> rows, std::span<const int> labels,
                       std::vector<std::size_t> sample, const ForestConfig& cfg, std::uint64_t tree_seed) {
  TreeBuilder builder(rows, labels, cfg, tree_seed);
  return builder.build(std::move(sample));
}

Forest fit(std::span<const features::FeatureVector> rows, std::span<const int> labels, const ForestConfig& cfg) {
  if (rows.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "forest fit: rows and labels differ in length");
  if (cfg.n_trees < 1) throw Error(ErrorKind::Config, "forest fit: n_trees must be >= 1");
  if (cfg.features_per_split < 1 || cfg.features_per_split > static_cast<int>(features::kNumFeatures)) {
    throw Error(ErrorKind::Config, "forest fit: features_per_split must be in [1, 34]");
  }
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorKind::InsufficientData, "forest fit: training rows contain a single class");
  }
  Forest forest;
  const std::size_t n = rows.size();
  for (int t = 0; t < cfg.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(cfg.seed, "tree", static_cast<std::uint64_t>(t));
    std::vector<std::size_t> sample(n);
    if (cfg.bootstrap) {
      Rng rng(derive_seed(tree_seed, "bootstrap"));
      for (auto& s : sample) s = rng.below(n);
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    forest.trees.push_back(grow_tree(rows, labels, std::move(sample), cfg, tree_seed));
  }
  return forest;
}

double predict_proba(const Forest& forest, const features::FeatureVector& x) {
  if (forest.trees.empty()) throw Error(ErrorKind::InvalidArgument, "predict_proba: empty forest");
  double acc = 0.0;
  for (const auto& t : forest.trees) acc += t.predict(x);
  return acc / static_cast<double>(forest.trees.size());
}

}  // namespace tdl::baseline
