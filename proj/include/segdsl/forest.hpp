#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace segdsl::forest {

// Pinned "default" classification forest: 100 trees, Gini impurity,
// ceil(sqrt(d)) candidate features per node, unlimited depth, bootstrap on.
struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_features;  // unset = ceil(sqrt(d))
  std::size_t min_samples_split = 2;
  std::optional<std::size_t> max_depth;     // unset = grow until pure
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  // Internal node: feature >= 0, samples with x[feature] <= threshold go left.
  int feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<double> class_counts;  // leaves only

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

class Forest {
 public:
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_features() const { return num_features_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  // Mean of the per-tree leaf class frequencies; lowest index wins ties.
  // Throws SizeError on a feature-dimension mismatch.
  Prediction predict(std::span<const double> x) const;

  // Out-of-bag accuracy over the training rows that were left out of at
  // least one bootstrap sample; nullopt when no row ever was.
  std::optional<double> oob_accuracy() const { return oob_accuracy_; }

  friend Forest fit_forest(std::span<const std::vector<double>> rows,
                           std::span<const std::size_t> labels, std::size_t num_classes,
                           const ForestConfig& cfg);
  friend void save_forest(const std::filesystem::path& path, const Forest& forest);
  friend Forest load_forest(const std::filesystem::path& path);

  friend bool operator==(const Forest& a, const Forest& b);

 private:
  std::size_t num_classes_ = 0;
  std::size_t num_features_ = 0;
  std::vector<DecisionTree> trees_;
  std::optional<double> oob_accuracy_;
};

// Tree t draws its bootstrap and feature subsets from derive_seed(seed, t),
// so the result does not depend on the order trees are grown in. Throws
// DataError for empty or single-class input and SizeError for ragged rows.
Forest fit_forest(std::span<const std::vector<double>> rows, std::span<const std::size_t> labels,
                  std::size_t num_classes, const ForestConfig& cfg);

// "SEGT" checkpoint.
void save_forest(const std::filesystem::path& path, const Forest& forest);
Forest load_forest(const std::filesystem::path& path);

}  // namespace segdsl::forest
