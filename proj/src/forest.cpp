#include "segdsl/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "segdsl/binary_io.hpp"
#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

namespace segdsl::forest {
namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum over children of sum_c count_c^2 / n_child; larger is purer
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const std::vector<double>> rows, std::span<const std::size_t> labels,
              std::size_t num_classes, const ForestConfig& cfg, std::size_t mtry, Rng& rng)
      : rows_(rows), labels_(labels), classes_(num_classes), cfg_(cfg), mtry_(mtry), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    DecisionTree tree;
    sample_ = std::move(sample);
    struct Pending {
      std::uint32_t node;
      std::size_t begin, end, depth;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, sample_.size(), 0}};
    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      std::vector<double> counts(classes_, 0.0);
      for (std::size_t i = job.begin; i < job.end; ++i) counts[labels_[sample_[i]]] += 1.0;
      const std::size_t n = job.end - job.begin;
      const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
      const bool depth_capped = cfg_.max_depth && job.depth >= *cfg_.max_depth;
      Split split;
      if (!pure && n >= cfg_.min_samples_split && !depth_capped) split = best_split(job.begin, job.end);
      if (split.feature < 0) {
        tree.nodes[job.node].class_counts = std::move(counts);
        continue;
      }
      const auto mid = std::stable_partition(
          sample_.begin() + static_cast<std::ptrdiff_t>(job.begin),
          sample_.begin() + static_cast<std::ptrdiff_t>(job.end), [&](std::size_t r) {
            return rows_[r][static_cast<std::size_t>(split.feature)] <= split.threshold;
          });
      const std::size_t split_at = static_cast<std::size_t>(mid - sample_.begin());
      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[job.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, split_at, job.end, job.depth + 1});
      stack.push_back({left, job.begin, split_at, job.depth + 1});
    }
    return tree;
  }

 private:
  Split best_split(std::size_t begin, std::size_t end) {
    const std::size_t d = rows_.front().size();
    std::vector<std::size_t> features(d);
    std::iota(features.begin(), features.end(), 0);
    Split best;
    std::size_t informative = 0;
    std::vector<std::pair<double, std::size_t>> column;
    // Draw features without replacement until mtry non-constant ones were tried.
    for (std::size_t drawn = 0; drawn < d && informative < mtry_; ++drawn) {
      const std::size_t pick = drawn + rng_.index(d - drawn);
      std::swap(features[drawn], features[pick]);
      const std::size_t f = features[drawn];
      column.clear();
      for (std::size_t i = begin; i < end; ++i) {
        column.emplace_back(rows_[sample_[i]][f], labels_[sample_[i]]);
      }
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;
      ++informative;
      evaluate(f, column, best);
    }
    return best;
  }

  void evaluate(std::size_t feature, const std::vector<std::pair<double, std::size_t>>& column,
                Split& best) const {
    std::vector<double> left(classes_, 0.0), right(classes_, 0.0);
    for (const auto& [v, c] : column) right[c] += 1.0;
    double left_sq = 0.0, right_sq = 0.0;
    for (double c : right) right_sq += c * c;
    const double n = static_cast<double>(column.size());
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      const std::size_t c = column[i].second;
      left_sq += 2.0 * left[c] + 1.0;
      right_sq -= 2.0 * right[c] - 1.0;
      left[c] += 1.0;
      right[c] -= 1.0;
      if (column[i].first == column[i + 1].first) continue;
      const double n_left = static_cast<double>(i + 1);
      const double score = left_sq / n_left + right_sq / (n - n_left);
      if (score > best.score) {
        double threshold = 0.5 * (column[i].first + column[i + 1].first);
        if (threshold >= column[i + 1].first) threshold = column[i].first;
        best = {static_cast<int>(feature), threshold, score};
      }
    }
  }

  std::span<const std::vector<double>> rows_;
  std::span<const std::size_t> labels_;
  std::size_t classes_;
  const ForestConfig& cfg_;
  std::size_t mtry_;
  Rng& rng_;
  std::vector<std::size_t> sample_;
};

std::vector<double> leaf_distribution(const TreeNode& leaf) {
  std::vector<double> p = leaf.class_counts;
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void ForestConfig::validate() const {
  if (n_trees == 0) throw ConfigError("forest needs at least one tree");
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
  if (max_features && *max_features == 0) throw ConfigError("max_features must be >= 1");
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                              : node->right];
  }
  return *node;
}

Prediction Forest::predict(std::span<const double> x) const {
  if (x.size() != num_features_) {
    throw SizeError("forest expects " + std::to_string(num_features_) + " features, got " +
                    std::to_string(x.size()));
  }
  Prediction out;
  out.probabilities.assign(num_classes_, 0.0);
  for (const auto& tree : trees_) {
    const auto p = leaf_distribution(tree.leaf_for(x));
    for (std::size_t k = 0; k < num_classes_; ++k) out.probabilities[k] += p[k];
  }
  for (double& v : out.probabilities) v /= static_cast<double>(trees_.size());
  out.label = argmax(out.probabilities);
  return out;
}

Forest fit_forest(std::span<const std::vector<double>> rows, std::span<const std::size_t> labels,
                  std::size_t num_classes, const ForestConfig& cfg) {
  cfg.validate();
  if (rows.empty()) throw DataError("cannot fit a forest on an empty dataset");
  if (rows.size() != labels.size()) throw SizeError("forest: rows and labels differ in length");
  const std::size_t d = rows.front().size();
  if (d == 0) throw DataError("forest rows have no features");
  for (const auto& r : rows) {
    if (r.size() != d) throw SizeError("forest: ragged feature rows");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) throw DomainError("forest: label outside [0, num_classes)");
  }
  if (std::all_of(labels.begin(), labels.end(), [&](std::size_t y) { return y == labels.front(); })) {
    throw DataError("forest needs at least two distinct classes");
  }

  const std::size_t mtry =
      std::min(d, cfg.max_features.value_or(static_cast<std::size_t>(std::ceil(std::sqrt(double(d))))));
  Forest forest;
  forest.num_classes_ = num_classes;
  forest.num_features_ = d;
  const std::size_t n = rows.size();
  std::vector<std::vector<double>> oob_votes(n, std::vector<double>(num_classes, 0.0));
  std::vector<bool> ever_oob(n, false);

  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, t));
    std::vector<std::size_t> sample(n);
    std::vector<bool> in_bag(n, !cfg.bootstrap);
    if (cfg.bootstrap) {
      for (auto& s : sample) {
        s = rng.index(n);
        in_bag[s] = true;
      }
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    TreeBuilder builder(rows, labels, num_classes, cfg, mtry, rng);
    forest.trees_.push_back(builder.build(std::move(sample)));
    for (std::size_t i = 0; i < n; ++i) {
      if (in_bag[i]) continue;
      ever_oob[i] = true;
      const auto p = leaf_distribution(forest.trees_.back().leaf_for(rows[i]));
      for (std::size_t k = 0; k < num_classes; ++k) oob_votes[i][k] += p[k];
    }
  }

  std::size_t oob_rows = 0, oob_correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ever_oob[i]) continue;
    ++oob_rows;
    oob_correct += argmax(oob_votes[i]) == labels[i];
  }
  if (oob_rows > 0) forest.oob_accuracy_ = static_cast<double>(oob_correct) / oob_rows;
  return forest;
}

bool operator==(const Forest& a, const Forest& b) {
  if (a.num_classes_ != b.num_classes_ || a.num_features_ != b.num_features_ ||
      a.trees_.size() != b.trees_.size()) {
    return false;
  }
  for (std::size_t t = 0; t < a.trees_.size(); ++t) {
    const auto& na = a.trees_[t].nodes;
    const auto& nb = b.trees_[t].nodes;
    if (na.size() != nb.size()) return false;
    for (std::size_t i = 0; i < na.size(); ++i) {
      if (na[i].feature != nb[i].feature || na[i].threshold != nb[i].threshold ||
          na[i].left != nb[i].left || na[i].right != nb[i].right ||
          na[i].class_counts != nb[i].class_counts) {
        return false;
      }
    }
  }
  return true;
}

void save_forest(const std::filesystem::path& path, const Forest& forest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create forest checkpoint " + path.string());
  io::write_header(out, "SEGT", 1);
  io::write_u32(out, static_cast<std::uint32_t>(forest.num_classes_));
  io::write_u32(out, static_cast<std::uint32_t>(forest.num_features_));
  io::write_u32(out, static_cast<std::uint32_t>(forest.trees_.size()));
  for (const auto& tree : forest.trees_) {
    io::write_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      io::write_u32(out, static_cast<std::uint32_t>(node.feature));
      io::write_f64(out, node.threshold);
      io::write_u32(out, node.left);
      io::write_u32(out, node.right);
      if (node.is_leaf()) {
        for (double c : node.class_counts) io::write_f64(out, c);
      }
    }
  }
  if (!out) throw DataError("failed writing forest checkpoint " + path.string());
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open forest checkpoint " + path.string());
  io::read_header(in, "SEGT", 1);
  Forest forest;
  forest.num_classes_ = io::read_u32(in);
  forest.num_features_ = io::read_u32(in);
  const std::uint32_t n_trees = io::read_u32(in);
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    DecisionTree tree;
    tree.nodes.resize(io::read_u32(in));
    for (auto& node : tree.nodes) {
      node.feature = static_cast<int>(io::read_u32(in));
      node.threshold = io::read_f64(in);
      node.left = io::read_u32(in);
      node.right = io::read_u32(in);
      if (node.is_leaf()) {
        node.class_counts.resize(forest.num_classes_);
        for (double& c : node.class_counts) c = io::read_f64(in);
      }
    }
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace segdsl::forest
