#pragma once

// Gradient-boosted regression trees for binary classification under
// logistic loss. Second-order (Newton) leaf weights, exact greedy split
// search over midpoints of sorted distinct values, depth-wise growth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "appfate/error.hpp"
#include "appfate/matrix.hpp"

namespace appfate::gbdt {

struct TrainParams {
  int n_trees = 100;
  int max_depth = 6;
  double learning_rate = 0.3;
  double l2_lambda = 1.0;
  double gamma_min_gain = 0.0;
  double min_child_weight = 1.0;
  double base_score = 0.5;
  // Recorded for provenance; training itself has no random steps.
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) throw TrainError("n_trees must be >= 1");
    if (max_depth < 1) throw TrainError("max_depth must be >= 1");
    if (!(learning_rate > 0.0)) throw TrainError("learning_rate must be > 0");
    if (!(l2_lambda >= 0.0)) throw TrainError("l2_lambda must be >= 0");
    if (!(gamma_min_gain >= 0.0)) throw TrainError("gamma_min_gain must be >= 0");
    if (!(min_child_weight >= 0.0)) throw TrainError("min_child_weight must be >= 0");
    if (!(base_score > 0.0 && base_score < 1.0)) throw TrainError("base_score must be in (0,1)");
  }

  friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

inline double sigmoid(double margin) {
  if (margin >= 0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

struct GradHess {
  double g;
  double h;
};

// First and second derivative of the log-loss w.r.t. the margin.
inline GradHess logistic_grad_hess(double margin, int label) {
  const double p = sigmoid(margin);
  return {p - double(label), p * (1.0 - p)};
}

inline double log_loss(double margin, int label) {
  // log(1 + e^-m) for label 1, log(1 + e^m) for label 0, computed stably.
  const double m = label ? margin : -margin;
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

// Structure score improvement of splitting (G, H) into left and right.
inline double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
  const double g = gl + gr;
  const double h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

struct SplitCandidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
  double left_g = 0.0, left_h = 0.0;
  double right_g = 0.0, right_h = 0.0;
};

// Threshold between two consecutive distinct values a < b.
inline double midpoint(double a, double b) {
  const double m = 0.5 * (a + b);
  return m > a ? m : b;
}

// Consumes (value, g, h) in ascending value order and tracks the best
// positive-gain split. A candidate is evaluated whenever the value strictly
// increases. Ties keep the earlier (lower) threshold.
class SplitScanner {
 public:
  SplitScanner(std::size_t feature, double total_g, double total_h, const TrainParams& params)
      : feature_(feature), total_g_(total_g), total_h_(total_h), params_(&params) {}

  void push(double value, double g, double h) {
    if (count_ > 0 && value > last_) consider(last_, value);
    gl_ += g;
    hl_ += h;
    last_ = value;
    ++count_;
  }

  const std::optional<SplitCandidate>& best() const { return best_; }

 private:
  void consider(double lo, double hi) {
    const double gr = total_g_ - gl_;
    const double hr = total_h_ - hl_;
    if (hl_ < params_->min_child_weight || hr < params_->min_child_weight) return;
    const double gain = split_gain(gl_, hl_, gr, hr, params_->l2_lambda, params_->gamma_min_gain);
    if (gain > 0.0 && (!best_ || gain > best_->gain)) {
      best_ = SplitCandidate{feature_, midpoint(lo, hi), gain, gl_, hl_, gr, hr};
    }
  }

  std::size_t feature_;
  double total_g_, total_h_;
  const TrainParams* params_;
  double gl_ = 0.0, hl_ = 0.0;
  double last_ = 0.0;
  std::size_t count_ = 0;
  std::optional<SplitCandidate> best_;
};

// Better of two candidates: higher gain, then lower feature, then lower
// threshold.
inline bool better(const SplitCandidate& a, const SplitCandidate& b) {
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

// Best split of a single feature column. Nothing when no split has positive
// gain with both children meeting min_child_weight.
inline std::optional<SplitCandidate> best_split(std::span<const double> values, std::span<const double> g,
                                                std::span<const double> h, const TrainParams& params,
                                                std::size_t feature = 0) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total_g = 0.0, total_h = 0.0;
  for (std::size_t i : order) {
    total_g += g[i];
    total_h += h[i];
  }
  SplitScanner scanner(feature, total_g, total_h, params);
  for (std::size_t i : order) scanner.push(values[i], g[i], h[i]);
  return scanner.best();
}

// Best split over every column of `x`.
inline std::optional<SplitCandidate> best_split(const DenseMatrix& x, std::span<const double> g,
                                                std::span<const double> h, const TrainParams& params) {
  std::optional<SplitCandidate> best;
  std::vector<double> column(x.rows);
  for (std::size_t f = 0; f < x.cols; ++f) {
    for (std::size_t i = 0; i < x.rows; ++i) column[i] = x(i, f);
    auto c = best_split(column, g, h, params, f);
    if (c && (!best || better(*c, *best))) best = c;
  }
  return best;
}

struct TreeNode {
  // feature < 0 marks a leaf.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Unused: vectors are dense. Kept in the model format.
  bool default_left = true;
  double leaf = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  // Routing: value < threshold goes left.
  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = std::size_t(x[std::size_t(n.feature)] < n.threshold ? n.left : n.right);
    }
    return nodes[i].leaf;
  }

  // Longest root-to-leaf path, in edges.
  int depth(std::size_t i = 0) const {
    if (nodes[i].is_leaf()) return 0;
    return 1 + std::max(depth(std::size_t(nodes[i].left)), depth(std::size_t(nodes[i].right)));
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct GBDTModel {
  TrainParams params;
  std::vector<Tree> trees;
  std::size_t feature_count = 0;
  std::vector<double> gain_totals;

  double base_margin() const { return std::log(params.base_score / (1.0 - params.base_score)); }

  double predict_margin(std::span<const double> x) const {
    if (x.size() != feature_count) {
      throw DataError("feature width mismatch: model expects " + std::to_string(feature_count) + ", got " +
                      std::to_string(x.size()));
    }
    double m = base_margin();
    for (const auto& t : trees) m += t.predict(x);
    return m;
  }

  double predict_proba(std::span<const double> x) const { return sigmoid(predict_margin(x)); }

  friend bool operator==(const GBDTModel&, const GBDTModel&) = default;
};

inline double predict_proba(const GBDTModel& model, std::span<const double> x) {
  return model.predict_proba(x);
}

// Total split gain per feature divided by the number of trees.
inline std::vector<double> feature_importance(const GBDTModel& model) {
  std::vector<double> out(model.feature_count, 0.0);
  if (model.trees.empty()) return out;
  for (std::size_t f = 0; f < out.size() && f < model.gain_totals.size(); ++f) {
    out[f] = model.gain_totals[f] / double(model.trees.size());
  }
  return out;
}

namespace detail {

// Rows sorted lexicographically by (features, label). Training on this
// order makes the model a function of the row multiset only.
inline std::vector<std::size_t> canonical_order(const DenseMatrix& x, std::span<const std::uint8_t> y) {
  std::vector<std::size_t> order(x.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    for (std::size_t j = 0; j < x.cols; ++j) {
      if (ra[j] != rb[j]) return ra[j] < rb[j];
    }
    return y[a] < y[b];
  });
  return order;
}

}  // namespace detail

// Trains `params.n_trees` rounds. Labels are 1 (positive) or 0.
inline GBDTModel train(const DenseMatrix& x_in, std::span<const std::uint8_t> y_in, const TrainParams& params) {
  params.validate();
  if (x_in.rows == 0) throw TrainError("empty training set");
  if (y_in.size() != x_in.rows) throw TrainError("label count does not match row count");
  if (x_in.rows < 2) throw TrainError("need at least 2 rows");
  std::size_t positives = 0;
  for (auto v : y_in) {
    if (v > 1) throw TrainError("labels must be 0 or 1");
    positives += v;
  }
  if (positives == 0 || positives == y_in.size()) throw TrainError("training data has a single class");

  const std::size_t n = x_in.rows;
  const std::size_t nf = x_in.cols;
  const auto order = detail::canonical_order(x_in, y_in);
  DenseMatrix x(n, nf);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x_in.row(order[i]).begin(), nf, x.row(i).begin());
    y[i] = y_in[order[i]];
  }

  // Per-feature row order by value; constant columns are skipped.
  std::vector<std::size_t> features;
  std::vector<std::vector<std::uint32_t>> sorted;
  for (std::size_t f = 0; f < nf; ++f) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    if (x(idx.front(), f) == x(idx.back(), f)) continue;
    features.push_back(f);
    sorted.push_back(std::move(idx));
  }

  GBDTModel model;
  model.params = params;
  model.feature_count = nf;
  model.gain_totals.assign(nf, 0.0);
  std::vector<double> margin(n, model.base_margin());
  std::vector<double> g(n), h(n);
  std::vector<int> node_of(n);

  for (int round = 0; round < params.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto gh = logistic_grad_hess(margin[i], y[i]);
      g[i] = gh.g;
      h[i] = gh.h;
    }
    Tree tree;
    tree.nodes.emplace_back();
    std::fill(node_of.begin(), node_of.end(), 0);
    std::vector<int> level{0};

    for (int depth = 0; !level.empty(); ++depth) {
      // Node totals in canonical row order.
      std::vector<double> tg(tree.nodes.size(), 0.0), th(tree.nodes.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        tg[std::size_t(node_of[i])] += g[i];
        th[std::size_t(node_of[i])] += h[i];
      }
      std::vector<std::optional<SplitCandidate>> best(tree.nodes.size());
      if (depth < params.max_depth) {
        for (std::size_t k = 0; k < features.size(); ++k) {
          const std::size_t f = features[k];
          std::vector<std::optional<SplitScanner>> scanners(tree.nodes.size());
          for (int id : level) scanners[std::size_t(id)].emplace(f, tg[std::size_t(id)], th[std::size_t(id)], params);
          for (std::uint32_t i : sorted[k]) {
            auto& s = scanners[std::size_t(node_of[i])];
            if (s) s->push(x(i, f), g[i], h[i]);
          }
          for (int id : level) {
            const auto& c = scanners[std::size_t(id)]->best();
            auto& b = best[std::size_t(id)];
            if (c && (!b || better(*c, *b))) b = c;
          }
        }
      }
      std::vector<int> next;
      for (int id : level) {
        const auto& b = best[std::size_t(id)];
        if (!b) {
          tree.nodes[std::size_t(id)].leaf =
              -tg[std::size_t(id)] / (th[std::size_t(id)] + params.l2_lambda) * params.learning_rate;
          continue;
        }
        const int left = int(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& node = tree.nodes[std::size_t(id)];
        node.feature = int(b->feature);
        node.threshold = b->threshold;
        node.left = left;
        node.right = left + 1;
        model.gain_totals[b->feature] += b->gain;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& node = tree.nodes[std::size_t(node_of[i])];
        if (!node.is_leaf()) node_of[i] = x(i, std::size_t(node.feature)) < node.threshold ? node.left : node.right;
      }
      level = std::move(next);
    }
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree.nodes[std::size_t(node_of[i])].leaf;
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace appfate::gbdt
