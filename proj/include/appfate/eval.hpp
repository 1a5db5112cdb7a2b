#pragma once

// Experiment workflow: stratified train/test split, validation drawing,
// ROC/AUC, F1 threshold selection and the classifiers x subset-size grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "appfate/ensemble.hpp"
#include "appfate/error.hpp"
#include "appfate/matrix.hpp"
#include "appfate/rng.hpp"

namespace appfate::eval {

struct SplitSpec {
  double test_fraction = 0.30;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

namespace detail {

inline std::array<std::vector<std::size_t>, 2> by_class(std::span<const std::uint8_t> labels,
                                                        std::span<const std::size_t> subset) {
  std::array<std::vector<std::size_t>, 2> out;
  for (std::size_t i : subset) out[labels[i] ? 1 : 0].push_back(i);
  return out;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

// Per class, round(n_class * test_fraction) items go to test. Both index
// lists come back sorted.
inline Split stratified_split(std::span<const std::uint8_t> labels, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) throw DataError("test_fraction must be in (0,1)");
  const auto all = detail::iota(labels.size());
  auto classes = detail::by_class(labels, all);
  Split split;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = classes[c];
    if (members.size() < 2) throw DataError("stratified_split: each class needs at least 2 items");
    Rng rng(derive_seed(spec.seed, c));
    rng.shuffle(members);
    const auto n_test = std::size_t(std::llround(double(members.size()) * spec.test_fraction));
    split.test.insert(split.test.end(), members.begin(), members.begin() + std::ptrdiff_t(n_test));
    split.train.insert(split.train.end(), members.begin() + std::ptrdiff_t(n_test), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// Sample without replacement from `train` with the same per-class counts as
// `like`. Rows stay in the training pool.
inline std::vector<std::size_t> draw_validation(std::span<const std::uint8_t> labels,
                                                std::span<const std::size_t> train,
                                                std::span<const std::size_t> like, std::uint64_t seed) {
  auto pool = detail::by_class(labels, train);
  const auto want = detail::by_class(labels, like);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < 2; ++c) {
    if (pool[c].size() < want[c].size()) throw DataError("draw_validation: not enough training rows in a class");
    Rng rng(derive_seed(seed ^ 0x5A5A5A5A5A5A5A5AULL, c));
    rng.shuffle(pool[c]);
    out.insert(out.end(), pool[c].begin(), pool[c].begin() + std::ptrdiff_t(want[c].size()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
  double f1() const { return tp ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0; }
};

// Predicted Removed when score > threshold.
inline Confusion confusion_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > threshold;
    if (labels[i]) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

struct RocPoint {
  double threshold;  // predicted positive when score >= threshold
  double tpr;
  double fpr;
  std::size_t tp, fp, tn, fn;
};

struct Roc {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline void check_two_classes(std::span<const std::uint8_t> labels) {
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  if (pos == 0 || pos == labels.size()) throw DataError("metrics need at least one positive and one negative");
}

// One point per distinct score (descending), starting at (0,0) with an
// infinite threshold. Equal scores move together, which makes ties count
// half in the trapezoidal area.
inline Roc roc_and_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DataError("scores/labels size mismatch");
  check_two_classes(labels);
  std::vector<std::size_t> order = detail::iota(scores.size());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::size_t neg = labels.size() - pos;

  Roc roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0, 0, 0, neg, pos});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      labels[order[k]] ? ++tp : ++fp;
      ++k;
    }
    const RocPoint prev = roc.points.back();
    RocPoint p{s, double(tp) / double(pos), double(fp) / double(neg), tp, fp, neg - fp, pos - tp};
    roc.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) * 0.5;
    roc.points.push_back(p);
  }
  return roc;
}

struct ThresholdChoice {
  double threshold;
  double f_score;
};

// Highest-F1 threshold among `candidates` (ascending); ties keep the lowest.
inline ThresholdChoice best_threshold(std::span<const double> candidates, std::span<const double> scores,
                                      std::span<const std::uint8_t> labels) {
  if (candidates.empty()) throw DataError("no threshold candidates");
  std::vector<std::size_t> order = detail::iota(scores.size());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> sorted(order.size());
  // suffix_pos[k] = positives among sorted[k..]
  std::vector<std::size_t> suffix_pos(order.size() + 1, 0);
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = scores[order[k]];
  for (std::size_t k = order.size(); k-- > 0;) suffix_pos[k] = suffix_pos[k + 1] + (labels[order[k]] ? 1 : 0);
  const std::size_t total_pos = suffix_pos[0];

  ThresholdChoice best{candidates.front(), -1.0};
  for (double c : candidates) {
    const auto first = std::size_t(std::upper_bound(sorted.begin(), sorted.end(), c) - sorted.begin());
    const std::size_t predicted = sorted.size() - first;
    const std::size_t tp = suffix_pos[first];
    const std::size_t fp = predicted - tp;
    const std::size_t fn = total_pos - tp;
    const double f1 = tp ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
    if (f1 > best.f_score) best = {c, f1};
  }
  return best;
}

// Candidates: 0, midpoints between adjacent distinct scores, 1.
inline std::vector<double> threshold_candidates(std::span<const double> scores) {
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> out{0.0};
  for (std::size_t k = 0; k + 1 < s.size(); ++k) out.push_back(0.5 * (s[k] + s[k + 1]));
  out.push_back(1.0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Threshold maximizing F1 for the Removed class.
inline ThresholdChoice select_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DataError("scores/labels size mismatch");
  check_two_classes(labels);
  return best_threshold(threshold_candidates(scores), scores, labels);
}

// Expected AUC of ranking by the true probabilities when each label is
// drawn Bernoulli(p): sum over ordered pairs i != j of p_i (1 - p_j) times
// [p_i > p_j] + 1/2 [p_i == p_j], over the sum of p_i (1 - p_j).
inline double bayes_auc(std::span<const double> p) {
  std::vector<double> s(p.begin(), p.end());
  std::sort(s.begin(), s.end());
  double num = 0.0, below_neg = 0.0, sum_p = 0.0, sum_q = 0.0, self = 0.0;
  for (std::size_t k = 0; k < s.size();) {
    std::size_t e = k;
    double grp_p = 0.0, grp_q = 0.0, grp_self = 0.0;
    while (e < s.size() && s[e] == s[k]) {
      grp_p += s[e];
      grp_q += 1.0 - s[e];
      grp_self += s[e] * (1.0 - s[e]);
      ++e;
    }
    num += grp_p * below_neg + 0.5 * (grp_p * grp_q - grp_self);
    below_neg += grp_q;
    sum_p += grp_p;
    sum_q += grp_q;
    self += grp_self;
    k = e;
  }
  const double den = sum_p * sum_q - self;
  return den > 0.0 ? num / den : 0.5;
}

inline std::vector<double> score_all(const BagModel& bag, const DenseMatrix& x) {
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict_score(bag, x.row(i));
  return out;
}

struct GridCell {
  int n_classifiers;
  std::size_t subset_size;
  double auc;
};

// One bag per (classifier count, subset size), scored by validation AUC.
// Each cell's seed depends only on the master seed and the cell's own
// settings, so cells do not depend on evaluation order.
inline std::vector<GridCell> run_grid(const DenseMatrix& train_x, std::span<const std::uint8_t> train_y,
                                      const DenseMatrix& valid_x, std::span<const std::uint8_t> valid_y,
                                      std::span<const int> counts, std::span<const std::size_t> sizes,
                                      const BagConfig& base, const Featurizer& featurizer,
                                      unsigned jobs = default_jobs()) {
  if (counts.empty() || sizes.empty()) throw DataError("grid needs at least one classifier count and subset size");
  std::vector<GridCell> cells;
  for (int count : counts) {
    for (std::size_t size : sizes) {
      BagConfig cfg = base;
      cfg.n_classifiers = count;
      cfg.subset_size = size;
      cfg.master_seed = derive_seed(derive_seed(base.master_seed, std::uint64_t(count)), size);
      const auto bag = train_bag(train_x, train_y, cfg, featurizer, jobs);
      const auto scores = score_all(bag, valid_x);
      cells.push_back({count, size, roc_and_auc(scores, valid_y).auc});
    }
  }
  return cells;
}

inline void write_grid_table(std::ostream& out, const std::vector<GridCell>& cells) {
  std::vector<int> counts;
  std::vector<std::size_t> sizes;
  for (const auto& c : cells) {
    if (std::find(counts.begin(), counts.end(), c.n_classifiers) == counts.end()) counts.push_back(c.n_classifiers);
    if (std::find(sizes.begin(), sizes.end(), c.subset_size) == sizes.end()) sizes.push_back(c.subset_size);
  }
  out << std::setw(12) << "classifiers";
  for (auto s : sizes) out << std::setw(10) << s;
  out << '\n';
  for (int n : counts) {
    out << std::setw(12) << n;
    for (auto s : sizes) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const GridCell& c) { return c.n_classifiers == n && c.subset_size == s; });
      out << std::setw(10) << std::fixed << std::setprecision(4) << (it == cells.end() ? NAN : it->auc);
    }
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
}

struct EvalReport {
  double auc = 0.0;
  Roc roc;
  double chosen_threshold = kDefaultThreshold;
  double f_score_at_threshold = 0.0;
  Confusion confusion;
  std::vector<GridCell> grid;
  std::vector<NamedScore> importance_top;
  std::optional<double> bayes_auc;
};

inline EvalReport evaluate(const BagModel& bag, const DenseMatrix& x, std::span<const std::uint8_t> y,
                           std::size_t top = 20) {
  EvalReport r;
  const auto scores = score_all(bag, x);
  r.roc = roc_and_auc(scores, y);
  r.auc = r.roc.auc;
  r.chosen_threshold = bag.operating_threshold();
  r.confusion = confusion_at(scores, y, r.chosen_threshold);
  r.f_score_at_threshold = r.confusion.f1();
  r.importance_top = aggregate_importance(bag);
  if (r.importance_top.size() > top) r.importance_top.resize(top);
  return r;
}

inline Json to_json(const EvalReport& r) {
  Json roc = Json::array();
  for (const auto& p : r.roc.points) {
    roc.push_back({{"threshold", std::isinf(p.threshold) ? Json(nullptr) : Json(p.threshold)},
                   {"tpr", p.tpr}, {"fpr", p.fpr}, {"tp", p.tp}, {"fp", p.fp}, {"tn", p.tn}, {"fn", p.fn}});
  }
  Json grid = Json::array();
  for (const auto& c : r.grid) grid.push_back({{"n_classifiers", c.n_classifiers}, {"subset_size", c.subset_size}, {"auc", c.auc}});
  Json imp = Json::array();
  for (const auto& s : r.importance_top) imp.push_back({{"feature", s.name}, {"score", s.score}});
  Json out = {{"auc", r.auc},
              {"chosen_threshold", r.chosen_threshold},
              {"f_score_at_threshold", r.f_score_at_threshold},
              {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
              {"importance_top", std::move(imp)},
              {"grid", std::move(grid)},
              {"roc", std::move(roc)}};
  if (r.bayes_auc) out["bayes_auc"] = *r.bayes_auc;
  return out;
}

inline void write_text(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(4);
  out << "AUC                " << r.auc << '\n';
  if (r.bayes_auc) out << "Bayes AUC          " << *r.bayes_auc << '\n';
  out << "threshold          " << r.chosen_threshold << '\n';
  out << "F1 at threshold    " << r.f_score_at_threshold << '\n';
  out << "confusion          TP=" << r.confusion.tp << " FP=" << r.confusion.fp << " TN=" << r.confusion.tn
      << " FN=" << r.confusion.fn << '\n';
  out << "top features\n";
  for (std::size_t i = 0; i < r.importance_top.size(); ++i) {
    out << std::setw(4) << i + 1 << "  " << std::left << std::setw(40) << r.importance_top[i].name << std::right
        << r.importance_top[i].score << '\n';
  }
  out.unsetf(std::ios::fixed);
}

// threshold,fpr,tpr rows; the first point's threshold is "inf".
inline void write_roc_csv(std::ostream& out, const Roc& roc) {
  out << "threshold,fpr,tpr\n";
  out << std::setprecision(17);
  for (const auto& p : roc.points) {
    if (std::isinf(p.threshold)) {
      out << "inf";
    } else {
      out << p.threshold;
    }
    out << ',' << p.fpr << ',' << p.tpr << '\n';
  }
}

}  // namespace appfate::eval
