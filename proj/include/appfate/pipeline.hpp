#pragma once

// End-to-end training flow shared by the CLI and the tests.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "appfate/ensemble.hpp"
#include "appfate/eval.hpp"
#include "appfate/features.hpp"
#include "appfate/ingest.hpp"
#include "appfate/manifest.hpp"

namespace appfate {

// Inline XML when the source starts with '<', else a path (relative paths
// resolve against base_dir).
inline ManifestInfo load_manifest(const std::string& source, const std::filesystem::path& base_dir = {}) {
  const auto text = detail::trim(source);
  if (!text.empty() && text.front() == '<') return parse_manifest_xml(text);
  std::filesystem::path path{std::string(text)};
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  return parse_manifest_xml(detail::read_file(path.string()));
}

struct PreparedData {
  std::vector<RawAppRecord> records;
  std::vector<Label> labels;
  std::vector<ManifestGroups> groups;
  std::vector<Drop> drops;
  std::map<std::string, std::size_t> drop_counts;
  std::size_t unmatched_actions = 0;
  std::size_t unknown_android_versions = 0;

  std::vector<std::uint8_t> label_bits() const {
    std::vector<std::uint8_t> y;
    y.reserve(labels.size());
    for (auto l : labels) y.push_back(positive(l));
    return y;
  }
};

// filter_complete, then manifest parsing; unreadable manifests are dropped
// with reason "manifest:<message>".
inline PreparedData prepare(std::vector<RawAppRecord> records, const std::filesystem::path& base_dir = {}) {
  auto filtered = filter_complete(std::move(records));
  PreparedData out;
  out.drops = std::move(filtered.drops);
  out.drop_counts = std::move(filtered.drop_counts);
  for (std::size_t i = 0; i < filtered.kept.size(); ++i) {
    auto& r = filtered.kept[i];
    ManifestInfo m;
    try {
      m = load_manifest(r.manifest_source, base_dir);
    } catch (const std::exception& e) {
      const std::string reason = std::string("manifest:") + e.what();
      ++out.drop_counts["manifest:error"];
      out.drops.push_back({r.source_row, reason});
      continue;
    }
    auto groups = group_manifest(m);
    out.unmatched_actions += groups.actions.unmatched;
    if (!derive_android_versions(r.android_version).recognized) ++out.unknown_android_versions;
    out.groups.push_back(groups);
    out.labels.push_back(filtered.labels[i]);
    out.records.push_back(std::move(r));
  }
  std::sort(out.drops.begin(), out.drops.end(), [](const Drop& a, const Drop& b) { return a.row < b.row; });
  return out;
}

inline DenseMatrix vectorize_rows(const Featurizer& f, const PreparedData& data, std::span<const std::size_t> rows) {
  DenseMatrix x(rows.size(), f.schema.total_width());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto v = f(data.records[rows[k]], data.groups[rows[k]]);
    std::copy(v.begin(), v.end(), x.row(k).begin());
  }
  return x;
}

template <typename T>
std::vector<T> select(std::span<const T> v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(v[i]);
  return out;
}

// Rows of `all` not in `removed`; order of `all` is kept.
inline std::vector<std::size_t> without(std::span<const std::size_t> all, std::span<const std::size_t> removed) {
  std::vector<std::size_t> sorted(removed.begin(), removed.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> out;
  for (auto i : all) {
    if (!std::binary_search(sorted.begin(), sorted.end(), i)) out.push_back(i);
  }
  return out;
}

struct TrainOptions {
  BagConfig bag;
  double test_fraction = 0.30;
  // Fixed threshold; when absent the F1-optimal validation threshold is used.
  std::optional<double> fixed_threshold;
  // When false the validation rows are held out of the bagging pool.
  bool validation_in_training = false;
  unsigned jobs = default_jobs();
};

struct Partition {
  eval::Split split;
  std::vector<std::size_t> validation;
};

// Stratified train/test split plus a validation draw from train.
inline Partition partition(std::span<const std::uint8_t> y, double test_fraction, std::uint64_t seed) {
  Partition p;
  p.split = eval::stratified_split(y, {test_fraction, derive_seed(seed, 0x51)});
  p.validation = eval::draw_validation(y, p.split.train, p.split.test, derive_seed(seed, 0x52));
  return p;
}

struct TrainOutcome {
  BagModel model;
  eval::Split split;
  std::vector<std::size_t> validation;
  double validation_auc = 0.0;
  double test_auc = 0.0;
  double validation_f_score = 0.0;
  std::vector<double> test_scores;
  std::vector<double> validation_scores;
};

// split -> fit features on train -> draw validation -> bag -> threshold.
inline TrainOutcome train_pipeline(const PreparedData& data, const TrainOptions& opt) {
  const auto y = data.label_bits();
  TrainOutcome out;
  auto part = partition(y, opt.test_fraction, opt.bag.master_seed);
  out.split = std::move(part.split);
  out.validation = std::move(part.validation);

  const auto train_records = select<RawAppRecord>(data.records, out.split.train);
  auto featurizer = Featurizer::fit(train_records, opt.bag.variant);
  const auto pool = opt.validation_in_training ? out.split.train : without(out.split.train, out.validation);
  const auto x_train = vectorize_rows(featurizer, data, pool);
  const auto y_train = select<std::uint8_t>(y, pool);
  const auto x_valid = vectorize_rows(featurizer, data, out.validation);
  const auto y_valid = select<std::uint8_t>(y, out.validation);
  const auto x_test = vectorize_rows(featurizer, data, out.split.test);
  const auto y_test = select<std::uint8_t>(y, out.split.test);

  out.model = train_bag(x_train, y_train, opt.bag, std::move(featurizer), opt.jobs);
  out.validation_scores = eval::score_all(out.model, x_valid);
  out.test_scores = eval::score_all(out.model, x_test);
  out.validation_auc = eval::roc_and_auc(out.validation_scores, y_valid).auc;
  out.test_auc = eval::roc_and_auc(out.test_scores, y_test).auc;
  if (opt.fixed_threshold) {
    out.model.threshold = *opt.fixed_threshold;
    out.validation_f_score = eval::confusion_at(out.validation_scores, y_valid, *opt.fixed_threshold).f1();
  } else {
    const auto choice = eval::select_threshold(out.validation_scores, y_valid);
    out.model.threshold = choice.threshold;
    out.validation_f_score = choice.f_score;
  }
  return out;
}

}  // namespace appfate
