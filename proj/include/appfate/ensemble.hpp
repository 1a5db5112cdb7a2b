#pragma once

// Balanced-bootstrap bagging of shallow GBDT classifiers, plus the JSON
// model document.
//
// Each member trains on its own with-replacement sample holding equal
// numbers of Removed and Stable apps, with max_depth and n_trees drawn from
// short choice lists. The ensemble score is the mean member probability of
// Removed; an app is classified Removed when its score is strictly above
// the threshold.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "appfate/calendar.hpp"
#include "appfate/error.hpp"
#include "appfate/features.hpp"
#include "appfate/gbdt.hpp"
#include "appfate/matrix.hpp"
#include "appfate/parallel.hpp"
#include "appfate/rng.hpp"
#include "json.hpp"

namespace appfate {

using Json = nlohmann::ordered_json;

// Mean probability (default) or fraction of members voting Removed at 0.5.
enum class Aggregation { Mean, MajorityVote };

struct BagConfig {
  int n_classifiers = 1;
  std::size_t subset_size = 100'000;
  std::vector<int> depth_choices{2, 3};
  std::vector<int> tree_count_choices{256, 512};
  std::uint64_t master_seed = 0;
  Variant variant = Variant::Developer;
  Aggregation aggregation = Aggregation::Mean;
  // Everything but max_depth / n_trees / seed, which are set per member.
  gbdt::TrainParams base_params{};

  void validate() const {
    if (n_classifiers < 1) throw TrainError("n_classifiers must be >= 1");
    if (subset_size < 2 || subset_size % 2 != 0) throw TrainError("subset_size must be an even number >= 2");
    if (depth_choices.empty() || tree_count_choices.empty()) throw TrainError("hyperparameter choice lists must be non-empty");
  }

  friend bool operator==(const BagConfig&, const BagConfig&) = default;
};

inline constexpr int kModelFormatVersion = 1;
inline constexpr double kDefaultThreshold = 0.5;

struct BagModel {
  BagConfig config;
  Featurizer featurizer;
  std::vector<gbdt::GBDTModel> members;
  std::optional<double> threshold;
  std::string created_at;
  int format_version = kModelFormatVersion;

  const FeatureSchema& schema() const { return featurizer.schema; }
  double operating_threshold() const { return threshold.value_or(kDefaultThreshold); }
};

inline std::uint8_t positive(Label l) { return l == Label::Removed ? 1 : 0; }

// subset_size / 2 indices drawn with replacement from each class, Removed
// first.
inline std::vector<std::size_t> sample_balanced(std::span<const std::uint8_t> labels, std::size_t subset_size,
                                                Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw TrainError("balanced sampling needs both classes present");
  std::vector<std::size_t> out;
  out.reserve(subset_size);
  for (std::size_t k = 0; k < subset_size / 2; ++k) out.push_back(pos[rng.below(pos.size())]);
  for (std::size_t k = 0; k < subset_size / 2; ++k) out.push_back(neg[rng.below(neg.size())]);
  return out;
}

// Hyperparameters and sample of member `index`, all drawn from its derived
// seed.
struct MemberPlan {
  gbdt::TrainParams params;
  std::vector<std::size_t> sample;
};

inline MemberPlan plan_member(const BagConfig& config, std::size_t index, std::span<const std::uint8_t> labels) {
  const auto seed = derive_seed(config.master_seed, index);
  Rng rng(seed);
  MemberPlan plan;
  plan.params = config.base_params;
  plan.params.max_depth = rng.pick(config.depth_choices);
  plan.params.n_trees = rng.pick(config.tree_count_choices);
  plan.params.seed = seed;
  plan.sample = sample_balanced(labels, config.subset_size, rng);
  return plan;
}

inline BagModel train_bag(const DenseMatrix& x, std::span<const std::uint8_t> y, const BagConfig& config,
                          Featurizer featurizer, unsigned jobs = default_jobs()) {
  config.validate();
  if (x.cols != featurizer.schema.total_width()) throw DataError("training matrix width does not match schema");
  BagModel bag;
  bag.config = config;
  bag.featurizer = std::move(featurizer);
  bag.members.resize(std::size_t(config.n_classifiers));
  parallel_for(bag.members.size(), jobs, [&](std::size_t i) {
    const auto plan = plan_member(config, i, y);
    DenseMatrix sx(plan.sample.size(), x.cols);
    std::vector<std::uint8_t> sy(plan.sample.size());
    for (std::size_t k = 0; k < plan.sample.size(); ++k) {
      std::copy_n(x.row(plan.sample[k]).begin(), x.cols, sx.row(k).begin());
      sy[k] = y[plan.sample[k]];
    }
    bag.members[i] = gbdt::train(sx, sy, plan.params);
  });
  return bag;
}

// P(Removed) for one vector. Member outputs are combined in sorted order so
// the result does not depend on member order.
inline double predict_score(const BagModel& bag, std::span<const double> x) {
  if (x.size() != bag.schema().total_width()) {
    throw DataError("feature width mismatch: model expects " + std::to_string(bag.schema().total_width()) +
                    ", got " + std::to_string(x.size()));
  }
  std::vector<double> p;
  p.reserve(bag.members.size());
  for (const auto& m : bag.members) {
    const double pr = m.predict_proba(x);
    p.push_back(bag.config.aggregation == Aggregation::Mean ? pr : (pr > 0.5 ? 1.0 : 0.0));
  }
  std::sort(p.begin(), p.end());
  double sum = 0.0;
  for (double v : p) sum += v;
  return sum / double(p.size());
}

inline Label classify(double score, double threshold) { return score > threshold ? Label::Removed : Label::Stable; }

inline Label classify(const BagModel& bag, std::span<const double> x, double threshold) {
  return classify(predict_score(bag, x), threshold);
}

struct NamedScore {
  std::string name;
  double score;
};

// Member importances normalized to sum 1, averaged over members, sorted by
// descending score (ties by column order).
inline std::vector<NamedScore> aggregate_importance(const BagModel& bag) {
  const auto& names = bag.schema().feature_names();
  std::vector<double> total(names.size(), 0.0);
  for (const auto& m : bag.members) {
    const auto imp = gbdt::feature_importance(m);
    double sum = 0.0;
    for (double v : imp) sum += v;
    if (sum <= 0.0) continue;
    for (std::size_t j = 0; j < total.size() && j < imp.size(); ++j) total[j] += imp[j] / sum;
  }
  std::vector<std::size_t> order(names.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
  std::vector<NamedScore> out;
  out.reserve(names.size());
  const double n = bag.members.empty() ? 1.0 : double(bag.members.size());
  for (std::size_t j : order) out.push_back({names[j], total[j] / n});
  return out;
}

// ---------------------------------------------------------------------------
// Model document

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline Json tree_to_json(const gbdt::Tree& tree) {
  Json nodes = Json::array();
  for (const auto& n : tree.nodes) {
    if (n.is_leaf()) {
      nodes.push_back({{"leaf", n.leaf}});
    } else {
      nodes.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"default_left", n.default_left}});
    }
  }
  return {{"nodes", std::move(nodes)}};
}

inline gbdt::Tree tree_from_json(const Json& j, std::size_t width) {
  gbdt::Tree tree;
  const auto& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) throw DataError("model: tree without nodes");
  const int count = int(nodes.size());
  for (int i = 0; i < count; ++i) {
    const auto& jn = nodes[std::size_t(i)];
    gbdt::TreeNode n;
    if (jn.contains("leaf")) {
      n.leaf = jn.at("leaf").get<double>();
    } else {
      n.feature = jn.at("feature").get<int>();
      n.threshold = jn.at("threshold").get<double>();
      n.left = jn.at("left").get<int>();
      n.right = jn.at("right").get<int>();
      n.default_left = jn.value("default_left", true);
      if (n.feature < 0 || std::size_t(n.feature) >= width) throw DataError("model: split feature out of range");
      if (n.left <= i || n.right <= i || n.left >= count || n.right >= count) {
        throw DataError("model: bad child index in tree");
      }
    }
    tree.nodes.push_back(n);
  }
  return tree;
}

inline Json profiles_to_json(const DeveloperProfiles& profiles) {
  Json out = Json::array();
  for (const auto& [name, p] : profiles) {
    out.push_back({{"name", name},
                   {"app_count", p.app_count},
                   {"max_downloads", p.max_downloads},
                   {"mean_downloads", p.mean_downloads},
                   {"category", to_string(p.category)},
                   {"is_spamming", p.is_spamming}});
  }
  return out;
}

inline DeveloperCategory parse_category(const std::string& s) {
  for (auto c : {DeveloperCategory::Aggressive, DeveloperCategory::Active, DeveloperCategory::Moderate,
                 DeveloperCategory::Conservative}) {
    if (to_string(c) == s) return c;
  }
  throw DataError("model: unknown developer category '" + s + "'");
}

}  // namespace detail

// Document without created_at. Two trainings with the same inputs produce
// identical identity documents.
inline Json to_json(const BagModel& bag, bool include_timestamp = true) {
  const auto& schema = bag.schema();
  Json config = {{"n_classifiers", bag.config.n_classifiers},
                 {"subset_size", bag.config.subset_size},
                 {"depth_choices", bag.config.depth_choices},
                 {"tree_count_choices", bag.config.tree_count_choices},
                 {"master_seed", bag.config.master_seed},
                 {"aggregation", bag.config.aggregation == Aggregation::Mean ? "mean" : "majority_vote"}};
  Json vocab = Json::object();
  for (const auto& [name, v] : schema.vocabularies()) vocab[name] = v;
  Json members = Json::array();
  for (const auto& m : bag.members) {
    Json trees = Json::array();
    for (const auto& t : m.trees) trees.push_back(detail::tree_to_json(t));
    members.push_back({{"max_depth", m.params.max_depth},
                       {"n_trees", m.params.n_trees},
                       {"learning_rate", m.params.learning_rate},
                       {"l2_lambda", m.params.l2_lambda},
                       {"gamma_min_gain", m.params.gamma_min_gain},
                       {"min_child_weight", m.params.min_child_weight},
                       {"base_score", m.params.base_score},
                       {"seed", m.params.seed},
                       {"feature_count", m.feature_count},
                       {"gain_totals", m.gain_totals},
                       {"trees", std::move(trees)}});
  }
  Json doc;
  doc["format_version"] = bag.format_version;
  doc["variant"] = to_string(schema.variant());
  if (include_timestamp) doc["created_at"] = bag.created_at;
  doc["config"] = std::move(config);
  doc["schema"] = {{"feature_names", schema.feature_names()},
                   {"vocabularies", std::move(vocab)},
                   {"max_last_updated", schema.max_last_updated() ? Json(format_date(*schema.max_last_updated()))
                                                                  : Json(nullptr)},
                   {"developer_profiles", detail::profiles_to_json(bag.featurizer.profiles)}};
  doc["threshold"] = bag.threshold ? Json(*bag.threshold) : Json(nullptr);
  doc["members"] = std::move(members);
  return doc;
}

inline BagModel from_json(const Json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("unsupported model format_version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
    }
    BagModel bag;
    bag.format_version = version;
    bag.created_at = doc.value("created_at", "");
    const auto& jc = doc.at("config");
    bag.config.n_classifiers = jc.at("n_classifiers").get<int>();
    bag.config.subset_size = jc.at("subset_size").get<std::size_t>();
    bag.config.depth_choices = jc.at("depth_choices").get<std::vector<int>>();
    bag.config.tree_count_choices = jc.at("tree_count_choices").get<std::vector<int>>();
    bag.config.master_seed = jc.at("master_seed").get<std::uint64_t>();
    bag.config.aggregation = jc.at("aggregation").get<std::string>() == "majority_vote" ? Aggregation::MajorityVote
                                                                                        : Aggregation::Mean;
    bag.config.variant = parse_variant(doc.at("variant").get<std::string>());

    const auto& js = doc.at("schema");
    std::map<std::string, std::vector<std::string>> vocab;
    for (const auto& [name, v] : js.at("vocabularies").items()) vocab[name] = v.get<std::vector<std::string>>();
    std::optional<Date> max_date;
    if (!js.at("max_last_updated").is_null()) {
      max_date = parse_date(js.at("max_last_updated").get<std::string>());
      if (!max_date) throw DataError("model: bad max_last_updated");
    }
    FeatureSchema schema(bag.config.variant, std::move(vocab), max_date);
    if (schema.feature_names() != js.at("feature_names").get<std::vector<std::string>>()) {
      throw DataError("model: schema feature_names do not match vocabularies");
    }
    DeveloperProfiles profiles;
    for (const auto& jp : js.at("developer_profiles")) {
      DeveloperProfile p;
      p.developer_name = jp.at("name").get<std::string>();
      p.app_count = jp.at("app_count").get<std::int64_t>();
      p.max_downloads = jp.at("max_downloads").get<std::int64_t>();
      p.mean_downloads = jp.at("mean_downloads").get<double>();
      p.category = detail::parse_category(jp.at("category").get<std::string>());
      p.is_spamming = jp.at("is_spamming").get<bool>();
      profiles.emplace(p.developer_name, std::move(p));
    }
    bag.featurizer = {std::move(schema), std::move(profiles)};

    if (!doc.at("threshold").is_null()) {
      const double t = doc.at("threshold").get<double>();
      if (!(t >= 0.0 && t <= 1.0)) throw DataError("model: threshold outside [0,1]");
      bag.threshold = t;
    }
    const std::size_t width = bag.schema().total_width();
    for (const auto& jm : doc.at("members")) {
      gbdt::GBDTModel m;
      m.params.max_depth = jm.at("max_depth").get<int>();
      m.params.n_trees = jm.at("n_trees").get<int>();
      m.params.learning_rate = jm.at("learning_rate").get<double>();
      m.params.l2_lambda = jm.at("l2_lambda").get<double>();
      m.params.gamma_min_gain = jm.at("gamma_min_gain").get<double>();
      m.params.min_child_weight = jm.at("min_child_weight").get<double>();
      m.params.base_score = jm.at("base_score").get<double>();
      m.params.seed = jm.at("seed").get<std::uint64_t>();
      m.params.validate();
      m.feature_count = jm.at("feature_count").get<std::size_t>();
      if (m.feature_count != width) throw DataError("model: member feature_count does not match schema width");
      m.gain_totals = jm.at("gain_totals").get<std::vector<double>>();
      if (m.gain_totals.size() != width) throw DataError("model: gain_totals width mismatch");
      for (const auto& jt : jm.at("trees")) m.trees.push_back(detail::tree_from_json(jt, width));
      if (m.trees.size() > std::size_t(m.params.n_trees)) throw DataError("model: more trees than n_trees");
      bag.members.push_back(std::move(m));
    }
    if (bag.members.size() != std::size_t(bag.config.n_classifiers)) {
      throw DataError("model: member count does not match n_classifiers");
    }
    return bag;
  } catch (const Json::exception& e) {
    throw DataError(std::string("model: malformed document: ") + e.what());
  } catch (const TrainError& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

inline void save(const BagModel& bag, std::ostream& out) { out << to_json(bag).dump(1) << '\n'; }

inline BagModel load(std::istream& in) {
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("model: parse error: ") + e.what());
  }
  return from_json(doc);
}

inline void save_file(const BagModel& bag, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  save(bag, out);
}

inline BagModel load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path);
  return load(in);
}

// Stable identity of a model: FNV-1a over the document without created_at.
inline std::string model_version(const BagModel& bag) {
  const auto text = to_json(bag, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(to_string(bag.schema().variant())) + "-" + buf;
}

}  // namespace appfate
