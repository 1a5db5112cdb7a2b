#pragma once

// Feature engineering: turns a RawAppRecord plus its manifest groups into
// the fixed-width numeric vector of the user-centered (47 features) or
// developer-centered (37 features) model. Categorical features are one-hot
// encoded against vocabularies fitted on training data.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "appfate/android_version.hpp"
#include "appfate/calendar.hpp"
#include "appfate/error.hpp"
#include "appfate/ingest.hpp"
#include "appfate/manifest.hpp"
#include "appfate/tables.hpp"

namespace appfate {

enum class Variant { User, Developer };

inline std::string_view to_string(Variant v) { return v == Variant::User ? "user" : "developer"; }

inline Variant parse_variant(std::string_view s) {
  if (detail::iequals(s, "user")) return Variant::User;
  if (detail::iequals(s, "developer")) return Variant::Developer;
  throw DataError("unknown variant '" + std::string(s) + "' (expected user or developer)");
}

struct FeatureDef {
  std::string_view name;
  bool categorical;
  // Only observable once the app is live in the store; dropped from the
  // developer-centered variant.
  bool post_deployment;
};

// Every independent variable, in output order.
inline constexpr std::array<FeatureDef, 47> kFeatureDefs = {{
    {"OneStarRatings", false, true},
    {"TwoStarRatings", false, true},
    {"ThreeStarRatings", false, true},
    {"FourStarRatings", false, true},
    {"FiveStarRatings", false, true},
    {"ReviewsAverage", false, true},
    {"LenTitle", false, false},
    {"LenDescription", false, false},
    {"LenWhatsNew", false, true},
    {"DeveloperWebsite", false, false},
    {"DeveloperEmail", false, false},
    {"DeveloperAddress", false, false},
    {"PrivacyPolicyLink", false, false},
    {"Paid", false, false},
    {"MaxDownloadsLog", false, true},
    {"LowestAndroidVersion", true, false},
    {"HighestAndroidVersion", true, false},
    {"AndroidVersion", true, false},
    {"DevRegisteredDomain", false, false},
    {"DaysSinceLastUpdate", false, true},
    {"LastUpdated", false, true},
    {"FileSize", false, false},
    {"CurrentVersion", true, false},
    {"Genre", true, false},
    {"ContentRating", true, false},
    {"DeveloperCategory", true, false},
    {"IsSpamming", false, false},
    {"Storage", false, false},
    {"Calendar", false, false},
    {"Camera", false, false},
    {"Contacts", false, false},
    {"Location", false, false},
    {"Microphone", false, false},
    {"Phone", false, false},
    {"Sensors", false, false},
    {"SMS", false, false},
    {"Net", false, false},
    {"Intent", false, false},
    {"Bluetooth", false, false},
    {"App", false, false},
    {"Provider", false, false},
    {"Speech", false, false},
    {"NFC", false, false},
    {"Media", false, false},
    {"Hardware", false, false},
    {"Google", false, false},
    {"OS", false, false},
}};

namespace feature {
// Indices into kFeatureDefs used by the transforms below.
inline constexpr std::size_t kOneStar = 0, kReviewsAverage = 5, kLenTitle = 6, kLenDescription = 7,
                             kLenWhatsNew = 8, kDeveloperWebsite = 9, kDeveloperEmail = 10,
                             kDeveloperAddress = 11, kPrivacyPolicyLink = 12, kPaid = 13,
                             kMaxDownloadsLog = 14, kLowestAndroidVersion = 15,
                             kHighestAndroidVersion = 16, kAndroidVersion = 17,
                             kDevRegisteredDomain = 18, kDaysSinceLastUpdate = 19, kLastUpdated = 20,
                             kFileSize = 21, kCurrentVersion = 22, kGenre = 23, kContentRating = 24,
                             kDeveloperCategory = 25, kIsSpamming = 26, kFirstPermission = 27,
                             kFirstAction = 36;
}  // namespace feature

inline bool included(const FeatureDef& def, Variant v) {
  return v == Variant::User || !def.post_deployment;
}

// Raw record attributes behind the post-deployment features. downloads also
// feeds the developer profiles, which are fitted on the training set.
inline constexpr std::array<std::string_view, 10> kPostDeploymentAttributes = {
    "last_updated",     "whats_new",         "reviews_average",   "ratings",
    "one_star_ratings", "two_star_ratings",  "three_star_ratings", "four_star_ratings",
    "five_star_ratings", "downloads"};

// ---------------------------------------------------------------------------
// Developer profiles

enum class DeveloperCategory { Aggressive, Active, Moderate, Conservative };

inline std::string_view to_string(DeveloperCategory c) {
  switch (c) {
    case DeveloperCategory::Aggressive: return "Aggressive";
    case DeveloperCategory::Active: return "Active";
    case DeveloperCategory::Moderate: return "Moderate";
    case DeveloperCategory::Conservative: return "Conservative";
  }
  return "Conservative";
}

// Bands: >50 Aggressive, 10..50 Active, 2..9 Moderate, 1 Conservative.
inline DeveloperCategory categorize_developer(std::int64_t app_count) {
  if (app_count > 50) return DeveloperCategory::Aggressive;
  if (app_count >= 10) return DeveloperCategory::Active;
  if (app_count >= 2) return DeveloperCategory::Moderate;
  return DeveloperCategory::Conservative;
}

struct DeveloperProfile {
  std::string developer_name;
  std::int64_t app_count = 1;
  std::int64_t max_downloads = 0;
  double mean_downloads = 0.0;
  DeveloperCategory category = DeveloperCategory::Conservative;
  bool is_spamming = false;

  friend bool operator==(const DeveloperProfile&, const DeveloperProfile&) = default;
};

inline constexpr std::int64_t kSpamMaxDownloads = 1'000'000;
inline constexpr double kSpamMeanDownloads = 10'000.0;

using DeveloperProfiles = std::map<std::string, DeveloperProfile>;

// Downloads of an app are the upper end of its bracket.
inline DeveloperProfiles build_developer_profiles(std::span<const RawAppRecord> records) {
  struct Acc {
    std::int64_t n = 0, max = 0;
    double sum = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : records) {
    auto& a = acc[r.developer_name];
    const std::int64_t d = r.downloads ? r.downloads->high : 0;
    ++a.n;
    a.max = std::max(a.max, d);
    a.sum += double(d);
  }
  DeveloperProfiles out;
  for (const auto& [name, a] : acc) {
    DeveloperProfile p;
    p.developer_name = name;
    p.app_count = a.n;
    p.max_downloads = a.max;
    p.mean_downloads = a.sum / double(a.n);
    p.category = categorize_developer(a.n);
    p.is_spamming = p.category == DeveloperCategory::Aggressive && p.max_downloads <= kSpamMaxDownloads &&
                    p.mean_downloads < kSpamMeanDownloads;
    out.emplace(name, std::move(p));
  }
  return out;
}

// Profile used for developers absent from training data.
inline DeveloperProfile default_profile(std::string name = {}) {
  DeveloperProfile p;
  p.developer_name = std::move(name);
  return p;
}

// ---------------------------------------------------------------------------
// Scalar transforms

// count / ratings for each star level; all zero when there are no ratings.
inline std::array<double, 5> normalize_star_ratings(const std::array<std::int64_t, 5>& counts,
                                                    std::int64_t ratings) {
  std::array<double, 5> out{};
  if (ratings <= 0) return out;
  for (std::size_t i = 0; i < 5; ++i) out[i] = double(counts[i]) / double(ratings);
  return out;
}

// log10 of the bracket's upper end; 0 for an empty bracket.
inline double max_downloads_log(const DownloadRange& range) {
  return range.high >= 1 ? std::log10(double(range.high)) : 0.0;
}

inline long days_since_last_update(const Date& date, const Date& max_date) {
  return std::max(0L, days_between(date, max_date));
}

// Number of Unicode code points in UTF-8 text.
inline std::size_t char_count(std::string_view utf8) {
  return static_cast<std::size_t>(std::count_if(utf8.begin(), utf8.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

// Leading integer of a version string ("2.20.157" -> "2"), else "other".
inline std::string current_version_major(std::string_view version) {
  version = detail::trim(version);
  std::size_t n = 0;
  while (n < version.size() && std::isdigit(static_cast<unsigned char>(version[n]))) ++n;
  if (n == 0) return "other";
  auto digits = version.substr(0, n);
  while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
  return std::string(digits);
}

inline bool file_size_varies(std::string_view file_size) {
  return detail::iequals(detail::trim(file_size), "Varies with device");
}

// Lower-cased host of a URL-ish string, or nullopt when none can be found.
inline std::optional<std::string> url_host(std::string_view url) {
  url = detail::trim(url);
  if (const auto scheme = url.find("://"); scheme != std::string_view::npos) url.remove_prefix(scheme + 3);
  url = url.substr(0, url.find_first_of("/?#"));
  if (const auto at = url.rfind('@'); at != std::string_view::npos) url.remove_prefix(at + 1);
  url = url.substr(0, url.find(':'));
  std::string host;
  for (char c : url) host.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  if (host.empty() || host.find('.') == std::string::npos || host.front() == '.' || host.back() == '.' ||
      host.find("..") != std::string::npos) {
    return std::nullopt;
  }
  for (char c : host) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-')) return std::nullopt;
  }
  return host;
}

// 1 when the website's host is not a known shared-hosting or social site.
inline int dev_registered_domain(const std::optional<std::string>& website,
                                 const HostDenyList& deny = HostDenyList::builtin()) {
  if (!website) return 0;
  auto host = url_host(*website);
  if (!host) return 0;
  std::string_view h = *host;
  if (h.starts_with("www.")) h.remove_prefix(4);
  return deny.denies(*host) || deny.denies(h) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Attributes: every feature's value before variant selection and encoding.

struct AppAttributes {
  std::array<double, kFeatureDefs.size()> numeric{};
  std::array<std::string, kFeatureDefs.size()> category;
};

struct ManifestGroups {
  PermissionGroups permissions;
  ActionGroups actions;
};

inline ManifestGroups group_manifest(const ManifestInfo& m) {
  return {group_permissions(m.permissions), group_actions(m.receiver_actions)};
}

// `max_last_updated` may be absent when DaysSinceLastUpdate is not needed.
inline AppAttributes compute_attributes(const RawAppRecord& r, const ManifestGroups& groups,
                                        const DeveloperProfile& profile,
                                        const std::optional<Date>& max_last_updated,
                                        const HostDenyList& deny = HostDenyList::builtin()) {
  namespace f = feature;
  AppAttributes a;
  std::array<std::int64_t, 5> stars{};
  for (std::size_t i = 0; i < 5; ++i) stars[i] = r.star_ratings[i].value_or(0);
  const auto ratios = normalize_star_ratings(stars, r.ratings.value_or(0));
  for (std::size_t i = 0; i < 5; ++i) a.numeric[f::kOneStar + i] = ratios[i];
  a.numeric[f::kReviewsAverage] = r.reviews_average.value_or(0.0);
  a.numeric[f::kLenTitle] = double(char_count(r.title));
  a.numeric[f::kLenDescription] = double(char_count(r.description));
  a.numeric[f::kLenWhatsNew] = r.whats_new ? double(char_count(*r.whats_new)) : 0.0;
  a.numeric[f::kDeveloperWebsite] = r.developer_website ? 1.0 : 0.0;
  a.numeric[f::kDeveloperEmail] = r.developer_email ? 1.0 : 0.0;
  a.numeric[f::kDeveloperAddress] = r.developer_address ? 1.0 : 0.0;
  a.numeric[f::kPrivacyPolicyLink] = r.privacy_policy_link ? 1.0 : 0.0;
  a.numeric[f::kPaid] = r.price.value_or(0.0) > 0.0 ? 1.0 : 0.0;
  a.numeric[f::kMaxDownloadsLog] = r.downloads ? max_downloads_log(*r.downloads) : 0.0;
  const auto versions = derive_android_versions(r.android_version);
  a.category[f::kLowestAndroidVersion] = versions.lowest;
  a.category[f::kHighestAndroidVersion] = versions.highest;
  a.category[f::kAndroidVersion] = versions.encoded;
  a.numeric[f::kDevRegisteredDomain] = dev_registered_domain(r.developer_website, deny);
  if (r.last_updated) {
    if (max_last_updated) {
      a.numeric[f::kDaysSinceLastUpdate] = double(days_since_last_update(*r.last_updated, *max_last_updated));
    }
    a.numeric[f::kLastUpdated] = double(int(r.last_updated->year()));
  }
  a.numeric[f::kFileSize] = file_size_varies(r.file_size) ? 1.0 : 0.0;
  a.category[f::kCurrentVersion] = current_version_major(r.current_version);
  a.category[f::kGenre] = r.genre;
  a.category[f::kContentRating] = r.content_rating;
  a.category[f::kDeveloperCategory] = std::string(to_string(profile.category));
  a.numeric[f::kIsSpamming] = profile.is_spamming ? 1.0 : 0.0;
  for (std::size_t i = 0; i < 9; ++i) a.numeric[f::kFirstPermission + i] = groups.permissions.flags[i];
  for (std::size_t i = 0; i < 11; ++i) a.numeric[f::kFirstAction + i] = groups.actions.flags[i];
  return a;
}

// ---------------------------------------------------------------------------
// Schema

struct FeatureSlot {
  std::size_t def;     // index into kFeatureDefs
  std::size_t offset;  // first column
  std::size_t width;

  friend bool operator==(const FeatureSlot&, const FeatureSlot&) = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  // Builds the column layout. Vocabularies are keyed by categorical feature
  // name; each is sorted and duplicate-free.
  FeatureSchema(Variant variant, std::map<std::string, std::vector<std::string>> vocabularies,
                std::optional<Date> max_last_updated)
      : variant_(variant), vocabularies_(std::move(vocabularies)), max_last_updated_(max_last_updated) {
    for (auto& [name, vocab] : vocabularies_) {
      std::sort(vocab.begin(), vocab.end());
      vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    }
    std::size_t offset = 0;
    for (std::size_t d = 0; d < kFeatureDefs.size(); ++d) {
      const auto& def = kFeatureDefs[d];
      if (!included(def, variant_)) continue;
      if (def.categorical) {
        const auto& vocab = vocabularies_[std::string(def.name)];
        for (const auto& cat : vocab) feature_names_.push_back(std::string(def.name) + "_" + cat);
        slots_.push_back({d, offset, vocab.size()});
        offset += vocab.size();
      } else {
        feature_names_.emplace_back(def.name);
        slots_.push_back({d, offset, 1});
        offset += 1;
      }
    }
    for (auto it = vocabularies_.begin(); it != vocabularies_.end();) {
      const bool known = std::any_of(slots_.begin(), slots_.end(), [&](const FeatureSlot& s) {
        return kFeatureDefs[s.def].categorical && kFeatureDefs[s.def].name == it->first;
      });
      it = known ? std::next(it) : vocabularies_.erase(it);
    }
    if (variant_ == Variant::Developer) max_last_updated_.reset();
  }

  Variant variant() const { return variant_; }
  const std::map<std::string, std::vector<std::string>>& vocabularies() const { return vocabularies_; }
  const std::optional<Date>& max_last_updated() const { return max_last_updated_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<FeatureSlot>& slots() const { return slots_; }
  std::size_t total_width() const { return feature_names_.size(); }

  // Number of Table-level features (before one-hot expansion).
  std::size_t feature_count() const { return slots_.size(); }

  // Column of `category` within a categorical feature, if in vocabulary.
  std::optional<std::size_t> category_column(const FeatureSlot& slot, const std::string& category) const {
    const auto it = vocabularies_.find(std::string(kFeatureDefs[slot.def].name));
    if (it == vocabularies_.end()) return std::nullopt;
    const auto pos = std::lower_bound(it->second.begin(), it->second.end(), category);
    if (pos == it->second.end() || *pos != category) return std::nullopt;
    return slot.offset + std::size_t(pos - it->second.begin());
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  Variant variant_ = Variant::Developer;
  std::map<std::string, std::vector<std::string>> vocabularies_;
  std::optional<Date> max_last_updated_;
  std::vector<std::string> feature_names_;
  std::vector<FeatureSlot> slots_;
};

// Vocabularies hold exactly the categories seen in `records`.
inline FeatureSchema fit_schema(std::span<const RawAppRecord> records, Variant variant) {
  if (records.empty()) throw DataError("fit_schema: no training records");
  const auto profiles = build_developer_profiles(records);
  std::map<std::string, std::vector<std::string>> vocab;
  std::optional<Date> max_date;
  for (const auto& r : records) {
    const auto attrs = compute_attributes(r, {}, profiles.at(r.developer_name), std::nullopt);
    for (std::size_t d = 0; d < kFeatureDefs.size(); ++d) {
      if (kFeatureDefs[d].categorical && included(kFeatureDefs[d], variant)) {
        vocab[std::string(kFeatureDefs[d].name)].push_back(attrs.category[d]);
      }
    }
    if (r.last_updated && (!max_date || *r.last_updated > *max_date)) max_date = r.last_updated;
  }
  return FeatureSchema(variant, std::move(vocab), max_date);
}

// Encodes attributes in the schema's column order. Unseen categories leave
// their block all zeros.
inline std::vector<double> encode(const AppAttributes& attrs, const FeatureSchema& schema) {
  std::vector<double> out(schema.total_width(), 0.0);
  for (const auto& slot : schema.slots()) {
    if (kFeatureDefs[slot.def].categorical) {
      if (auto col = schema.category_column(slot, attrs.category[slot.def])) out[*col] = 1.0;
    } else {
      out[slot.offset] = attrs.numeric[slot.def];
    }
  }
  return out;
}

inline std::vector<double> vectorize(const RawAppRecord& record, const ManifestGroups& groups,
                                     const DeveloperProfile& profile, const FeatureSchema& schema,
                                     const HostDenyList& deny = HostDenyList::builtin()) {
  return encode(compute_attributes(record, groups, profile, schema.max_last_updated(), deny), schema);
}

// Schema plus developer profiles: everything needed to vectorize a record.
struct Featurizer {
  FeatureSchema schema;
  DeveloperProfiles profiles;

  static Featurizer fit(std::span<const RawAppRecord> records, Variant variant) {
    return {fit_schema(records, variant), build_developer_profiles(records)};
  }

  DeveloperProfile profile_for(const std::string& developer) const {
    const auto it = profiles.find(developer);
    return it == profiles.end() ? default_profile(developer) : it->second;
  }

  std::vector<double> operator()(const RawAppRecord& record, const ManifestGroups& groups) const {
    return vectorize(record, groups, profile_for(record.developer_name), schema);
  }

  friend bool operator==(const Featurizer&, const Featurizer&) = default;
};

}  // namespace appfate
