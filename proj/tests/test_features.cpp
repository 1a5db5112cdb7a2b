#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "appfate/features.hpp"
#include "appfate/pipeline.hpp"
#include "appfate/synthetic.hpp"
#include "test_fixtures.hpp"

namespace appfate {
namespace {

using testing_support::whatsapp_record;

std::size_t column(const FeatureSchema& s, const std::string& name) {
  const auto& names = s.feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  EXPECT_NE(it, names.end()) << name;
  return std::size_t(it - names.begin());
}

bool has_column(const FeatureSchema& s, const std::string& name) {
  const auto& names = s.feature_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

ManifestGroups whatsapp_groups() { return group_manifest(parse_manifest_xml(testing_support::kWhatsAppManifest)); }

TEST(StarRatings, WhatsAppFiveStarRatio) {
  const auto r = normalize_star_ratings({4000000, 2000000, 2391572, 6000000, 100000000}, 114391572);
  EXPECT_NEAR(r[4], 100000000.0 / 114391572.0, 1e-12);
  EXPECT_NEAR(r[4], 0.87419, 1e-5);
}

TEST(StarRatings, DegenerateAndUniform) {
  EXPECT_EQ(normalize_star_ratings({0, 0, 0, 0, 0}, 0), (std::array<double, 5>{}));
  for (double v : normalize_star_ratings({1, 1, 1, 1, 1}, 5)) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(StarRatings, RatiosBoundedProperty) {
  Rng rng(9);
  for (int t = 0; t < 2000; ++t) {
    std::array<std::int64_t, 5> c{};
    std::int64_t sum = 0;
    for (auto& v : c) sum += (v = std::int64_t(rng.below(1000000)));
    const auto ratings = sum + std::int64_t(rng.below(1000));
    const auto r = normalize_star_ratings(c, ratings);
    double total = 0;
    for (double v : r) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      total += v;
    }
    EXPECT_LE(total, 1.0 + 1e-9);
  }
}

TEST(MaxDownloadsLog, Examples) {
  EXPECT_DOUBLE_EQ(max_downloads_log({5000, 10000}), 4.0);
  EXPECT_DOUBLE_EQ(max_downloads_log({0, 0}), 0.0);
  EXPECT_NEAR(max_downloads_log({5000000000LL, 5000000000LL}), std::log10(5e9), 1e-12);
  EXPECT_NEAR(max_downloads_log({5000000000LL, 5000000000LL}), 9.69897, 1e-5);
}

TEST(DaysSinceLastUpdate, Examples) {
  using namespace std::chrono;
  const Date max = year{2019} / June / 1;
  EXPECT_EQ(days_since_last_update(max, max), 0);
  EXPECT_EQ(days_since_last_update(year{2019} / May / 22, max), 10);
  EXPECT_EQ(days_since_last_update(year{2019} / July / 1, max), 0);
  EXPECT_EQ(days_since_last_update(year{2018} / June / 1, max), 365);
}

TEST(DaysSinceLastUpdate, AttainsZeroOnTrainingSet) {
  auto data = eval::gen_synthetic(300, 21);
  const auto f = Featurizer::fit(data.records, Variant::User);
  const auto col = column(f.schema, "DaysSinceLastUpdate");
  double lowest = 1e300;
  for (const auto& r : data.records) lowest = std::min(lowest, f(r, {})[col]);
  EXPECT_EQ(lowest, 0.0);
}

TEST(AndroidVersions, Forms) {
  const auto a = derive_android_versions("4.0.3 and up");
  EXPECT_EQ(a.lowest, "Ice Cream Sandwich");
  EXPECT_EQ(a.highest, "AndUp");
  EXPECT_EQ(a.encoded, "4.0.3 and up");
  const auto v = derive_android_versions("Varies with device");
  EXPECT_EQ(v.lowest, "Varies");
  EXPECT_EQ(v.highest, "Varies");
  EXPECT_EQ(v.encoded, "Varies");
  const auto r = derive_android_versions("2.3 - 5.0");
  EXPECT_EQ(r.lowest, "Gingerbread");
  EXPECT_EQ(r.highest, "Lollipop");
  EXPECT_EQ(r.encoded, "2.3 - 5.0");
  const auto u = derive_android_versions("sometimes");
  EXPECT_EQ(u.lowest, "Unknown");
  EXPECT_EQ(u.encoded, "sometimes");
  EXPECT_FALSE(u.recognized);
}

TEST(AndroidVersions, ReleaseNames) {
  EXPECT_EQ(release_name("1.5"), "Cupcake");
  EXPECT_EQ(release_name("1.6"), "Donut");
  EXPECT_EQ(release_name("2.1"), "Eclair");
  EXPECT_EQ(release_name("2.2"), "Froyo");
  EXPECT_EQ(release_name("3.2"), "Honeycomb");
  EXPECT_EQ(release_name("4.3"), "Jelly Bean");
  EXPECT_EQ(release_name("4.4W"), "KitKat");
  EXPECT_EQ(release_name("5.1"), "Lollipop");
}

TEST(ScalarTransforms, WhatsAppValues) {
  const auto r = whatsapp_record();
  const auto a = compute_attributes(r, whatsapp_groups(), default_profile(), std::nullopt);
  namespace f = feature;
  EXPECT_NEAR(a.numeric[f::kOneStar + 4], 100000000.0 / 114391572.0, 1e-12);
  EXPECT_EQ(a.numeric[f::kLenTitle], 18.0);
  EXPECT_EQ(a.numeric[f::kPaid], 0.0);
  EXPECT_EQ(a.numeric[f::kLastUpdated], 2020.0);
  EXPECT_EQ(a.category[f::kLowestAndroidVersion], "Ice Cream Sandwich");
  EXPECT_NEAR(a.numeric[f::kMaxDownloadsLog], std::log10(5e9), 1e-12);
  EXPECT_EQ(a.numeric[f::kPrivacyPolicyLink], 1.0);
  EXPECT_EQ(a.numeric[f::kDevRegisteredDomain], 1.0);
  EXPECT_EQ(a.numeric[f::kFileSize], 0.0);
  EXPECT_EQ(a.category[f::kCurrentVersion], "2");
  EXPECT_EQ(a.category[f::kContentRating], "PEGI 3");
}

TEST(ScalarTransforms, Misc) {
  EXPECT_EQ(char_count("héllo"), 5u);
  EXPECT_EQ(current_version_major("Varies with device"), "other");
  EXPECT_EQ(current_version_major("10.1"), "10");
  EXPECT_TRUE(file_size_varies("varies with device"));
  EXPECT_FALSE(file_size_varies("28M"));
  auto r = whatsapp_record();
  r.whats_new.reset();
  r.price = 1.99;
  const auto a = compute_attributes(r, {}, default_profile(), std::nullopt);
  EXPECT_EQ(a.numeric[feature::kLenWhatsNew], 0.0);
  EXPECT_EQ(a.numeric[feature::kPaid], 1.0);
}

TEST(DevRegisteredDomain, Examples) {
  EXPECT_EQ(dev_registered_domain("https://www.whatsapp.com/"), 1);
  EXPECT_EQ(dev_registered_domain("https://sites.google.com/view/x"), 0);
  EXPECT_EQ(dev_registered_domain(std::nullopt), 0);
  EXPECT_EQ(dev_registered_domain("not a url"), 0);
  EXPECT_EQ(dev_registered_domain("http://me.blogspot.com"), 0);
}

RawAppRecord app_by(const std::string& dev, std::int64_t downloads) {
  auto r = whatsapp_record();
  r.developer_name = dev;
  r.downloads = DownloadRange{downloads, downloads};
  return r;
}

TEST(DeveloperProfiles, Examples) {
  std::vector<RawAppRecord> records = {app_by("Solo", 100)};
  for (int i = 0; i < 51; ++i) records.push_back(app_by("Spammer", i == 0 ? 200000 : 1000));
  for (int i = 0; i < 51; ++i) records.push_back(app_by("Hit", i == 0 ? 2000000 : 100));
  for (int i = 0; i < 10; ++i) records.push_back(app_by("Ten", 10));
  for (int i = 0; i < 9; ++i) records.push_back(app_by("Nine", 10));
  const auto p = build_developer_profiles(records);
  EXPECT_EQ(p.at("Solo").category, DeveloperCategory::Conservative);
  EXPECT_FALSE(p.at("Solo").is_spamming);
  EXPECT_EQ(p.at("Spammer").category, DeveloperCategory::Aggressive);
  EXPECT_LT(p.at("Spammer").mean_downloads, 10000.0);
  EXPECT_TRUE(p.at("Spammer").is_spamming);
  EXPECT_EQ(p.at("Hit").category, DeveloperCategory::Aggressive);
  EXPECT_FALSE(p.at("Hit").is_spamming);
  EXPECT_EQ(p.at("Ten").category, DeveloperCategory::Active);
  EXPECT_EQ(p.at("Nine").category, DeveloperCategory::Moderate);
}

TEST(DeveloperProfiles, CategoryBands) {
  EXPECT_EQ(categorize_developer(1), DeveloperCategory::Conservative);
  EXPECT_EQ(categorize_developer(2), DeveloperCategory::Moderate);
  EXPECT_EQ(categorize_developer(50), DeveloperCategory::Active);
  EXPECT_EQ(categorize_developer(51), DeveloperCategory::Aggressive);
}

TEST(DeveloperProfiles, SpammingImpliesAggressive) {
  auto data = eval::gen_synthetic(3000, 4);
  for (const auto& [name, p] : build_developer_profiles(data.records)) {
    if (p.is_spamming) {
      EXPECT_EQ(p.category, DeveloperCategory::Aggressive);
    }
    EXPECT_EQ(p.category, categorize_developer(p.app_count));
  }
}

TEST(FeatureSchema, GenreVocabulary) {
  auto a = whatsapp_record(), b = a, c = a;
  a.genre = b.genre = "Casino";
  c.genre = "Tools";
  const auto s = fit_schema(std::vector<RawAppRecord>{a, b, c}, Variant::User);
  EXPECT_EQ(s.vocabularies().at("Genre"), (std::vector<std::string>{"Casino", "Tools"}));
  EXPECT_TRUE(has_column(s, "Genre_Casino"));
}

TEST(FeatureSchema, VariantsHave47And37Features) {
  const std::vector<RawAppRecord> records = {whatsapp_record()};
  const auto user = fit_schema(records, Variant::User);
  const auto dev = fit_schema(records, Variant::Developer);
  EXPECT_EQ(user.feature_count(), 47u);
  EXPECT_EQ(dev.feature_count(), 37u);
  for (const char* name : {"OneStarRatings", "TwoStarRatings", "ThreeStarRatings", "FourStarRatings",
                           "FiveStarRatings", "ReviewsAverage", "LenWhatsNew", "MaxDownloadsLog",
                           "DaysSinceLastUpdate", "LastUpdated"}) {
    EXPECT_TRUE(has_column(user, name)) << name;
    EXPECT_FALSE(has_column(dev, name)) << name;
  }
  EXPECT_TRUE(has_column(dev, "PrivacyPolicyLink"));
  EXPECT_TRUE(has_column(dev, "IsSpamming"));
  EXPECT_FALSE(dev.max_last_updated().has_value());
  EXPECT_TRUE(user.max_last_updated().has_value());
}

TEST(FeatureSchema, NamesUniqueAndWidthConsistent) {
  auto data = eval::gen_synthetic(400, 8);
  for (auto v : {Variant::User, Variant::Developer}) {
    const auto s = fit_schema(data.records, v);
    std::set<std::string> unique(s.feature_names().begin(), s.feature_names().end());
    EXPECT_EQ(unique.size(), s.feature_names().size());
    std::size_t numeric = 0, vocab = 0;
    for (const auto& slot : s.slots()) {
      if (kFeatureDefs[slot.def].categorical) {
        vocab += s.vocabularies().at(std::string(kFeatureDefs[slot.def].name)).size();
      } else {
        ++numeric;
      }
    }
    EXPECT_EQ(s.total_width(), numeric + vocab);
  }
}

TEST(FeatureSchema, EmptyTrainingSetRejected) {
  EXPECT_THROW(fit_schema(std::vector<RawAppRecord>{}, Variant::User), DataError);
}

TEST(Vectorize, UnseenGenreEncodesZeroBlock) {
  auto data = eval::gen_synthetic(200, 2);
  const auto f = Featurizer::fit(data.records, Variant::Developer);
  auto r = data.records[0];
  r.genre = "Never Seen";
  const auto v = f(r, {});
  for (const auto& slot : f.schema.slots()) {
    if (kFeatureDefs[slot.def].name != "Genre") continue;
    for (std::size_t c = slot.offset; c < slot.offset + slot.width; ++c) EXPECT_EQ(v[c], 0.0);
  }
}

TEST(Vectorize, NoPermissionsGivesZeroFlags) {
  const auto f = Featurizer::fit(std::vector<RawAppRecord>{whatsapp_record()}, Variant::User);
  const auto v = f(whatsapp_record(), group_manifest(parse_manifest_xml("<manifest package=\"a\"/>")));
  for (auto name : kPermissionGroupNames) EXPECT_EQ(v[column(f.schema, std::string(name))], 0.0);
}

TEST(Vectorize, ManifestFlagsCopied) {
  const auto f = Featurizer::fit(std::vector<RawAppRecord>{whatsapp_record()}, Variant::User);
  const auto v = f(whatsapp_record(), whatsapp_groups());
  EXPECT_EQ(v[column(f.schema, "Contacts")], 1.0);
  EXPECT_EQ(v[column(f.schema, "SMS")], 1.0);
  EXPECT_EQ(v[column(f.schema, "Calendar")], 0.0);
  EXPECT_EQ(v[column(f.schema, "Intent")], 1.0);
}

TEST(Vectorize, OneHotBlocksAndFiniteValues) {
  auto data = eval::gen_synthetic(500, 13);
  const std::vector<RawAppRecord> train(data.records.begin(), data.records.begin() + 250);
  const auto f = Featurizer::fit(train, Variant::User);
  for (const auto& r : data.records) {
    const auto v = f(r, group_manifest(parse_manifest_xml(r.manifest_source)));
    ASSERT_EQ(v.size(), f.schema.total_width());
    for (double x : v) EXPECT_TRUE(std::isfinite(x));
    for (const auto& slot : f.schema.slots()) {
      const auto& def = kFeatureDefs[slot.def];
      if (!def.categorical) continue;
      double ones = 0;
      for (std::size_t c = slot.offset; c < slot.offset + slot.width; ++c) {
        EXPECT_TRUE(v[c] == 0.0 || v[c] == 1.0);
        ones += v[c];
      }
      const auto attrs = compute_attributes(r, {}, f.profile_for(r.developer_name), f.schema.max_last_updated());
      const auto& vocab = f.schema.vocabularies().at(std::string(def.name));
      const bool known = std::binary_search(vocab.begin(), vocab.end(), attrs.category[slot.def]);
      EXPECT_EQ(ones, known ? 1.0 : 0.0) << def.name;
    }
  }
}

TEST(Vectorize, PureFunction) {
  auto data = eval::gen_synthetic(200, 17);
  const auto f1 = Featurizer::fit(data.records, Variant::User);
  const auto f2 = Featurizer::fit(data.records, Variant::User);
  EXPECT_EQ(f1, f2);
  for (const auto& r : data.records) {
    const auto g = group_manifest(parse_manifest_xml(r.manifest_source));
    const auto a = f1(r, g), b = f2(r, g);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  }
}

// Changes every post-deployment attribute of a record.
void mutate_post_deployment(RawAppRecord& r, Rng& rng) {
  using namespace std::chrono;
  r.last_updated = year_month_day{sys_days{year{2010} / January / 1} + days{std::int64_t(rng.below(4000))}};
  r.whats_new = rng.bernoulli(0.5) ? std::optional<std::string>("changed " + std::to_string(rng.below(1000)))
                                   : std::nullopt;
  r.reviews_average = rng.uniform(0.0, 5.0);
  r.ratings = std::int64_t(rng.below(1000000)) + 500000;
  for (auto& s : r.star_ratings) s = std::int64_t(rng.below(100000));
  const auto d = std::int64_t(rng.below(1000000000));
  r.downloads = DownloadRange{d, d};
}

TEST(Vectorize, DeveloperVariantIgnoresPostDeploymentFields) {
  auto data = eval::gen_synthetic(300, 31);
  const auto f = Featurizer::fit(data.records, Variant::Developer);
  Rng rng(5);
  for (const auto& r : data.records) {
    const auto g = group_manifest(parse_manifest_xml(r.manifest_source));
    auto m = r;
    mutate_post_deployment(m, rng);
    EXPECT_EQ(f(r, g), f(m, g));
  }
}

TEST(Vectorize, UserVariantSeesPostDeploymentFields) {
  auto data = eval::gen_synthetic(100, 31);
  const auto f = Featurizer::fit(data.records, Variant::User);
  Rng rng(5);
  std::size_t changed = 0;
  for (const auto& r : data.records) {
    auto m = r;
    mutate_post_deployment(m, rng);
    changed += f(r, {}) != f(m, {});
  }
  EXPECT_EQ(changed, data.records.size());
}

TEST(Featurizer, UnknownDeveloperDefaultsToConservative) {
  const auto f = Featurizer::fit(std::vector<RawAppRecord>{whatsapp_record()}, Variant::Developer);
  const auto p = f.profile_for("Somebody New");
  EXPECT_EQ(p.category, DeveloperCategory::Conservative);
  EXPECT_FALSE(p.is_spamming);
}

}  // namespace
}  // namespace appfate
