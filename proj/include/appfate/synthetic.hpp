#pragma once

// Synthetic app records with a known removal model, for desk-scale
// testing. Each record's removal probability is a logistic function of a
// few pre-deployment attributes, and the generator returns that
// probability so the best achievable AUC can be computed exactly.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "appfate/calendar.hpp"
#include "appfate/error.hpp"
#include "appfate/gbdt.hpp"
#include "appfate/ingest.hpp"
#include "appfate/rng.hpp"

namespace appfate::eval {

// Logit weights of the planted removal model.
struct SignalSpec {
  double intercept = 0.0;
  double no_privacy_policy = 0.0;   // privacy_policy_link absent
  double teen_rating = 0.0;         // content_rating == "Teen"
  double sms_permission = 0.0;      // requests an SMS-group permission
  double registered_domain = 0.0;   // website on the developer's own domain
  double paid = 0.0;                // price > 0

  // PrivacyPolicyLink dominates; ContentRating=Teen and SMS follow.
  static SignalSpec strong() { return {-1.1, 2.6, 1.2, 1.0, -0.9, -0.8}; }
  static SignalSpec none() { return {}; }
};

struct SyntheticData {
  std::vector<RawAppRecord> records;
  std::vector<double> probability;  // true P(Removed) per record
  std::vector<Label> labels;
};

namespace detail {

inline const std::vector<std::string>& synthetic_genres() {
  static const std::vector<std::string> g = {"Tools",         "Entertainment", "Education", "Lifestyle",
                                             "Personalization", "Business",    "Books & Reference",
                                             "Music & Audio", "Puzzle",        "Arcade",    "Casual",
                                             "Communication"};
  return g;
}

inline std::string random_text(Rng& rng, std::size_t length) {
  static constexpr std::string_view kWords[] = {"app",   "free", "best", "photo", "video", "game", "music",
                                                "smart", "pro",  "lite", "easy",  "fast",  "cool", "new"};
  std::string out;
  while (out.size() < length) {
    if (!out.empty()) out.push_back(' ');
    out += kWords[rng.below(std::size(kWords))];
  }
  out.resize(length);
  return out;
}

inline std::string manifest_xml(const std::string& package, const std::vector<std::string>& permissions,
                                const std::vector<std::string>& actions) {
  std::string xml = "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n"
                    "<manifest xmlns:android=\"http://schemas.android.com/apk/res/android\" package=\"" +
                    package + "\">";
  for (const auto& p : permissions) xml += "<uses-permission android:name=\"" + p + "\"/>";
  xml += "<application>";
  if (!actions.empty()) {
    xml += "<receiver android:name=\".Receiver\"><intent-filter>";
    for (const auto& a : actions) xml += "<action android:name=\"" + a + "\"/>";
    xml += "</intent-filter></receiver>";
  }
  xml += "</application></manifest>";
  return xml;
}

}  // namespace detail

inline SyntheticData gen_synthetic(std::size_t n, std::uint64_t seed, const SignalSpec& spec = SignalSpec::strong()) {
  using namespace std::chrono;
  if (n < 10) throw DataError("gen_synthetic: n must be >= 10");
  Rng rng(seed);
  static const std::vector<std::string> kRatings = {"Everyone", "Everyone 10+", "Teen", "Mature 17+"};
  static const std::vector<std::string> kAndroid = {"2.3 and up", "4.0.3 and up", "4.1 and up",   "4.4 and up",
                                                    "5.0 and up", "Varies with device", "2.3 - 5.0", "4.0 - 8.0"};
  static const std::vector<std::int64_t> kDownloads = {10, 100, 1'000, 10'000, 100'000, 1'000'000, 10'000'000};
  struct PermissionPick {
    const char* id;
    double p;
  };
  static const std::vector<PermissionPick> kPermissions = {
      {"android.permission.INTERNET", 0.9},
      {"android.permission.ACCESS_NETWORK_STATE", 0.7},
      {"android.permission.WRITE_EXTERNAL_STORAGE", 0.5},
      {"android.permission.ACCESS_FINE_LOCATION", 0.2},
      {"android.permission.CAMERA", 0.15},
      {"android.permission.READ_CONTACTS", 0.1},
      {"android.permission.RECORD_AUDIO", 0.08},
      {"android.permission.READ_PHONE_STATE", 0.3},
      {"android.permission.READ_CALENDAR", 0.03},
      {"android.permission.BODY_SENSORS", 0.02},
      {"android.permission.SEND_SMS", 0.12},
  };
  static const std::vector<PermissionPick> kActions = {
      {"android.intent.action.BOOT_COMPLETED", 0.3},
      {"android.net.conn.CONNECTIVITY_CHANGE", 0.2},
      {"com.google.android.c2dm.intent.RECEIVE", 0.35},
      {"android.appwidget.action.APPWIDGET_UPDATE", 0.1},
      {"android.bluetooth.adapter.action.STATE_CHANGED", 0.03},
      {"android.media.AUDIO_BECOMING_NOISY", 0.05},
  };

  const std::size_t n_devs = std::max<std::size_t>(1, n / 4);
  const auto first_day = sys_days{year{2012} / January / 1};
  const auto last_day = sys_days{year{2019} / June / 1};
  const auto span_days = std::uint64_t((last_day - first_day).count());

  SyntheticData data;
  data.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RawAppRecord r;
    r.source_row = i + 2;
    const double u = rng.uniform();
    const std::size_t dev = std::size_t(double(n_devs) * u * u * u);
    r.developer_name = "Developer " + std::to_string(dev);
    r.title = detail::random_text(rng, 5 + rng.below(35));
    r.description = detail::random_text(rng, 40 + rng.below(3000));
    if (rng.bernoulli(0.7)) r.whats_new = detail::random_text(rng, 10 + rng.below(400));
    r.last_updated = year_month_day{first_day + days{std::int64_t(rng.below(span_days + 1))}};

    const std::int64_t ratings = rng.bernoulli(0.1) ? 0 : std::int64_t(std::exp(rng.uniform(0.0, 13.0)));
    r.ratings = ratings;
    std::int64_t left = ratings;
    for (std::size_t s = 0; s < 4; ++s) {
      const auto c = std::int64_t(double(left) * rng.uniform(0.0, 0.5));
      r.star_ratings[s] = c;
      left -= c;
    }
    r.star_ratings[4] = left;
    if (ratings == 0) {
      r.reviews_average = 0.0;
    } else {
      double weighted = 0.0;
      for (std::size_t s = 0; s < 5; ++s) weighted += double(s + 1) * double(*r.star_ratings[s]);
      r.reviews_average = std::round(10.0 * weighted / double(ratings)) / 10.0;
    }
    const bool paid = rng.bernoulli(0.12);
    r.price = paid ? std::round(rng.uniform(0.99, 9.99) * 100.0) / 100.0 : 0.0;
    const bool privacy = rng.bernoulli(0.5);
    if (privacy) r.privacy_policy_link = "https://dev" + std::to_string(dev) + ".example.com/privacy";
    r.genre = rng.pick(detail::synthetic_genres());
    r.content_rating = rng.pick(kRatings);
    r.current_version = rng.bernoulli(0.08) ? "Varies with device"
                                            : std::to_string(1 + rng.below(9)) + "." + std::to_string(rng.below(20)) +
                                                  "." + std::to_string(rng.below(100));
    r.android_version = rng.pick(kAndroid);
    if (rng.bernoulli(0.9)) r.developer_email = "dev" + std::to_string(dev) + "@example.com";
    bool own_domain = false;
    if (rng.bernoulli(0.6)) {
      own_domain = rng.bernoulli(0.6);
      r.developer_website = own_domain ? "https://www.dev" + std::to_string(dev) + ".com/"
                                       : "https://sites.google.com/view/dev" + std::to_string(dev);
    }
    if (rng.bernoulli(0.4)) r.developer_address = std::to_string(1 + rng.below(999)) + " Main Street";
    r.file_size = rng.bernoulli(0.1) ? "Varies with device" : std::to_string(1 + rng.below(90)) + "M";
    r.downloads = DownloadRange{rng.pick(kDownloads), 0};
    r.downloads->high = r.downloads->low;

    std::vector<std::string> perms, actions;
    bool sms = false;
    for (const auto& p : kPermissions) {
      if (rng.bernoulli(p.p)) {
        perms.emplace_back(p.id);
        sms = sms || std::string_view(p.id) == "android.permission.SEND_SMS";
      }
    }
    for (const auto& a : kActions) {
      if (rng.bernoulli(a.p)) actions.emplace_back(a.id);
    }
    r.manifest_source = detail::manifest_xml("com.dev" + std::to_string(dev) + ".app" + std::to_string(i), perms, actions);

    const double logit = spec.intercept + spec.no_privacy_policy * (privacy ? 0.0 : 1.0) +
                         spec.teen_rating * (r.content_rating == "Teen" ? 1.0 : 0.0) +
                         spec.sms_permission * (sms ? 1.0 : 0.0) + spec.registered_domain * (own_domain ? 1.0 : 0.0) +
                         spec.paid * (paid ? 1.0 : 0.0);
    const double p = gbdt::sigmoid(logit);
    const bool removed = rng.bernoulli(p);
    r.status_checks = {removed, removed, removed};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", p);
    r.extra.emplace_back("true_probability", buf);
    data.records.push_back(std::move(r));
    data.probability.push_back(p);
    data.labels.push_back(removed ? Label::Removed : Label::Stable);
  }
  return data;
}

}  // namespace appfate::eval
