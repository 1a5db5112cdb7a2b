#pragma once

// Reading app records from CSV, completeness filtering, status
// aggregation and dataset summaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "appfate/android_version.hpp"
#include "appfate/calendar.hpp"
#include "appfate/csv.hpp"
#include "appfate/error.hpp"

namespace appfate {

enum class Label { Removed, Stable };

inline std::string_view to_string(Label l) { return l == Label::Removed ? "Removed" : "Stable"; }

// Store download bracket. Open-ended "N+" is stored as [N, N].
struct DownloadRange {
  std::int64_t low = 0;
  std::int64_t high = 0;
  friend bool operator==(const DownloadRange&, const DownloadRange&) = default;
};

// One app's store-page fields, status checks and manifest source. Required
// text fields use the empty string for "missing"; required numeric fields
// are optional so that filter_complete can report them.
struct RawAppRecord {
  std::string description;
  std::string title;
  std::optional<Date> last_updated;
  std::optional<std::string> whats_new;
  std::optional<double> reviews_average;
  std::optional<double> price;
  std::optional<std::int64_t> ratings;
  std::array<std::optional<std::int64_t>, 5> star_ratings;  // one .. five
  std::optional<std::string> privacy_policy_link;
  std::string genre;
  std::string content_rating;
  std::string current_version;
  std::string android_version;
  std::optional<std::string> developer_email;
  std::optional<std::string> developer_website;
  std::string developer_name;
  std::optional<std::string> developer_address;
  std::string file_size;
  std::optional<DownloadRange> downloads;
  std::array<std::optional<bool>, 3> status_checks;
  std::string manifest_source;

  // Not part of the schema: 1-based CSV record number, and any columns
  // outside the schema in header order.
  std::size_t source_row = 0;
  std::vector<std::pair<std::string, std::string>> extra;

  friend bool operator==(const RawAppRecord&, const RawAppRecord&) = default;
};

// Column names of the input CSV, in canonical order.
inline constexpr std::array<std::string_view, 27> kColumns = {
    "description",        "title",             "last_updated",       "whats_new",
    "reviews_average",    "price",             "ratings",            "one_star_ratings",
    "two_star_ratings",   "three_star_ratings", "four_star_ratings", "five_star_ratings",
    "privacy_policy_link", "genre",            "content_rating",     "current_version",
    "android_version",    "developer_email",   "developer_website",  "developer_name",
    "developer_address",  "file_size",         "downloads",          "status_dec18",
    "status_feb19",       "status_mayjune19",  "manifest_source"};

inline constexpr std::array<std::string_view, 5> kOptionalColumns = {
    "whats_new", "privacy_policy_link", "developer_email", "developer_website",
    "developer_address"};

inline bool is_optional_column(std::string_view c) {
  return std::find(kOptionalColumns.begin(), kOptionalColumns.end(), c) != kOptionalColumns.end();
}

struct RowError {
  std::size_t row = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<RawAppRecord> records;
  std::vector<RowError> errors;
};

namespace detail {

inline std::optional<std::int64_t> parse_count(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  bool digit = false;
  for (char c : s) {
    if (c == ',') continue;
    if (c < '0' || c > '9') return std::nullopt;
    if (v > (INT64_MAX - 9) / 10) return std::nullopt;
    v = v * 10 + (c - '0');
    digit = true;
  }
  if (!digit) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '$') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<DownloadRange> parse_downloads(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.back() == '+') {
    auto n = parse_count(s.substr(0, s.size() - 1));
    if (!n) return std::nullopt;
    return DownloadRange{*n, *n};
  }
  if (const auto dash = s.find('-'); dash != std::string_view::npos) {
    auto lo = parse_count(s.substr(0, dash));
    auto hi = parse_count(s.substr(dash + 1));
    if (!lo || !hi) return std::nullopt;
    return DownloadRange{*lo, *hi};
  }
  auto n = parse_count(s);
  if (!n) return std::nullopt;
  return DownloadRange{*n, *n};
}

inline std::optional<bool> parse_flag(std::string_view s) {
  s = trim(s);
  if (s == "1" || iequals(s, "true")) return true;
  if (s == "0" || iequals(s, "false")) return false;
  return std::nullopt;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Reads records from a CSV stream whose header names every schema column.
// Throws DataError when a column is missing or the header is absent;
// per-row problems are collected in ParseResult::errors.
inline ParseResult parse_records(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw DataError("empty input: missing header row");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header->size(); ++i) {
    std::string name((*header)[i]);
    if (i == 0 && name.starts_with("\xEF\xBB\xBF")) name.erase(0, 3);
    name = std::string(detail::trim(name));
    if (name.starts_with("status_") &&
        std::find(kColumns.begin(), kColumns.end(), name) == kColumns.end()) {
      throw DataError("unsupported status column: " + name + " (exactly three checks expected)");
    }
    index[name] = i;
  }
  std::array<std::size_t, kColumns.size()> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = index.find(std::string(kColumns[c]));
    if (it == index.end()) throw DataError("missing column: " + std::string(kColumns[c]));
    col[c] = it->second;
  }
  std::vector<std::pair<std::string, std::size_t>> extras;
  for (const auto& [name, i] : index) {
    if (std::find(kColumns.begin(), kColumns.end(), name) == kColumns.end()) extras.emplace_back(name, i);
  }
  std::sort(extras.begin(), extras.end(), [](auto& a, auto& b) { return a.second < b.second; });

  ParseResult result;
  while (auto row = reader.next()) {
    const std::size_t row_no = reader.record_number();
    if (row->size() == 1 && detail::trim((*row)[0]).empty()) continue;
    if (row->size() != header->size()) {
      result.errors.push_back({row_no, "expected " + std::to_string(header->size()) + " fields, got " +
                                           std::to_string(row->size())});
      continue;
    }
    auto field = [&](std::size_t c) -> std::string_view { return (*row)[col[c]]; };
    auto text = [&](std::size_t c) { return std::string(field(c)); };
    auto opt_text = [&](std::size_t c) -> std::optional<std::string> {
      if (detail::trim(field(c)).empty()) return std::nullopt;
      return std::string(field(c));
    };
    std::string error;
    auto count = [&](std::size_t c) -> std::optional<std::int64_t> {
      if (detail::trim(field(c)).empty()) return std::nullopt;
      auto v = detail::parse_count(field(c));
      if (!v && error.empty()) error = std::string(kColumns[c]) + ": not an integer";
      return v;
    };
    auto real = [&](std::size_t c) -> std::optional<double> {
      if (detail::trim(field(c)).empty()) return std::nullopt;
      auto v = detail::parse_real(field(c));
      if (!v && error.empty()) error = std::string(kColumns[c]) + ": not a number";
      return v;
    };

    RawAppRecord r;
    r.source_row = row_no;
    r.description = text(0);
    r.title = text(1);
    if (!detail::trim(field(2)).empty()) {
      r.last_updated = parse_date(field(2));
      if (!r.last_updated && error.empty()) error = "last_updated: unrecognized date";
    }
    r.whats_new = opt_text(3);
    r.reviews_average = real(4);
    r.price = real(5);
    r.ratings = count(6);
    for (std::size_t s = 0; s < 5; ++s) r.star_ratings[s] = count(7 + s);
    r.privacy_policy_link = opt_text(12);
    r.genre = text(13);
    r.content_rating = text(14);
    r.current_version = text(15);
    r.android_version = text(16);
    r.developer_email = opt_text(17);
    r.developer_website = opt_text(18);
    r.developer_name = text(19);
    r.developer_address = opt_text(20);
    r.file_size = text(21);
    if (!detail::trim(field(22)).empty()) {
      r.downloads = detail::parse_downloads(field(22));
      if (!r.downloads && error.empty()) error = "downloads: unrecognized range";
    }
    for (std::size_t s = 0; s < 3; ++s) {
      if (detail::trim(field(23 + s)).empty()) continue;
      r.status_checks[s] = detail::parse_flag(field(23 + s));
      if (!r.status_checks[s] && error.empty()) error = std::string(kColumns[23 + s]) + ": not a 0/1 flag";
    }
    r.manifest_source = text(26);
    for (const auto& [name, i] : extras) r.extra.emplace_back(name, (*row)[i]);

    if (!error.empty()) {
      result.errors.push_back({row_no, std::move(error)});
    } else {
      result.records.push_back(std::move(r));
    }
  }
  return result;
}

// Writes records in the input CSV schema (canonical column order; extra
// columns of the first record, if any, are appended).
inline void write_records(std::ostream& out, const std::vector<RawAppRecord>& records) {
  csv::Row header(kColumns.begin(), kColumns.end());
  if (!records.empty()) {
    for (const auto& [name, v] : records.front().extra) header.push_back(name);
  }
  csv::write_row(out, header);
  auto opt = [](const std::optional<std::string>& s) { return s.value_or(""); };
  auto num = [](const auto& v) -> std::string {
    if (!v) return "";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(*v)>>) {
      return detail::format_real(*v);
    } else {
      return std::to_string(*v);
    }
  };
  for (const auto& r : records) {
    csv::Row row;
    row.reserve(header.size());
    row.push_back(r.description);
    row.push_back(r.title);
    row.push_back(r.last_updated ? format_date(*r.last_updated) : "");
    row.push_back(opt(r.whats_new));
    row.push_back(num(r.reviews_average));
    row.push_back(num(r.price));
    row.push_back(num(r.ratings));
    for (const auto& s : r.star_ratings) row.push_back(num(s));
    row.push_back(opt(r.privacy_policy_link));
    row.push_back(r.genre);
    row.push_back(r.content_rating);
    row.push_back(r.current_version);
    row.push_back(r.android_version);
    row.push_back(opt(r.developer_email));
    row.push_back(opt(r.developer_website));
    row.push_back(r.developer_name);
    row.push_back(opt(r.developer_address));
    row.push_back(r.file_size);
    if (!r.downloads) {
      row.push_back("");
    } else if (r.downloads->low == r.downloads->high) {
      row.push_back(std::to_string(r.downloads->high) + "+");
    } else {
      row.push_back(std::to_string(r.downloads->low) + " - " + std::to_string(r.downloads->high));
    }
    for (const auto& s : r.status_checks) row.push_back(s ? (*s ? "1" : "0") : "");
    row.push_back(r.manifest_source);
    for (std::size_t i = 0; i < header.size() - kColumns.size(); ++i) {
      row.push_back(i < r.extra.size() ? r.extra[i].second : "");
    }
    csv::write_row(out, row);
  }
}

// All-absent -> Removed, all-present -> Stable, otherwise excluded (nullopt).
inline std::optional<Label> aggregate_status(const std::array<bool, 3>& absent) {
  if (absent[0] && absent[1] && absent[2]) return Label::Removed;
  if (!absent[0] && !absent[1] && !absent[2]) return Label::Stable;
  return std::nullopt;
}

struct Drop {
  std::size_t row = 0;
  std::string reason;
};

struct FilterResult {
  std::vector<RawAppRecord> kept;
  std::vector<Label> labels;  // aligned with kept
  std::vector<Drop> drops;
  std::map<std::string, std::size_t> drop_counts;
};

// Reason a record cannot be used, or empty when it is complete and valid.
// Checks run in column order: missing fields, then value invariants, then
// the status triple.
inline std::string incompleteness_reason(const RawAppRecord& r) {
  auto missing = [](std::string_view col) { return "missing:" + std::string(col); };
  if (detail::trim(r.description).empty()) return missing("description");
  if (detail::trim(r.title).empty()) return missing("title");
  if (!r.last_updated) return missing("last_updated");
  if (!r.reviews_average) return missing("reviews_average");
  if (!r.price) return missing("price");
  if (!r.ratings) return missing("ratings");
  for (std::size_t s = 0; s < 5; ++s) {
    if (!r.star_ratings[s]) return missing(kColumns[7 + s]);
  }
  if (detail::trim(r.genre).empty()) return missing("genre");
  if (detail::trim(r.content_rating).empty()) return missing("content_rating");
  if (detail::trim(r.current_version).empty()) return missing("current_version");
  if (detail::trim(r.android_version).empty()) return missing("android_version");
  if (detail::trim(r.developer_name).empty()) return missing("developer_name");
  if (detail::trim(r.file_size).empty()) return missing("file_size");
  if (!r.downloads) return missing("downloads");
  for (std::size_t s = 0; s < 3; ++s) {
    if (!r.status_checks[s]) return missing(kColumns[23 + s]);
  }
  if (detail::trim(r.manifest_source).empty()) return missing("manifest_source");

  if (*r.reviews_average < 0.0 || *r.reviews_average > 5.0) return "invalid:reviews_average";
  if (*r.price < 0.0) return "invalid:price";
  std::int64_t star_sum = 0;
  for (const auto& s : r.star_ratings) {
    if (*s < 0) return "invalid:star_ratings";
    star_sum += *s;
  }
  if (*r.ratings < 0 || star_sum > *r.ratings) return "invalid:star_ratings";
  if (r.downloads->low < 0 || r.downloads->low > r.downloads->high) return "invalid:downloads";

  if (!aggregate_status({*r.status_checks[0], *r.status_checks[1], *r.status_checks[2]})) {
    return "status:mixed";
  }
  return {};
}

inline FilterResult filter_complete(std::vector<RawAppRecord> records) {
  FilterResult out;
  for (auto& r : records) {
    auto reason = incompleteness_reason(r);
    if (!reason.empty()) {
      ++out.drop_counts[reason];
      out.drops.push_back({r.source_row, std::move(reason)});
      continue;
    }
    out.labels.push_back(
        *aggregate_status({*r.status_checks[0], *r.status_checks[1], *r.status_checks[2]}));
    out.kept.push_back(std::move(r));
  }
  return out;
}

inline void write_drop_report(std::ostream& out, const std::vector<Drop>& drops) {
  csv::write_row(out, {"row", "reason"});
  for (const auto& d : drops) csv::write_row(out, {std::to_string(d.row), d.reason});
}

struct DatasetSummary {
  std::map<std::string, std::size_t> genre_histogram;
  std::map<std::string, std::size_t> lowest_version_histogram;
  std::map<Label, double> review_mean_by_label;
  std::map<Label, double> review_std_by_label;  // sample standard deviation
  std::map<Label, std::size_t> class_counts;
};

inline DatasetSummary summarize(const std::vector<RawAppRecord>& records,
                                const std::vector<Label>& labels) {
  if (records.size() != labels.size()) throw DataError("summarize: records/labels size mismatch");
  DatasetSummary s;
  std::map<Label, std::vector<double>> reviews;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ++s.genre_histogram[r.genre];
    ++s.lowest_version_histogram[derive_android_versions(r.android_version).lowest];
    ++s.class_counts[labels[i]];
    if (r.reviews_average) reviews[labels[i]].push_back(*r.reviews_average);
  }
  for (const auto& [label, xs] : reviews) {
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    s.review_mean_by_label[label] = mean;
    s.review_std_by_label[label] = xs.size() > 1 ? std::sqrt(ss / double(xs.size() - 1)) : 0.0;
  }
  return s;
}

}  // namespace appfate
