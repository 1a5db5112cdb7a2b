#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace appfate {

using Date = std::chrono::year_month_day;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

inline std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Accepts ISO-8601 "2020-05-13" and the store's long form "May 13, 2020"
// (full or three-letter month names).
inline std::optional<Date> parse_date(std::string_view text) {
  using namespace std::chrono;
  text = detail::trim(text);
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    auto y = detail::to_int(text.substr(0, 4));
    auto m = detail::to_int(text.substr(5, 2));
    auto d = detail::to_int(text.substr(8, 2));
    if (!y || !m || !d) return std::nullopt;
    Date date{year{*y}, month{unsigned(*m)}, day{unsigned(*d)}};
    if (!date.ok()) return std::nullopt;
    return date;
  }
  static constexpr std::array<std::string_view, 12> kMonths = {
      "January", "February", "March",     "April",   "May",      "June",
      "July",    "August",   "September", "October", "November", "December"};
  const auto space = text.find(' ');
  const auto comma = text.find(',');
  if (space == std::string_view::npos || comma == std::string_view::npos || comma < space) {
    return std::nullopt;
  }
  const auto month_name = text.substr(0, space);
  unsigned month_index = 0;
  for (unsigned i = 0; i < kMonths.size(); ++i) {
    if (detail::iequals(month_name, kMonths[i]) ||
        (month_name.size() == 3 && detail::iequals(month_name, kMonths[i].substr(0, 3)))) {
      month_index = i + 1;
      break;
    }
  }
  if (month_index == 0) return std::nullopt;
  auto d = detail::to_int(detail::trim(text.substr(space + 1, comma - space - 1)));
  auto y = detail::to_int(detail::trim(text.substr(comma + 1)));
  if (!d || !y) return std::nullopt;
  Date date{year{*y}, month{month_index}, day{unsigned(*d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(d.year()), unsigned(d.month()),
                unsigned(d.day()));
  return buf;
}

// Whole days from `from` to `to` (negative when `to` precedes `from`).
inline long days_between(const Date& from, const Date& to) {
  using namespace std::chrono;
  return static_cast<long>((sys_days{to} - sys_days{from}).count());
}

}  // namespace appfate
