#pragma once

#include <cctype>
#include <string>
#include <string_view>

#include "appfate/calendar.hpp"
#include "appfate/tables.hpp"

namespace appfate {

// Lowest/highest release names derived from a store "Android Version"
// string, plus the raw text used as its own categorical.
struct AndroidVersionInfo {
  std::string lowest;
  std::string highest;
  std::string encoded;
  bool recognized = true;
};

inline constexpr std::string_view kVaries = "Varies";
inline constexpr std::string_view kAndUp = "AndUp";
inline constexpr std::string_view kUnknown = "Unknown";

// Release name for a version token such as "4.0.3", "9" or "4.4W".
// Unknown (or unparseable) versions give "Unknown".
inline std::string release_name(std::string_view token,
                                const VersionNameTable& table = VersionNameTable::builtin()) {
  token = detail::trim(token);
  auto digits = [](std::string_view& s) -> std::optional<int> {
    std::size_t n = 0;
    while (n < s.size() && std::isdigit(static_cast<unsigned char>(s[n]))) ++n;
    if (n == 0) return std::nullopt;
    auto v = detail::to_int(s.substr(0, n));
    s.remove_prefix(n);
    return v;
  };
  auto major = digits(token);
  if (!major) return std::string(kUnknown);
  int minor = 0;
  if (!token.empty() && token.front() == '.') {
    token.remove_prefix(1);
    minor = digits(token).value_or(0);
  }
  auto name = table.name_of(*major, minor);
  return name.empty() ? std::string(kUnknown) : name;
}

inline AndroidVersionInfo derive_android_versions(
    std::string_view text, const VersionNameTable& table = VersionNameTable::builtin()) {
  const auto raw = detail::trim(text);
  if (raw.size() >= 7 && detail::iequals(raw.substr(0, 7), "Varies ")) {
    return {std::string(kVaries), std::string(kVaries), std::string(kVaries), true};
  }
  constexpr std::string_view and_up = " and up";
  if (raw.size() > and_up.size() && detail::iequals(raw.substr(raw.size() - and_up.size()), and_up)) {
    auto low = release_name(raw.substr(0, raw.size() - and_up.size()), table);
    const bool ok = low != kUnknown;
    return {std::move(low), std::string(kAndUp), std::string(raw), ok};
  }
  if (const auto dash = raw.find(" - "); dash != std::string_view::npos) {
    auto low = release_name(raw.substr(0, dash), table);
    auto high = release_name(raw.substr(dash + 3), table);
    const bool ok = low != kUnknown && high != kUnknown;
    return {std::move(low), std::move(high), std::string(raw), ok};
  }
  return {std::string(kUnknown), std::string(kUnknown), std::string(raw), false};
}

}  // namespace appfate
