#pragma once

// AndroidManifest.xml (decoded text form) parsing and the mapping of
// permissions and receiver actions onto binary group features.

#include <expat.h>

#include <array>
#include <cctype>
#include <cstddef>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "appfate/calendar.hpp"
#include "appfate/tables.hpp"

namespace appfate {

struct ManifestInfo {
  std::string package;
  std::set<std::string> permissions;
  std::set<std::string> receiver_actions;
  std::vector<std::string> warnings;
};

class ManifestParseError : public std::runtime_error {
 public:
  ManifestParseError(const std::string& what, long byte_offset)
      : std::runtime_error(what + " at byte " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}
  long byte_offset() const { return byte_offset_; }

 private:
  long byte_offset_;
};

namespace detail {

inline std::string_view local_name(std::string_view qname) {
  const auto colon = qname.rfind(':');
  return colon == std::string_view::npos ? qname : qname.substr(colon + 1);
}

inline std::string name_attribute(const XML_Char** attrs) {
  for (std::size_t i = 0; attrs[i]; i += 2) {
    if (local_name(attrs[i]) == "name") return attrs[i + 1];
  }
  return {};
}

struct ManifestHandler {
  ManifestInfo info;
  std::vector<std::string> stack;
  bool saw_root = false;

  bool in(std::size_t depth_from_top, std::string_view name) const {
    return stack.size() > depth_from_top && local_name(stack[stack.size() - 1 - depth_from_top]) == name;
  }

  void start(std::string_view element, const XML_Char** attrs) {
    const auto local = local_name(element);
    if (stack.empty()) {
      saw_root = true;
      if (local == "manifest") {
        for (std::size_t i = 0; attrs[i]; i += 2) {
          if (std::string_view(attrs[i]) == "package") info.package = attrs[i + 1];
        }
      }
      if (info.package.empty()) info.warnings.push_back("manifest has no package attribute");
    }
    if (local == "uses-permission" || local == "uses-permission-sdk-23") {
      auto name = name_attribute(attrs);
      if (!name.empty()) info.permissions.insert(std::move(name));
    } else if (local == "action" && in(0, "intent-filter") && in(1, "receiver")) {
      auto name = name_attribute(attrs);
      if (!name.empty()) info.receiver_actions.insert(std::move(name));
    }
    stack.emplace_back(element);
  }
};

}  // namespace detail

// Permissions come from every uses-permission element; actions only from
// <receiver><intent-filter><action>. Throws ManifestParseError on malformed
// XML.
inline ManifestInfo parse_manifest_xml(std::string_view text) {
  using Parser = std::unique_ptr<XML_ParserStruct, decltype(&XML_ParserFree)>;
  Parser parser(XML_ParserCreate(nullptr), &XML_ParserFree);
  if (!parser) throw std::bad_alloc();
  detail::ManifestHandler handler;
  XML_SetUserData(parser.get(), &handler);
  XML_SetElementHandler(
      parser.get(),
      [](void* self, const XML_Char* name, const XML_Char** attrs) {
        static_cast<detail::ManifestHandler*>(self)->start(name, attrs);
      },
      [](void* self, const XML_Char*) { static_cast<detail::ManifestHandler*>(self)->stack.pop_back(); });
  if (XML_Parse(parser.get(), text.data(), static_cast<int>(text.size()), XML_TRUE) == XML_STATUS_ERROR) {
    throw ManifestParseError(XML_ErrorString(XML_GetErrorCode(parser.get())),
                             static_cast<long>(XML_GetCurrentByteIndex(parser.get())));
  }
  if (!handler.saw_root) throw ManifestParseError("no root element", 0);
  return std::move(handler.info);
}

inline constexpr std::array<std::string_view, 9> kPermissionGroupNames = {
    "Storage", "Calendar", "Camera", "Contacts", "Location", "Microphone", "Phone", "Sensors", "SMS"};

inline constexpr std::array<std::string_view, 11> kActionGroupNames = {
    "Net", "Intent", "Bluetooth", "App", "Provider", "Speech", "NFC", "Media", "Hardware", "Google", "OS"};

struct PermissionGroups {
  std::array<std::uint8_t, 9> flags{};
  friend bool operator==(const PermissionGroups&, const PermissionGroups&) = default;
};

struct ActionGroups {
  std::array<std::uint8_t, 11> flags{};
  // Actions that matched no group. Not a feature.
  std::size_t unmatched = 0;
};

inline PermissionGroups group_permissions(const std::set<std::string>& permissions,
                                          const PermissionTable& table = PermissionTable::builtin()) {
  PermissionGroups g;
  for (std::size_t i = 0; i < kPermissionGroupNames.size(); ++i) {
    auto it = table.groups.find(std::string(kPermissionGroupNames[i]));
    if (it == table.groups.end()) continue;
    for (const auto& p : it->second) {
      if (permissions.count(p)) {
        g.flags[i] = 1;
        break;
      }
    }
  }
  return g;
}

// Group of one action identifier, or -1. "android.<segment>...." maps by
// its segment (case-insensitive) onto Net, Intent, Bluetooth, App,
// Provider, Speech, NFC, Media, Hardware or OS; "com.google..." maps to
// Google.
inline int action_group_index(std::string_view action) {
  if (action.starts_with("com.google")) return 9;
  constexpr std::string_view prefix = "android.";
  if (!action.starts_with(prefix)) return -1;
  auto rest = action.substr(prefix.size());
  const auto segment = rest.substr(0, rest.find('.'));
  for (std::size_t i = 0; i < kActionGroupNames.size(); ++i) {
    if (i == 9) continue;
    if (detail::iequals(segment, kActionGroupNames[i])) return int(i);
  }
  return -1;
}

inline ActionGroups group_actions(const std::set<std::string>& actions) {
  ActionGroups g;
  for (const auto& a : actions) {
    const int i = action_group_index(a);
    if (i < 0) {
      ++g.unmatched;
    } else {
      g.flags[std::size_t(i)] = 1;
    }
  }
  return g;
}

}  // namespace appfate
