#pragma once

// Lookup tables shipped with the library. The text constants mirror the
// files under data/; tests check that both stay identical.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "appfate/calendar.hpp"
#include "appfate/error.hpp"

namespace appfate {

namespace builtin {

inline constexpr std::string_view kDangerousPermissions = R"TABLE(# Dangerous permissions by permission group.
# Pinned to Android 8.1 (API level 27), the last release whose dangerous
# permissions fall into exactly nine groups (Android 9 split CALL_LOG out
# of PHONE). Source: android.Manifest.permission reference and the
# "Dangerous permissions" table of the platform permissions guide.
# Format: Group<TAB>permission identifier
Storage	android.permission.READ_EXTERNAL_STORAGE
Storage	android.permission.WRITE_EXTERNAL_STORAGE
Calendar	android.permission.READ_CALENDAR
Calendar	android.permission.WRITE_CALENDAR
Camera	android.permission.CAMERA
Contacts	android.permission.READ_CONTACTS
Contacts	android.permission.WRITE_CONTACTS
Contacts	android.permission.GET_ACCOUNTS
Location	android.permission.ACCESS_FINE_LOCATION
Location	android.permission.ACCESS_COARSE_LOCATION
Microphone	android.permission.RECORD_AUDIO
Phone	android.permission.READ_PHONE_STATE
Phone	android.permission.READ_PHONE_NUMBERS
Phone	android.permission.CALL_PHONE
Phone	android.permission.ANSWER_PHONE_CALLS
Phone	android.permission.READ_CALL_LOG
Phone	android.permission.WRITE_CALL_LOG
Phone	com.android.voicemail.permission.ADD_VOICEMAIL
Phone	android.permission.USE_SIP
Phone	android.permission.PROCESS_OUTGOING_CALLS
Sensors	android.permission.BODY_SENSORS
SMS	android.permission.SEND_SMS
SMS	android.permission.RECEIVE_SMS
SMS	android.permission.READ_SMS
SMS	android.permission.RECEIVE_WAP_PUSH
SMS	android.permission.RECEIVE_MMS
)TABLE";

inline constexpr std::string_view kAndroidVersions = R"TABLE(# Android release names by platform version span (inclusive, major.minor).
# Format: Name<TAB>first version<TAB>last version
1.0	1.0	1.0
1.1	1.1	1.1
Cupcake	1.5	1.5
Donut	1.6	1.6
Eclair	2.0	2.1
Froyo	2.2	2.2
Gingerbread	2.3	2.3
Honeycomb	3.0	3.2
Ice Cream Sandwich	4.0	4.0
Jelly Bean	4.1	4.3
KitKat	4.4	4.4
Lollipop	5.0	5.1
Marshmallow	6.0	6.0
Nougat	7.0	7.1
Oreo	8.0	8.1
Pie	9.0	9.0
Android 10	10.0	10.0
Android 11	11.0	11.0
Android 12	12.0	12.1
Android 13	13.0	13.0
Android 14	14.0	14.0
)TABLE";

inline constexpr std::string_view kSharedHosting = R"TABLE(# Hosts on which a developer website does not indicate a domain the
# developer registered. A website matches when its host equals an entry or
# ends with "." followed by an entry.
sites.google.com
play.google.com
docs.google.com
plus.google.com
blogspot.com
blogger.com
wordpress.com
github.io
github.com
facebook.com
fb.com
twitter.com
instagram.com
youtube.com
wix.com
wixsite.com
weebly.com
tumblr.com
webs.com
yolasite.com
jimdo.com
tripod.com
angelfire.com
000webhostapp.com
firebaseapp.com
web.app
herokuapp.com
netlify.app
medium.com
strikingly.com
)TABLE";

}  // namespace builtin

namespace detail {

// Non-comment, non-blank lines split on TAB.
inline std::vector<std::vector<std::string>> table_lines(std::string_view text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    const std::string s(t);
    while (true) {
      const auto tab = s.find('\t', start);
      cols.push_back(std::string(trim(std::string_view(s).substr(start, tab - start))));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    out.push_back(std::move(cols));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// Group name -> permission identifiers.
struct PermissionTable {
  std::map<std::string, std::set<std::string>> groups;

  static PermissionTable parse(std::string_view text) {
    PermissionTable t;
    for (auto& cols : detail::table_lines(text)) {
      if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
        throw DataError("permission table: expected 'Group<TAB>permission'");
      }
      t.groups[cols[0]].insert(cols[1]);
    }
    return t;
  }
  static PermissionTable from_file(const std::string& path) {
    return parse(detail::read_file(path));
  }
  static const PermissionTable& builtin() {
    static const PermissionTable t = parse(builtin::kDangerousPermissions);
    return t;
  }
};

struct VersionSpan {
  std::string name;
  int first_major, first_minor, last_major, last_minor;
};

// Platform version -> release name.
struct VersionNameTable {
  std::vector<VersionSpan> spans;

  static VersionNameTable parse(std::string_view text) {
    auto major_minor = [](const std::string& v, int& major, int& minor) {
      const auto dot = v.find('.');
      auto ma = detail::to_int(std::string_view(v).substr(0, dot));
      auto mi = dot == std::string::npos ? std::optional<int>(0)
                                         : detail::to_int(std::string_view(v).substr(dot + 1));
      if (!ma || !mi) throw DataError("version table: bad version '" + v + "'");
      major = *ma;
      minor = *mi;
    };
    VersionNameTable t;
    for (auto& cols : detail::table_lines(text)) {
      if (cols.size() != 3) throw DataError("version table: expected 'Name<TAB>first<TAB>last'");
      VersionSpan s{cols[0], 0, 0, 0, 0};
      major_minor(cols[1], s.first_major, s.first_minor);
      major_minor(cols[2], s.last_major, s.last_minor);
      t.spans.push_back(std::move(s));
    }
    return t;
  }
  static VersionNameTable from_file(const std::string& path) {
    return parse(detail::read_file(path));
  }
  static const VersionNameTable& builtin() {
    static const VersionNameTable t = parse(builtin::kAndroidVersions);
    return t;
  }

  // Name of the release containing major.minor, or empty when none does.
  std::string name_of(int major, int minor) const {
    for (const auto& s : spans) {
      const bool after_first =
          major > s.first_major || (major == s.first_major && minor >= s.first_minor);
      const bool before_last =
          major < s.last_major || (major == s.last_major && minor <= s.last_minor);
      if (after_first && before_last) return s.name;
    }
    return {};
  }
};

// Hosts that do not count as a developer-registered domain.
struct HostDenyList {
  std::vector<std::string> hosts;

  static HostDenyList parse(std::string_view text) {
    HostDenyList t;
    for (auto& cols : detail::table_lines(text)) t.hosts.push_back(cols[0]);
    return t;
  }
  static HostDenyList from_file(const std::string& path) {
    return parse(detail::read_file(path));
  }
  static const HostDenyList& builtin() {
    static const HostDenyList t = parse(builtin::kSharedHosting);
    return t;
  }

  bool denies(std::string_view host) const {
    return std::any_of(hosts.begin(), hosts.end(), [&](const std::string& h) {
      return host == h ||
             (host.size() > h.size() && host.ends_with(h) && host[host.size() - h.size() - 1] == '.');
    });
  }
};

}  // namespace appfate
