#pragma once

// Minimal RFC-4180 reader and writer: comma delimiter, double-quote
// quoting, doubled quotes as escapes, CRLF or LF record ends, embedded
// newlines inside quoted fields.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "appfate/error.hpp"

namespace appfate::csv {

using Row = std::vector<std::string>;

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Next record, or nullopt at end of input. Throws DataError on an
  // unterminated quoted field.
  std::optional<Row> next() {
    Row row;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in_.get(c)) {
      any = true;
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get(c);
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && field.empty()) {
        quoted = true;
      } else if (c == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (c == '\r' && in_.peek() == '\n') {
        // swallowed; the '\n' ends the record
      } else if (c == '\n') {
        row.push_back(std::move(field));
        ++record_;
        return row;
      } else {
        field.push_back(c);
      }
    }
    if (quoted) {
      throw DataError("csv: unterminated quoted field in record " + std::to_string(record_ + 1));
    }
    if (!any) return std::nullopt;
    row.push_back(std::move(field));
    ++record_;
    return row;
  }

  // 1-based number of the record last returned.
  std::size_t record_number() const { return record_; }

 private:
  std::istream& in_;
  std::size_t record_ = 0;
};

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << quote(row[i]);
  }
  out << '\n';
}

}  // namespace appfate::csv
