#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace engage::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line the record starts on
};

// RFC 4180-style: quoted fields, doubled quotes, embedded commas/newlines,
// LF or CRLF endings. Zooniverse exports embed JSON blobs in quoted columns,
// so a naive split would not do.
std::vector<Row> parse(std::string_view text);

std::string escape(std::string_view field);
void append_row(std::string& out, const std::vector<std::string>& fields);

}  // namespace engage::csv
