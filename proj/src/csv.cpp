#include "engage/csv.hpp"

namespace engage::csv {

std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    Row row;
    row.line = line;
    std::string field;
    bool in_quotes = false;
    bool record_done = false;
    while (i < n && !record_done) {
      char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field += '"';
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field += c;
          ++i;
        }
      } else {
        switch (c) {
          case '"':
            in_quotes = true;
            ++i;
            break;
          case ',':
            row.fields.push_back(std::move(field));
            field.clear();
            ++i;
            break;
          case '\r':
            if (i + 1 < n && text[i + 1] == '\n') ++i;
            [[fallthrough]];
          case '\n':
            ++line;
            ++i;
            record_done = true;
            break;
          default:
            field += c;
            ++i;
        }
      }
    }
    row.fields.push_back(std::move(field));
    if (record_done || !row.fields.empty()) rows.push_back(std::move(row));
  }
  // drop a trailing empty record produced by a final newline
  if (!rows.empty() && rows.back().fields.size() == 1 && rows.back().fields[0].empty()) {
    rows.pop_back();
  }
  return rows;
}

std::string escape(std::string_view field) {
  bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  out += '\n';
}

}  // namespace engage::csv
