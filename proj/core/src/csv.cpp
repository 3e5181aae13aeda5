#include "comve/csv.hpp"

#include <iterator>

#include "comve/error.hpp"

namespace comve::csv {
namespace {

[[noreturn]] void fail(std::string_view source, std::size_t line, std::string_view what) {
  throw ParseError("corpus_io", std::string(source) + ":" + std::to_string(line) + ": " +
                                    std::string(what));
}

}  // namespace

std::vector<Record> read(std::istream& in, char delimiter, std::string_view source) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) pos = 3;

  std::vector<Record> records;
  std::size_t line = 1;
  const std::size_t n = text.size();

  while (pos < n) {
    // Skip blank lines between records.
    if (text[pos] == '\n') { ++line; ++pos; continue; }
    if (text[pos] == '\r' && pos + 1 < n && text[pos + 1] == '\n') { ++line; pos += 2; continue; }

    Record record;
    record.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (pos < n && text[pos] == '"') {
        ++pos;
        const std::size_t quote_line = line;
        for (;;) {
          if (pos >= n) fail(source, quote_line, "unterminated quoted field");
          const char c = text[pos];
          if (c == '"') {
            if (pos + 1 < n && text[pos + 1] == '"') {
              field.push_back('"');
              pos += 2;
              continue;
            }
            ++pos;
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
          ++pos;
        }
        // After a closing quote only a delimiter or end of record may follow.
        if (pos < n && text[pos] != delimiter && text[pos] != '\n' && text[pos] != '\r') {
          fail(source, line, "unexpected character after closing quote");
        }
      } else {
        while (pos < n && text[pos] != delimiter && text[pos] != '\n' && text[pos] != '\r') {
          if (text[pos] == '"') fail(source, line, "quote inside unquoted field");
          field.push_back(text[pos]);
          ++pos;
        }
      }
      record.fields.push_back(field);

      if (pos >= n) {
        done = true;
      } else if (text[pos] == delimiter) {
        ++pos;
      } else if (text[pos] == '\r') {
        if (pos + 1 < n && text[pos + 1] == '\n') ++pos;
        ++pos;
        ++line;
        done = true;
      } else {  // '\n'
        ++pos;
        ++line;
        done = true;
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::string escape(std::string_view field, char delimiter) {
  const bool needs_quotes = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) !=
                            std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace comve::csv
