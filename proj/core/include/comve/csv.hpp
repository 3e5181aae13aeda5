#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace comve::csv {

struct Record {
  std::size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

// RFC 4180 style reader: fields may be double-quoted, quoted fields may hold
// the delimiter, doubled quotes and line breaks. CRLF and a leading UTF-8 BOM
// are accepted. Blank lines are skipped. Throws ParseError("corpus_io", ...)
// naming `source` and the line number on malformed input.
std::vector<Record> read(std::istream& in, char delimiter, std::string_view source);

// Quotes `field` only when it needs it.
std::string escape(std::string_view field, char delimiter);

}  // namespace comve::csv
