#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace itd {

// Minimal RFC-4180-style CSV: comma separated, double-quote quoting with ""
// escapes, quoted fields may contain commas and newlines. Reads records
// streaming so multi-gigabyte logs never live in memory.
class CsvReader {
 public:
  explicit CsvReader(std::istream& is) : is_(is) {}

  // Reads one record into `fields`. Returns false at end of input.
  // `record_line()` reports the 1-based line the record started on.
  bool next(std::vector<std::string>& fields);
  long record_line() const { return record_line_; }

 private:
  std::istream& is_;
  long line_ = 1;
  long record_line_ = 0;
};

std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace itd
