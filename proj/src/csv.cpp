#include "itd/csv.hpp"

#include <istream>
#include <ostream>

namespace itd {

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  int c = is_.get();
  // Skip a trailing blank line at EOF.
  if (c == std::istream::traits_type::eof()) return false;

  record_line_ = line_;
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;

  while (true) {
    if (c == std::istream::traits_type::eof()) {
      fields.push_back(std::move(field));
      return true;
    }
    char ch = static_cast<char>(c);
    saw_any = true;
    if (in_quotes) {
      if (ch == '"') {
        int peek = is_.peek();
        if (peek == '"') {
          field.push_back('"');
          is_.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty()) {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      ++line_;
      fields.push_back(std::move(field));
      return true;
    } else if (ch == '\r') {
      // swallow; the following '\n' ends the record
    } else {
      field.push_back(ch);
    }
    c = is_.get();
  }
  (void)saw_any;
}

std::string csv_escape(const std::string& field) {
  bool need = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!need) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os.put(',');
    os << csv_escape(fields[i]);
  }
  os.put('\n');
}

}  // namespace itd
