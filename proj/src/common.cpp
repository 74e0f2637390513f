#include "itd/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace itd {

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilTime civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  CivilTime t;
  t.year = static_cast<int>(y + (m <= 2));
  t.month = static_cast<int>(m);
  t.day = static_cast<int>(d);
  return t;
}

CivilTime civil_from_seconds(std::int64_t seconds) {
  std::int64_t days = seconds / 86400;
  if (seconds % 86400 < 0) --days;
  CivilTime t = civil_from_days(days);
  int sec = static_cast<int>(seconds - days * 86400);
  t.hour = sec / 3600;
  t.minute = sec / 60 % 60;
  t.second = sec % 60;
  return t;
}

std::int64_t epoch_days(const CivilTime& t) {
  return days_from_civil(t.year, t.month, t.day);
}

std::int64_t epoch_seconds(const CivilTime& t) {
  return epoch_days(t) * 86400 + t.hour * 3600 + t.minute * 60 + t.second;
}

int day_of_week(const CivilTime& t) {
  std::int64_t d = epoch_days(t);
  return static_cast<int>(((d % 7) + 11) % 7);  // 1970-01-01 is a Thursday
}

bool is_weekend(const CivilTime& t) {
  int dow = day_of_week(t);
  return dow == 0 || dow == 6;
}

bool civil_less(const CivilTime& a, const CivilTime& b) {
  return epoch_seconds(a) < epoch_seconds(b);
}

namespace {

bool read_int(std::string_view text, std::size_t& pos, int digits, int& out) {
  if (pos + digits > text.size()) return false;
  int v = 0;
  for (int i = 0; i < digits; ++i) {
    char c = text[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += static_cast<std::size_t>(digits);
  out = v;
  return true;
}

bool fields_valid(const CivilTime& t) {
  static const int mdays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (t.month < 1 || t.month > 12) return false;
  if (t.day < 1 || t.day > mdays[t.month - 1]) return false;
  if (t.month == 2 && t.day == 29) {
    bool leap = (t.year % 4 == 0 && t.year % 100 != 0) || t.year % 400 == 0;
    if (!leap) return false;
  }
  return t.hour >= 0 && t.hour < 24 && t.minute >= 0 && t.minute < 60 &&
         t.second >= 0 && t.second < 60;
}

}  // namespace

bool parse_civil(std::string_view text, std::string_view format, CivilTime& out) {
  CivilTime t{};
  std::size_t pos = 0;
  for (std::size_t f = 0; f < format.size(); ++f) {
    if (format[f] == '%' && f + 1 < format.size()) {
      ++f;
      bool ok = true;
      switch (format[f]) {
        case 'Y': ok = read_int(text, pos, 4, t.year); break;
        case 'm': ok = read_int(text, pos, 2, t.month); break;
        case 'd': ok = read_int(text, pos, 2, t.day); break;
        case 'H': ok = read_int(text, pos, 2, t.hour); break;
        case 'M': ok = read_int(text, pos, 2, t.minute); break;
        case 'S': ok = read_int(text, pos, 2, t.second); break;
        default: ok = false; break;
      }
      if (!ok) return false;
    } else {
      if (pos >= text.size() || text[pos] != format[f]) return false;
      ++pos;
    }
  }
  if (pos != text.size() || !fields_valid(t)) return false;
  out = t;
  return true;
}

bool parse_iso8601(std::string_view text, CivilTime& out) {
  if (parse_civil(text, "%Y-%m-%dT%H:%M:%S", out)) return true;
  if (parse_civil(text, "%Y-%m-%dT%H:%M", out)) return true;
  if (parse_civil(text, "%Y-%m-%d %H:%M:%S", out)) return true;
  return parse_civil(text, "%Y-%m-%d %H:%M", out);
}

std::string format_civil(const CivilTime& t, std::string_view format) {
  std::string s;
  char buf[8];
  for (std::size_t f = 0; f < format.size(); ++f) {
    if (format[f] == '%' && f + 1 < format.size()) {
      ++f;
      int v = 0;
      int width = 2;
      switch (format[f]) {
        case 'Y': v = t.year; width = 4; break;
        case 'm': v = t.month; break;
        case 'd': v = t.day; break;
        case 'H': v = t.hour; break;
        case 'M': v = t.minute; break;
        case 'S': v = t.second; break;
        default: s += format[f]; continue;
      }
      std::snprintf(buf, sizeof buf, "%0*d", width, v);
      s += buf;
    } else {
      s += format[f];
    }
  }
  return s;
}

std::string to_iso8601(const CivilTime& t) {
  return format_civil(t, "%Y-%m-%dT%H:%M:%S");
}

int Rng::poisson(double lambda) {
  // Knuth multiplication method; lambda stays small in this codebase.
  double limit = std::exp(-lambda);
  double prod = 1.0;
  int k = 0;
  do {
    prod *= uniform_open();
    ++k;
  } while (prod > limit && k < 1024);
  return k - 1;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b) ^ c);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

namespace {
void put_le(std::ostream& os, std::uint64_t v, int nbytes) {
  char b[8];
  for (int i = 0; i < nbytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, nbytes);
}
std::uint64_t get_le(std::istream& is, int nbytes) {
  char b[8] = {};
  is.read(b, nbytes);
  if (!is) throw DataError("unexpected end of binary stream");
  std::uint64_t v = 0;
  for (int i = 0; i < nbytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}
}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { put_le(os, v, 1); }
void write_u16le(std::ostream& os, std::uint16_t v) { put_le(os, v, 2); }
void write_u32le(std::ostream& os, std::uint32_t v) { put_le(os, v, 4); }
void write_u64le(std::ostream& os, std::uint64_t v) { put_le(os, v, 8); }
void write_i64le(std::ostream& os, std::int64_t v) {
  put_le(os, static_cast<std::uint64_t>(v), 8);
}
void write_f32le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_le(os, bits, 4);
}
void write_f64le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_le(os, bits, 8);
}
void write_bytes(std::ostream& os, std::string_view s) {
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint8_t read_u8(std::istream& is) { return static_cast<std::uint8_t>(get_le(is, 1)); }
std::uint16_t read_u16le(std::istream& is) {
  return static_cast<std::uint16_t>(get_le(is, 2));
}
std::uint32_t read_u32le(std::istream& is) {
  return static_cast<std::uint32_t>(get_le(is, 4));
}
std::uint64_t read_u64le(std::istream& is) { return get_le(is, 8); }
std::int64_t read_i64le(std::istream& is) {
  return static_cast<std::int64_t>(get_le(is, 8));
}
float read_f32le(std::istream& is) {
  std::uint32_t bits = read_u32le(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
double read_f64le(std::istream& is) {
  std::uint64_t bits = read_u64le(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}
std::string read_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("unexpected end of binary stream");
  return s;
}

void atomic_write_file(const std::string& path, std::string_view contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + tmp);
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw DataError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace itd
