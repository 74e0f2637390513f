#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace itd {

// Exit-code carrying error categories. The CLI maps ConfigError to 2,
// DataError to 3 and GateError to 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Calendar time. Log timestamps are civil (wall-clock) times with no zone;
// arithmetic is done on an epoch-seconds integer derived from the civil
// fields, so ordering and window membership are exact.
// ---------------------------------------------------------------------------
struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;

  bool operator==(const CivilTime&) const = default;
};

// Days since 1970-01-01 for a civil date (valid for all Gregorian dates).
std::int64_t days_from_civil(int year, int month, int day);
// Inverse of days_from_civil; time-of-day fields are zero.
CivilTime civil_from_days(std::int64_t days);
CivilTime civil_from_seconds(std::int64_t seconds);
std::int64_t epoch_seconds(const CivilTime& t);
std::int64_t epoch_days(const CivilTime& t);
// 0 = Sunday .. 6 = Saturday.
int day_of_week(const CivilTime& t);
bool is_weekend(const CivilTime& t);
bool civil_less(const CivilTime& a, const CivilTime& b);

// Parses with a strptime-like format built from %m %d %Y %H %M %S literals.
// Returns false on any mismatch or out-of-range field.
bool parse_civil(std::string_view text, std::string_view format, CivilTime& out);
// ISO 8601 "YYYY-MM-DDTHH:MM[:SS]".
bool parse_iso8601(std::string_view text, CivilTime& out);
std::string format_civil(const CivilTime& t, std::string_view format);
std::string to_iso8601(const CivilTime& t);

inline constexpr std::string_view kCertTimestampFormat = "%m/%d/%Y %H:%M:%S";

// ---------------------------------------------------------------------------
// Deterministic randomness. std::mt19937_64 has a standard-specified output
// sequence; the distribution adapters here avoid the implementation-defined
// std::*_distribution classes so streams are identical on every platform.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1): never returns an endpoint, safe under log().
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n). Modulo bias is < 2^-53 for any n we use.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  int poisson(double lambda);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c);

// FNV-1a over raw bytes; used for config/corpus fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

// ---------------------------------------------------------------------------
// Little-endian binary IO for the cache and checkpoint formats.
// ---------------------------------------------------------------------------
void write_u8(std::ostream& os, std::uint8_t v);
void write_u16le(std::ostream& os, std::uint16_t v);
void write_u32le(std::ostream& os, std::uint32_t v);
void write_u64le(std::ostream& os, std::uint64_t v);
void write_i64le(std::ostream& os, std::int64_t v);
void write_f32le(std::ostream& os, float v);
void write_f64le(std::ostream& os, double v);
void write_bytes(std::ostream& os, std::string_view s);

std::uint8_t read_u8(std::istream& is);
std::uint16_t read_u16le(std::istream& is);
std::uint32_t read_u32le(std::istream& is);
std::uint64_t read_u64le(std::istream& is);
std::int64_t read_i64le(std::istream& is);
float read_f32le(std::istream& is);
double read_f64le(std::istream& is);
std::string read_bytes(std::istream& is, std::size_t n);

// Writes to path + ".tmp" then renames, so partial files never appear.
void atomic_write_file(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace itd
