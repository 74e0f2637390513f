#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "itd/common.hpp"
#include "itd/csv.hpp"

using namespace itd;

TEST_CASE("civil day arithmetic matches timegm") {
  Rng rng(977);
  for (int i = 0; i < 300; ++i) {
    CivilTime t;
    t.year = rng.uniform_int(1970, 2035);
    t.month = rng.uniform_int(1, 12);
    t.day = rng.uniform_int(1, 28);
    t.hour = rng.uniform_int(0, 23);
    t.minute = rng.uniform_int(0, 59);
    t.second = rng.uniform_int(0, 59);
    std::tm tm{};
    tm.tm_year = t.year - 1900;
    tm.tm_mon = t.month - 1;
    tm.tm_mday = t.day;
    tm.tm_hour = t.hour;
    tm.tm_min = t.minute;
    tm.tm_sec = t.second;
    CHECK(epoch_seconds(t) == static_cast<std::int64_t>(timegm(&tm)));
  }
}

TEST_CASE("civil_from_days inverts days_from_civil") {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    std::int64_t d = static_cast<std::int64_t>(rng.below(80000)) - 10000;
    CivilTime t = civil_from_days(d);
    CHECK(days_from_civil(t.year, t.month, t.day) == d);
  }
}

TEST_CASE("weekday classification") {
  CivilTime mon{2010, 1, 4, 0, 0, 0};
  CHECK(day_of_week(mon) == 1);
  CHECK_FALSE(is_weekend(mon));
  CivilTime sat{2010, 1, 9, 12, 0, 0};
  CHECK(day_of_week(sat) == 6);
  CHECK(is_weekend(sat));
  CivilTime sun{2010, 1, 10, 12, 0, 0};
  CHECK(day_of_week(sun) == 0);
  CHECK(is_weekend(sun));
}

TEST_CASE("timestamp parsing is strict") {
  CivilTime t;
  CHECK(parse_civil("01/04/2010 06:10:00", kCertTimestampFormat, t));
  CHECK(t == CivilTime{2010, 1, 4, 6, 10, 0});
  CHECK_FALSE(parse_civil("99/99/2010 06:10:00", kCertTimestampFormat, t));
  CHECK_FALSE(parse_civil("01/04/2010", kCertTimestampFormat, t));
  CHECK_FALSE(parse_civil("01/04/2010 06:10:00x", kCertTimestampFormat, t));
  CHECK_FALSE(parse_civil("02/29/2011 00:00:00", kCertTimestampFormat, t));
  CHECK(parse_civil("02/29/2012 00:00:00", kCertTimestampFormat, t));
  CHECK(parse_iso8601("2010-07-01T00:00", t));
  CHECK(t == CivilTime{2010, 7, 1, 0, 0, 0});
  CHECK(parse_iso8601("2010-07-01T08:30:59", t));
  CHECK(t.second == 59);
  CHECK_FALSE(parse_iso8601("2010-13-01T00:00", t));
}

TEST_CASE("format_civil round-trips") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    CivilTime t;
    t.year = rng.uniform_int(1990, 2030);
    t.month = rng.uniform_int(1, 12);
    t.day = rng.uniform_int(1, 28);
    t.hour = rng.uniform_int(0, 23);
    t.minute = rng.uniform_int(0, 59);
    t.second = rng.uniform_int(0, 59);
    CivilTime back;
    CHECK(parse_civil(format_civil(t, kCertTimestampFormat),
                      kCertTimestampFormat, back));
    CHECK(t == back);
    CHECK(parse_iso8601(to_iso8601(t), back));
    CHECK(t == back);
  }
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42), c(43);
  bool diverged = false;
  for (int i = 0; i < 100; ++i) {
    std::uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) diverged = true;
  }
  CHECK(diverged);
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double v = r.uniform_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("poisson sample mean tracks lambda") {
  Rng r(99);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += r.poisson(13.0);
  double mean = sum / n;
  CHECK(mean > 12.5);
  CHECK(mean < 13.5);
}

TEST_CASE("shuffle is a permutation") {
  Rng r(5);
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  r.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 100);
}

TEST_CASE("little-endian io round-trip") {
  std::ostringstream out;
  write_u32le(out, 0xdeadbeefu);
  write_u64le(out, 0x0123456789abcdefull);
  write_f64le(out, -3.5e-17);
  write_u8(out, 200);
  std::string buf = out.str();
  CHECK(static_cast<unsigned char>(buf[0]) == 0xef);  // little-endian
  std::istringstream in(buf);
  CHECK(read_u32le(in) == 0xdeadbeefu);
  CHECK(read_u64le(in) == 0x0123456789abcdefull);
  CHECK(read_f64le(in) == -3.5e-17);
  CHECK(read_u8(in) == 200);
  std::istringstream short_in("ab");
  CHECK_THROWS_AS(read_u32le(short_in), DataError);
}

TEST_CASE("atomic file write and read back") {
  std::string path = "tmp_common_atomic.txt";
  atomic_write_file(path, "hello\nworld");
  CHECK(read_file(path) == "hello\nworld");
  atomic_write_file(path, "shorter");
  CHECK(read_file(path) == "shorter");
  std::remove(path.c_str());
}

TEST_CASE("string helpers") {
  CHECK(lowercase("AbC") == "abc");
  CHECK(trim("  x y\t ") == "x y");
  auto parts = split("a,b,,c", ',');
  REQUIRE(parts.size() == 4);
  CHECK(parts[2].empty());
}

TEST_CASE("csv reader handles quoting") {
  std::istringstream in(
      "id,note\n"
      "1,\"a,b\"\n"
      "2,\"line1\nline2\"\n"
      "3,\"he said \"\"hi\"\"\"\r\n"
      "4,plain\n");
  CsvReader reader(in);
  std::vector<std::string> row;
  REQUIRE(reader.next(row));
  CHECK(row == std::vector<std::string>{"id", "note"});
  CHECK(reader.record_line() == 1);
  REQUIRE(reader.next(row));
  CHECK(row[1] == "a,b");
  REQUIRE(reader.next(row));
  CHECK(row[1] == "line1\nline2");
  CHECK(reader.record_line() == 3);
  REQUIRE(reader.next(row));
  CHECK(row[1] == "he said \"hi\"");
  CHECK(reader.record_line() == 5);
  REQUIRE(reader.next(row));
  CHECK(row == std::vector<std::string>{"4", "plain"});
  CHECK_FALSE(reader.next(row));
}

TEST_CASE("csv writer round-trips through reader") {
  std::ostringstream out;
  write_csv_row(out, {"a,b", "c\"d", "e\nf", "plain"});
  std::istringstream in(out.str());
  CsvReader reader(in);
  std::vector<std::string> row;
  REQUIRE(reader.next(row));
  CHECK(row == std::vector<std::string>{"a,b", "c\"d", "e\nf", "plain"});
}

TEST_CASE("hash helpers are stable") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(mix64(1, 2) != mix64(2, 1));
  CHECK(mix64(1, 2) == mix64(1, 2));
}
