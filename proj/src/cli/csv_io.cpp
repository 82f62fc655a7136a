#include "funflow/cli/csv_io.hpp"

#include "funflow/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace funflow::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_uint(std::string_view s, unsigned& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

std::chrono::sys_days to_sys(const Date& d) {
  return std::chrono::year_month_day{std::chrono::year{d.year}, std::chrono::month{d.month},
                                     std::chrono::day{d.day}};
}

std::chrono::sys_days anchor_of(int year, const CalendarAnchor& a) {
  return std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{a.month},
                                     std::chrono::day{a.day}};
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace

CalendarAnchor parse_anchor(std::string_view text) {
  const auto dash = text.find('-');
  CalendarAnchor a;
  if (dash == std::string_view::npos || !parse_uint(text.substr(0, dash), a.month) ||
      !parse_uint(text.substr(dash + 1), a.day) ||
      !std::chrono::year_month_day{std::chrono::year{2001}, std::chrono::month{a.month},
                                   std::chrono::day{a.day}}
           .ok()) {
    throw Error(ErrorKind::Config, "anchor must be MM-DD (non-leap calendar day), got '" +
                                       std::string(text) + "'");
  }
  return a;
}

std::string to_string(const CalendarAnchor& a) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02u-%02u", a.month, a.day);
  return buf;
}

bool parse_iso_date(std::string_view text, Date& out) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
  unsigned y = 0;
  if (!parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(5, 2), out.month) ||
      !parse_uint(text.substr(8, 2), out.day)) {
    return false;
  }
  out.year = static_cast<int>(y);
  return std::chrono::year_month_day{std::chrono::year{out.year}, std::chrono::month{out.month},
                                     std::chrono::day{out.day}}
      .ok();
}

std::string to_string(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", d.year, d.month, d.day);
  return buf;
}

int day_index(const Date& d, const CalendarAnchor& anchor) {
  return static_cast<int>((to_sys(d) - anchor_of(d.year, anchor)).count());
}

Date date_from_index(int year, int index, const CalendarAnchor& anchor) {
  const std::chrono::year_month_day ymd{anchor_of(year, anchor) + std::chrono::days{index}};
  return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
          static_cast<unsigned>(ymd.day())};
}

SeriesTable ingest_stream(std::istream& in, const std::string& source, const CalendarAnchor& anchor,
                          const Interval& domain) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::Parse, source + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  const auto head = split(line);
  if (head.size() != 2 || head[0] != "date" || head[1] != "value") {
    fail("expected header 'date,value'");
  }

  struct Row {
    int day;
    double value;
    bool missing;
    std::size_t line;
  };
  std::map<int, std::vector<Row>> by_year;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != 2) fail("expected 2 fields, found " + std::to_string(f.size()));
    Date d;
    if (!parse_iso_date(f[0], d)) fail("invalid date '" + std::string(f[0]) + "'");
    Row r{day_index(d, anchor), 0.0, f[1].empty(), lineno};
    if (!r.missing && !parse_double(f[1], r.value)) fail("invalid value '" + std::string(f[1]) + "'");
    if (!domain.contains(r.day)) continue;
    by_year[d.year].push_back(r);
  }

  const int first = static_cast<int>(std::ceil(domain.lo() - domain.tolerance()));
  const int last = static_cast<int>(std::floor(domain.hi() + domain.tolerance()));
  const int expected = std::max(0, last - first + 1);

  SeriesTable table;
  for (auto& [year, rows] : by_year) {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.day < b.day; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].day == rows[i - 1].day) {
        lineno = rows[i].line;
        fail("duplicate date for year " + std::to_string(year));
      }
    }
    DiscreteSeries s{std::to_string(year), {}, {}};
    for (const auto& r : rows) {
      if (r.missing) continue;
      s.times.push_back(r.day);
      s.values.push_back(r.value);
    }
    const int present = static_cast<int>(s.times.size());
    const int missing = expected - present;
    if (missing > 0 && 10 * missing > expected) {
      table.rejected.push_back(s.label);
      table.warnings.push_back("year " + s.label + " rejected: " + std::to_string(missing) + " of " +
                               std::to_string(expected) + " days missing");
      continue;
    }
    if (missing > 0) {
      table.warnings.push_back("year " + s.label + ": " + std::to_string(missing) +
                               " missing days excluded");
    }
    table.series.push_back(std::move(s));
  }
  if (table.series.empty()) throw Error(ErrorKind::NoData, source + ": no usable series inside the domain");
  return table;
}

SeriesTable ingest_csv(const std::filesystem::path& path, const CalendarAnchor& anchor,
                       const Interval& domain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return ingest_stream(in, path.string(), anchor, domain);
}

void export_csv(const SeriesTable& table, const CalendarAnchor& anchor, std::ostream& out) {
  out << "date,value\n";
  for (const auto& s : table.series) {
    const int year = std::stoi(s.label);
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      out << to_string(date_from_index(year, static_cast<int>(std::lround(s.times[j])), anchor)) << ','
          << shortest(s.values[j]) << '\n';
    }
  }
}

void export_csv(const SeriesTable& table, const CalendarAnchor& anchor, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  export_csv(table, anchor, out);
}

std::string format_number(double v) {
  if (v == 0.0) return "0";  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    for (auto c : split(line)) cells.emplace_back(c);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                        std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw Error(ErrorKind::Parse, path.string() + ": empty file");
  return t;
}

std::vector<double> numeric_column(const CsvTable& table, std::string_view name) {
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) throw Error(ErrorKind::Parse, "no column '" + std::string(name) + "'");
  const auto col = static_cast<std::size_t>(it - table.header.begin());
  std::vector<double> out;
  for (const auto& r : table.rows) {
    double v = 0.0;
    if (r[col] == "nan") {
      v = std::numeric_limits<double>::quiet_NaN();
    } else if (r[col] == "inf") {
      v = std::numeric_limits<double>::infinity();
    } else if (!parse_double(r[col], v)) {
      throw Error(ErrorKind::Parse, "non-numeric cell '" + r[col] + "' in column '" + std::string(name) + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace funflow::cli
