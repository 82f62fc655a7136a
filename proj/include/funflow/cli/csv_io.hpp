#pragma once

#include "funflow/basis.hpp"
#include "funflow/smoothing.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace funflow::cli {

struct Date {
  int year = 0;
  unsigned month = 1;
  unsigned day = 1;
  bool operator==(const Date&) const = default;
};

/// Month and day of day zero in every year.
struct CalendarAnchor {
  unsigned month = 6;
  unsigned day = 1;
};

/// "MM-DD"; throws Config on anything else.
CalendarAnchor parse_anchor(std::string_view text);
std::string to_string(const CalendarAnchor& a);

/// Strict YYYY-MM-DD; returns false for malformed or impossible dates.
bool parse_iso_date(std::string_view text, Date& out);
std::string to_string(const Date& d);

/// Days from the anchor date of d.year to d (negative before the anchor).
int day_index(const Date& d, const CalendarAnchor& anchor);
Date date_from_index(int year, int index, const CalendarAnchor& anchor);

/// Daily series grouped by year label.
struct SeriesTable {
  std::vector<DiscreteSeries> series;
  std::vector<std::string> rejected;  // labels dropped for too many missing days
  std::vector<std::string> warnings;
};

/// Reads a `date,value` CSV. Day indices are relative to the anchor of each
/// row's year; rows outside `domain` are dropped; a label missing more than
/// 10% of the whole days inside the domain is rejected.
SeriesTable ingest_csv(const std::filesystem::path& path, const CalendarAnchor& anchor,
                       const Interval& domain);
SeriesTable ingest_stream(std::istream& in, const std::string& source, const CalendarAnchor& anchor,
                          const Interval& domain);

/// Writes a table back as `date,value` with shortest round-trip numbers.
void export_csv(const SeriesTable& table, const CalendarAnchor& anchor, std::ostream& out);
void export_csv(const SeriesTable& table, const CalendarAnchor& anchor,
                const std::filesystem::path& path);

/// 9 significant digits.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);
/// Column as numbers; throws Parse on any non-numeric cell.
std::vector<double> numeric_column(const CsvTable& table, std::string_view name);

}  // namespace funflow::cli
