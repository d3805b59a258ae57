#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "valnorm/core.hpp"

namespace valnorm::io {

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  /// Reads the next record; returns false at end of input.
  bool next(std::vector<std::string>& fields);
  /// 1-based line number where the last record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
};

std::string csv_escape(const std::string& field);

/// One value per line; blank lines and a trailing '\r' are ignored.
std::vector<std::string> read_value_lines(std::istream& in);

/// Values from one CSV column, chosen by header name or 0-based index.
std::vector<std::string> read_value_column(std::istream& in, const std::string& column);

/// `value,cluster_id` rows (header optional). Throws Error(kGoldCoverage)
/// listing values of `values` that the file does not label, and
/// Error(kValueTableMismatch) for labelled values not in the table.
GoldPartition read_gold(std::istream& in, const ValueTable& values);

/// `value,cluster_id[,canonical]` rows; same coverage rules as read_gold.
Partition read_partition(std::istream& in, const ValueTable& values);

/// Writes `value,cluster_id,canonical`; canonical is the longest member.
/// Rows follow value-id order so repeated exports are byte-identical.
void write_partition(std::ostream& out, const ValueTable& values, const Partition& partition);

}  // namespace valnorm::io
