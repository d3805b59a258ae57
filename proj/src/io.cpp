#include "valnorm/io.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>

#include "valnorm/error.hpp"

namespace valnorm::io {

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  if (!in_.good() || in_.peek() == std::char_traits<char>::eof()) return false;
  record_line_ = line_;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  int ch;
  while ((ch = in_.get()) != std::char_traits<char>::eof()) {
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in_.peek() == '"') {
          field.push_back('"');
          in_.get();
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n') {
      ++line_;
      break;
    } else if (c == '\r') {
      // swallowed; "\r\n" ends the record on the following '\n'
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) {
    throw Error(ErrorCode::kParse,
                "unterminated quoted field starting on line " + std::to_string(record_line_));
  }
  fields.push_back(std::move(field));
  return true;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> read_value_lines(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(line);
  }
  return out;
}

namespace {

bool is_index(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool blank(const std::vector<std::string>& row) {
  return row.size() == 1 && row[0].empty();
}

// Reads (value, label) pairs from a two-or-more column file with an
// optional header whose first field is "value".
std::vector<std::pair<std::string, std::string>> read_labelled(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> row;
  std::vector<std::pair<std::string, std::string>> out;
  bool first = true;
  while (reader.next(row)) {
    if (blank(row)) continue;
    if (first) {
      first = false;
      if (row[0] == "value") continue;
    }
    if (row.size() < 2) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(reader.line()) + ": expected value,cluster_id");
    }
    out.emplace_back(row[0], row[1]);
  }
  return out;
}

std::vector<int> labels_for(const std::vector<std::pair<std::string, std::string>>& rows,
                            const ValueTable& values) {
  std::map<std::string, int> label_ids;
  std::vector<int> labels(values.size(), -1);
  std::vector<std::string> unknown;
  for (const auto& [value, label] : rows) {
    auto id = values.find(value);
    if (!id) {
      unknown.push_back(value);
      continue;
    }
    auto [it, inserted] = label_ids.try_emplace(label, static_cast<int>(label_ids.size()));
    labels[*id] = it->second;
  }
  if (!unknown.empty()) {
    std::string msg = std::to_string(unknown.size()) + " labelled value(s) not in the value list:";
    for (std::size_t i = 0; i < unknown.size() && i < 10; ++i) msg += " '" + unknown[i] + "'";
    throw Error(ErrorCode::kValueTableMismatch, msg);
  }
  std::vector<std::string> missing;
  for (ValueId v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0) missing.push_back(values[v]);
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " value(s) have no cluster label:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " '" + missing[i] + "'";
    throw Error(ErrorCode::kGoldCoverage, msg);
  }
  return labels;
}

}  // namespace

std::vector<std::string> read_value_column(std::istream& in, const std::string& column) {
  CsvReader reader(in);
  std::vector<std::string> row;
  std::vector<std::string> out;
  std::size_t index = 0;
  bool header_pending = !is_index(column);
  if (!header_pending) index = std::stoul(column);
  while (reader.next(row)) {
    if (blank(row)) continue;
    if (header_pending) {
      auto it = std::find(row.begin(), row.end(), column);
      if (it == row.end()) {
        throw Error(ErrorCode::kParse, "column '" + column + "' not found in header");
      }
      index = static_cast<std::size_t>(it - row.begin());
      header_pending = false;
      continue;
    }
    if (index >= row.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(reader.line()) + ": missing column " +
                                         std::to_string(index));
    }
    if (!row[index].empty()) out.push_back(row[index]);
  }
  return out;
}

GoldPartition read_gold(std::istream& in, const ValueTable& values) {
  auto labels = labels_for(read_labelled(in), values);
  return GoldPartition(Partition::from_labels(labels));
}

Partition read_partition(std::istream& in, const ValueTable& values) {
  auto labels = labels_for(read_labelled(in), values);
  return Partition::from_labels(labels);
}

void write_partition(std::ostream& out, const ValueTable& values, const Partition& partition) {
  const Partition p = partition.canonical();
  std::vector<ValueId> canonical(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    canonical[i] = representative(values, p.clusters()[i].members);
  }
  const auto index = p.cluster_index();
  out << "value,cluster_id,canonical\n";
  for (ValueId v = 0; v < values.size(); ++v) {
    out << csv_escape(values[v]) << ',' << index[v] << ',' << csv_escape(values[canonical[index[v]]])
        << '\n';
  }
}

}  // namespace valnorm::io
