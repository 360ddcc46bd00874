#include "kdeashmm/time_series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kdeashmm/errors.hpp"

namespace kdeas {

TimeSeries::TimeSeries(Mat values, std::vector<std::string> feature_names)
    : values_(std::move(values)), feature_names_(std::move(feature_names)) {
  if (feature_names_.size() != values_.cols())
    throw InvariantError("TimeSeries: feature name count does not match column count");
  if (values_.rows() == 0 || values_.cols() == 0)
    throw InvariantError("TimeSeries: empty series");
  for (double v : values_.data())
    if (!std::isfinite(v)) throw InvariantError("TimeSeries: non-finite value");
}

void TimeSeries::set_state_labels(std::vector<std::string> labels) {
  if (labels.size() != rows())
    throw InvariantError("TimeSeries: label count does not match row count");
  labels_ = std::move(labels);
}

TimeSeries TimeSeries::reordered(const std::vector<std::size_t>& order) const {
  Mat out(order.size(), n_vars());
  for (std::size_t r = 0; r < order.size(); ++r)
    for (std::size_t m = 0; m < n_vars(); ++m) out(r, m) = values_(order[r], m);
  TimeSeries result(std::move(out), feature_names_);
  if (labels_) {
    std::vector<std::string> lab(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) lab[r] = (*labels_)[order[r]];
    result.set_state_labels(std::move(lab));
  }
  return result;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw ParseError("csv: unparseable numeric cell '" + cell + "' at line " +
                     std::to_string(line_no));
  if (!std::isfinite(v))
    throw InvariantError("csv: non-finite value at line " + std::to_string(line_no));
  return v;
}

}  // namespace

TimeSeries parse_csv(const std::string& text, const std::string& label_column) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_line(line);
    break;
  }
  if (header.empty()) throw ParseError("csv: missing header row");

  std::ptrdiff_t label_idx = -1;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!label_column.empty() && header[c] == label_column) {
      if (label_idx >= 0) throw ParseError("csv: duplicate label column '" + label_column + "'");
      label_idx = static_cast<std::ptrdiff_t>(c);
    } else {
      names.push_back(header[c]);
    }
  }
  if (!label_column.empty() && label_idx < 0)
    throw ParseError("csv: label column '" + label_column + "' not found");
  if (names.empty()) throw ParseError("csv: no data columns");

  std::vector<double> data;
  std::vector<std::string> labels;
  std::size_t n_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("csv: row with " + std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()) + " at line " + std::to_string(line_no));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_idx)
        labels.push_back(cells[c]);
      else
        data.push_back(parse_cell(cells[c], line_no));
    }
    ++n_rows;
  }
  if (n_rows == 0) throw ParseError("csv: no data rows");

  Mat values(n_rows, names.size());
  values.data() = std::move(data);
  TimeSeries series(std::move(values), std::move(names));
  if (label_idx >= 0) series.set_state_labels(std::move(labels));
  return series;
}

TimeSeries read_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), label_column);
}

double feature_mean(const TimeSeries& series, std::size_t var) {
  double mean = 0.0;
  for (std::size_t t = 0; t < series.rows(); ++t) mean += series(t, var);
  return mean / static_cast<double>(series.rows());
}

double sample_std(const TimeSeries& series, std::size_t var) {
  const std::size_t n = series.rows();
  if (n < 2) return 0.0;
  const double mean = feature_mean(series, var);
  double ss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = series(t, var) - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(n - 1));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const TimeSeries& series, const std::string& path,
               const std::vector<std::string>& preamble) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  for (const auto& l : preamble) out << l << "\n";
  const auto& names = series.feature_names();
  for (std::size_t c = 0; c < names.size(); ++c)
    out << (c ? "," : "") << names[c];
  out << "\n";
  for (std::size_t r = 0; r < series.rows(); ++r) {
    for (std::size_t c = 0; c < series.n_vars(); ++c)
      out << (c ? "," : "") << format_double(series(r, c));
    out << "\n";
  }
  if (!out) throw ParseError("write failed for '" + path + "'");
}

}  // namespace kdeas
