#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kdeashmm/mat.hpp"

namespace kdeas {

// Rectangular real-valued observation record: T+1 rows by M named
// features, optionally carrying one categorical state label per row.
// All cells are finite; construction and ingestion enforce this.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(Mat values, std::vector<std::string> feature_names);

  std::size_t rows() const { return values_.rows(); }   // T+1
  std::size_t n_vars() const { return values_.cols(); } // M

  double operator()(std::size_t t, std::size_t m) const { return values_(t, m); }
  double& at(std::size_t t, std::size_t m) { return values_(t, m); }

  const Mat& values() const { return values_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  const std::optional<std::vector<std::string>>& state_labels() const { return labels_; }
  void set_state_labels(std::vector<std::string> labels);

  // Rows reordered by `order` (used by shuffle-style diagnostics).
  TimeSeries reordered(const std::vector<std::size_t>& order) const;

 private:
  Mat values_;
  std::vector<std::string> feature_names_;
  std::optional<std::vector<std::string>> labels_;
};

// CSV ingestion. Header row is mandatory and supplies feature names.
// Lines starting with '#' are skipped. If label_column names a column,
// that column is parsed as row labels instead of data. Decimal point
// numbers with optional scientific notation; anything unparseable is a
// ParseError, non-finite values are an InvariantError.
TimeSeries read_csv(const std::string& path, const std::string& label_column = "");
TimeSeries parse_csv(const std::string& text, const std::string& label_column = "");

// Writes header plus rows; doubles are emitted shortest-round-trip so a
// write/read cycle is value-exact. `preamble` lines (already '#'-prefixed)
// go before the header.
void write_csv(const TimeSeries& series, const std::string& path,
               const std::vector<std::string>& preamble = {});

double feature_mean(const TimeSeries& series, std::size_t var);
double sample_std(const TimeSeries& series, std::size_t var);  // Bessel-corrected

std::string format_double(double v);  // shortest round-trip text

}  // namespace kdeas
