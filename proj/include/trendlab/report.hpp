#pragma once

// Output plumbing for the command layer: small CSV tables, price-file
// ingestion, principal-component projection and static SVG plots.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace trendlab::report {

/// Fixed formatting so reruns produce identical bytes.
std::string fmt_num(double x, int precision = 10);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; InputError when missing.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  void add_row(std::vector<std::string> row);
};

void write_csv(const Table& t, std::ostream& out);
void save_csv(const Table& t, const std::string& path);
/// First line is the header. Quoted fields may contain commas.
Table read_csv(std::istream& in, const std::string& source = "<stream>");
Table load_csv(const std::string& path);

/// Two-column price file (date or integer index, price), optional header.
/// Errors name the offending line.
std::vector<double> read_prices(std::istream& in, const std::string& source = "<stream>");

struct Projection {
  std::vector<std::array<double, 2>> points;
  std::array<double, 2> explained{};  // variance share of each component
};

/// Rows of `x` projected on the top two principal components of their
/// covariance. Component signs are fixed so the largest loading is
/// positive. ShapeError when the dimension is below 2.
Projection pca2(const std::vector<std::vector<double>>& x);

struct Trajectory {
  std::string label;
  std::vector<std::array<double, 2>> points;
};

/// Scatter of 2-D trajectories; colour darkens with time along each.
std::string svg_trajectories(const std::vector<Trajectory>& trajs, const std::string& title,
                             const std::string& x_label, const std::string& y_label);

struct BoxGroup {
  std::string name;
  std::vector<double> values;
};

/// Box plot (quartiles, median, whiskers at 1.5 IQR) per group.
std::string svg_boxplot(const std::vector<BoxGroup>& groups, const std::string& title,
                        const std::string& y_label);

void save_text(const std::string& text, const std::string& path);

}  // namespace trendlab::report
