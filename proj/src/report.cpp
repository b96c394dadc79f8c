#include "trendlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "trendlab/numeric.hpp"
#include "trendlab/types.hpp"

namespace trendlab::report {

std::string fmt_num(double x, int precision) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) x = 0.0;  // no negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, x);
  return buf;
}

std::size_t Table::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InputError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool Table::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw ShapeError("table row width does not match header");
  rows.push_back(std::move(row));
}

namespace {

std::string quote(const std::string& f) {
  if (f.find_first_of(",\"\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_line(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_quotes) throw FormatError(where + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

void write_csv(const Table& t, std::ostream& out) {
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << quote(r[i]);
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

void save_csv(const Table& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_csv(t, out);
}

Table read_csv(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_line(line, source + ":" + std::to_string(lineno));
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw FormatError(source + ": empty CSV");
  return t;
}

Table load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  return read_csv(in, path);
}

std::vector<double> read_prices(std::istream& in, const std::string& source) {
  std::vector<double> prices;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto fields = split_line(line, where);
    if (fields.size() != 2) {
      throw FormatError(where + ": expected 2 columns (date or index, price)");
    }
    double p = 0.0;
    const bool numeric = parse_double(trim(fields[1]), p);
    if (first) {
      first = false;
      if (!numeric) continue;  // header
    }
    if (!numeric) throw FormatError(where + ": price '" + fields[1] + "' is not a number");
    if (!(p > 0.0) || !std::isfinite(p)) throw InputError(where + ": price must be positive");
    prices.push_back(p);
  }
  if (prices.size() < 2) throw InputError(source + ": need at least 2 prices");
  return prices;
}

Projection pca2(const std::vector<std::vector<double>>& x) {
  if (x.empty()) throw InputError("pca: no points");
  const std::size_t d = x[0].size();
  if (d < 2) throw ShapeError("pca: hidden dimension must be >= 2, got " + std::to_string(d));
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[static_cast<std::size_t>(i)].size() != d) throw ShapeError("pca: ragged input");
    for (std::size_t k = 0; k < d; ++k) m(i, static_cast<Eigen::Index>(k)) = x[static_cast<std::size_t>(i)][k];
  }
  const Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  const Eigen::MatrixXd cov = (m.transpose() * m) / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd comps(dd, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(dd - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    comps.col(c) = v;
  }
  const Eigen::MatrixXd proj = m * comps;
  Projection out;
  out.points.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.points[static_cast<std::size_t>(i)] = {proj(i, 0), proj(i, 1)};
  const double total = es.eigenvalues().sum();
  for (int c = 0; c < 2; ++c) {
    out.explained[static_cast<std::size_t>(c)] = total > 0 ? es.eigenvalues()(dd - 1 - c) / total : 0.0;
  }
  return out;
}

namespace {

constexpr double kW = 640, kH = 480, kMargin = 60;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string f3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const {
    return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2;
  }
};

Axis padded(double lo, double hi) {
  const double pad = hi > lo ? 0.05 * (hi - lo) : 1.0;
  return {lo - pad, hi + pad};
}

void frame(std::ostringstream& os, const std::string& title, const std::string& xl,
           const std::string& yl, const Axis& ya) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << esc(title) << "</text>\n"
     << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kW - 2 * kMargin
     << "\" height=\"" << kH - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!xl.empty()) {
    os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 16 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << esc(xl) << "</text>\n";
  }
  os << "<text x=\"16\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << kH / 2 << ")\">" << esc(yl) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ya.lo + (ya.hi - ya.lo) * k / 4.0;
    const double py = ya.map(v, kH - kMargin, kMargin);
    os << "<text x=\"" << kMargin - 6 << "\" y=\"" << f3(py + 4)
       << "\" text-anchor=\"end\" font-size=\"10\">" << f3(v) << "</text>\n";
  }
}

}  // namespace

std::string svg_trajectories(const std::vector<Trajectory>& trajs, const std::string& title,
                             const std::string& x_label, const std::string& y_label) {
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  bool any = false;
  for (const auto& t : trajs) {
    for (const auto& p : t.points) {
      if (!any) {
        xlo = xhi = p[0];
        ylo = yhi = p[1];
        any = true;
      }
      xlo = std::min(xlo, p[0]);
      xhi = std::max(xhi, p[0]);
      ylo = std::min(ylo, p[1]);
      yhi = std::max(yhi, p[1]);
    }
  }
  const Axis xa = padded(xlo, xhi), ya = padded(ylo, yhi);
  std::ostringstream os;
  frame(os, title, x_label, y_label, ya);
  static constexpr int kHues[] = {0, 120, 220, 35, 280, 170};
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto& t = trajs[k];
    const int hue = kHues[k % 6];
    const std::size_t n = t.points.size();
    os << "<g>\n";
    for (std::size_t i = 0; i < n; ++i) {
      const double frac = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 1.0;
      const int light = static_cast<int>(std::lround(85.0 - 60.0 * frac));
      os << "<circle cx=\"" << f3(xa.map(t.points[i][0], kMargin, kW - kMargin)) << "\" cy=\""
         << f3(ya.map(t.points[i][1], kH - kMargin, kMargin)) << "\" r=\"2\" fill=\"hsl(" << hue
         << ",80%," << light << "%)\"/>\n";
    }
    os << "</g>\n";
    const double ly = kMargin + 14 + 16 * static_cast<double>(k);
    os << "<circle cx=\"" << kW - kMargin - 90 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"hsl("
       << hue << ",80%,40%)\"/>\n<text x=\"" << kW - kMargin - 80 << "\" y=\"" << ly
       << "\" font-size=\"11\">" << esc(t.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_boxplot(const std::vector<BoxGroup>& groups, const std::string& title,
                        const std::string& y_label) {
  double lo = 0, hi = 1;
  bool any = false;
  for (const auto& g : groups) {
    for (double v : g.values) {
      if (!any) {
        lo = hi = v;
        any = true;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const Axis ya = padded(lo, hi);
  std::ostringstream os;
  frame(os, title, "", y_label, ya);
  const double slot = (kW - 2 * kMargin) / std::max<double>(1.0, static_cast<double>(groups.size()));
  auto py = [&](double v) { return f3(ya.map(v, kH - kMargin, kMargin)); };
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    const double cx = kMargin + slot * (static_cast<double>(k) + 0.5);
    const double half = std::min(40.0, slot * 0.3);
    os << "<text x=\"" << f3(cx) << "\" y=\"" << kH - kMargin + 16
       << "\" text-anchor=\"middle\" font-size=\"11\">" << esc(g.name) << "</text>\n";
    if (g.values.empty()) continue;
    std::vector<double> v = g.values;
    std::sort(v.begin(), v.end());
    const double q1 = numeric::quantile_sorted(v, 0.25), med = numeric::quantile_sorted(v, 0.5),
                 q3 = numeric::quantile_sorted(v, 0.75);
    const double iqr = q3 - q1;
    double wlo = q1, whi = q3;
    for (double x : v) {
      if (x >= q1 - 1.5 * iqr) {
        wlo = x;
        break;
      }
    }
    for (auto it = v.rbegin(); it != v.rend(); ++it) {
      if (*it <= q3 + 1.5 * iqr) {
        whi = *it;
        break;
      }
    }
    os << "<line x1=\"" << f3(cx) << "\" x2=\"" << f3(cx) << "\" y1=\"" << py(wlo) << "\" y2=\""
       << py(whi) << "\" stroke=\"black\"/>\n"
       << "<rect x=\"" << f3(cx - half) << "\" y=\"" << py(q3) << "\" width=\"" << f3(2 * half)
       << "\" height=\"" << f3(ya.map(q1, kH - kMargin, kMargin) - ya.map(q3, kH - kMargin, kMargin))
       << "\" fill=\"lightsteelblue\" stroke=\"black\"/>\n"
       << "<line x1=\"" << f3(cx - half) << "\" x2=\"" << f3(cx + half) << "\" y1=\"" << py(med)
       << "\" y2=\"" << py(med) << "\" stroke=\"darkred\" stroke-width=\"2\"/>\n";
    for (double x : v) {
      if (x < wlo || x > whi) {
        os << "<circle cx=\"" << f3(cx) << "\" cy=\"" << py(x) << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

void save_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("write failed: " + path);
}

}  // namespace trendlab::report
