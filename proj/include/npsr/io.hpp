#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "npsr/error.hpp"
#include "npsr/linalg.hpp"
#include "npsr/npsr.hpp"
#include "npsr/simgen.hpp"
#include "npsr/smoothers.hpp"

namespace npsr::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Parses the whole of `text` as a finite double; nullopt otherwise.
inline std::optional<double> parse_double(std::string_view text) {
  text = detail::trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

/// 17 significant digits: every double round-trips exactly.
inline std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  if (ec != std::errc{}) throw InvalidArgument("format_double: value not representable");
  return std::string(buf, ptr);
}

/// Rectangular numeric table, one record per line. A single leading row
/// whose cells are not all numeric is taken as a header.
struct Table {
  std::vector<std::string> header;
  Matrix values;  // rows x columns as stored in the file
};

inline Table read_csv(std::istream& in, const std::string& source) {
  Table table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (rows.empty() && table.header.empty()) {
      bool numeric = true;
      for (auto c : cells) numeric = numeric && parse_double(c).has_value();
      if (!numeric) {
        for (auto c : cells) table.header.emplace_back(c);
        width = cells.size();
        continue;
      }
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw ParseError(source, line_no,
                       "expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto v = parse_double(cells[j]);
      if (!v) throw ParseError(source, line_no, "column " + std::to_string(j + 1) + ": '" + std::string(cells[j]) +
                                                    "' is not a finite number");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(source, line_no, "no data rows");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return read_csv(in, path.string());
}

inline void write_csv(std::ostream& out, const Matrix& values, const std::vector<std::string>& header = {}) {
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != values.cols())
      throw InvalidArgument("write_csv: header width does not match the table");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const Matrix& values,
                      const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_csv(out, values, header);
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Row i of the file is y_i; returns the p x n data matrix.
inline Matrix read_response(const std::filesystem::path& path) { return read_csv(path).values.transpose(); }

inline Design read_design(const std::filesystem::path& path) {
  Table t = read_csv(path);
  try {
    return Design(std::move(t.values));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

enum class SmootherKind { KernelRidge, Fourier, LocalPoly };

/// Settings read from a `key = value` file. Every key is optional.
struct RunConfig {
  SmootherKind smoother = SmootherKind::KernelRidge;
  std::optional<Index> q;  // fixed dimension; AIC selection over 1..q_max when absent
  std::optional<Index> q_max;  // command-specific default when absent
  std::optional<double> rho;    // median heuristic when absent
  std::optional<double> kappa;  // cross-validated when absent
  int folds = 10;
  std::uint64_t seed = 1;

  Index n = 128;
  Index p = 10;
  std::optional<Index> q_true;  // falls back to q, then 2
  double alpha = 0.5;
  double beta = 15.0;
  double sigma = 1.0;
  bool separable_ar = false;
  double rho1 = 0.5;
  double rho2 = 0.5;
  Index replications = 100;

  std::optional<int> fourier_terms;  // from smoothness and n when absent
  FourierCoefficients fourier_mode = FourierCoefficients::LeastSquares;
  double smoothness = 2.0;
  int degree = 1;
  std::optional<double> bandwidth;  // n^{-1/(2 smoothness + 1)} when absent
  LocalKernel kernel = LocalKernel::Epanechnikov;
};

namespace detail {

inline double number(std::string_view value, const std::string& key, const std::string& source, std::size_t line) {
  const auto v = parse_double(value);
  if (!v) throw ParseError(source, line, key + ": '" + std::string(value) + "' is not a number");
  return *v;
}

inline std::int64_t integer(std::string_view value, const std::string& key, const std::string& source,
                            std::size_t line, std::int64_t lo) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ParseError(source, line, key + ": '" + std::string(value) + "' is not an integer");
  if (v < lo) throw ParseError(source, line, key + " must be at least " + std::to_string(lo));
  return v;
}

inline double positive(std::string_view value, const std::string& key, const std::string& source,
                       std::size_t line) {
  const double v = number(value, key, source, line);
  if (!(v > 0.0)) throw ParseError(source, line, key + " must be positive");
  return v;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig c;
  std::map<std::string, std::size_t> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "missing key");
    if (value.empty()) throw ParseError(source, line_no, key + ": missing value");
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh)
      throw ParseError(source, line_no, "duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");

    auto num = [&] { return detail::number(value, key, source, line_no); };
    auto pos = [&] { return detail::positive(value, key, source, line_no); };
    auto count = [&](std::int64_t lo) { return detail::integer(value, key, source, line_no, lo); };
    auto correlation = [&] {
      const double v = num();
      if (!(std::abs(v) < 1.0)) throw ParseError(source, line_no, key + " must lie in (-1, 1)");
      return v;
    };

    if (key == "smoother") {
      if (value == "kernel_ridge") c.smoother = SmootherKind::KernelRidge;
      else if (value == "fourier") c.smoother = SmootherKind::Fourier;
      else if (value == "local_poly") c.smoother = SmootherKind::LocalPoly;
      else throw ParseError(source, line_no, "smoother: expected kernel_ridge, fourier or local_poly");
    } else if (key == "q") {
      c.q = count(1);
    } else if (key == "q_max") {
      c.q_max = count(1);
    } else if (key == "rho") {
      if (value == "median") c.rho.reset();
      else c.rho = pos();
    } else if (key == "kappa") {
      if (value == "cv") {
        c.kappa.reset();
      } else {
        const double v = num();
        if (v < 0.0) throw ParseError(source, line_no, "kappa must be nonnegative");
        c.kappa = v;
      }
    } else if (key == "folds") {
      c.folds = static_cast<int>(count(2));
    } else if (key == "seed") {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ParseError(source, line_no, "seed: '" + std::string(value) + "' is not an unsigned 64-bit integer");
      c.seed = v;
    } else if (key == "n") {
      c.n = count(2);
    } else if (key == "p") {
      c.p = count(1);
    } else if (key == "q_true") {
      c.q_true = count(1);
    } else if (key == "alpha") {
      c.alpha = pos();
    } else if (key == "beta") {
      c.beta = pos();
    } else if (key == "sigma") {
      c.sigma = num();
      if (c.sigma < 0.0) throw ParseError(source, line_no, "sigma must be nonnegative");
    } else if (key == "noise") {
      if (value == "iid") c.separable_ar = false;
      else if (value == "separable_ar") c.separable_ar = true;
      else throw ParseError(source, line_no, "noise: expected iid or separable_ar");
    } else if (key == "rho1") {
      c.rho1 = correlation();
    } else if (key == "rho2") {
      c.rho2 = correlation();
    } else if (key == "replications") {
      c.replications = count(1);
    } else if (key == "fourier_terms") {
      c.fourier_terms = static_cast<int>(count(1));
    } else if (key == "fourier_mode") {
      if (value == "least_squares") c.fourier_mode = FourierCoefficients::LeastSquares;
      else if (value == "inner_product") c.fourier_mode = FourierCoefficients::EmpiricalInnerProduct;
      else throw ParseError(source, line_no, "fourier_mode: expected least_squares or inner_product");
    } else if (key == "smoothness") {
      c.smoothness = num();
      if (!(c.smoothness >= 1.0)) throw ParseError(source, line_no, "smoothness must be at least 1");
    } else if (key == "degree") {
      c.degree = static_cast<int>(count(0));
    } else if (key == "bandwidth") {
      c.bandwidth = pos();
    } else if (key == "kernel") {
      try {
        c.kernel = parse_local_kernel(std::string(value));
      } catch (const InvalidArgument& e) {
        throw ParseError(source, line_no, e.what());
      }
    } else {
      throw ParseError(source, line_no, "unknown key '" + key + "'");
    }
  }
  if (c.q && c.q_max && *c.q > *c.q_max)
    throw ParseError(source, seen["q"], "q exceeds q_max");
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in, "<config>");
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return parse_run_config(in, path.string());
}

inline SimConfig to_sim_config(const RunConfig& c) {
  SimConfig s;
  s.n = c.n;
  s.p = c.p;
  s.q = c.q_true ? *c.q_true : (c.q ? *c.q : 2);
  s.alpha = c.alpha;
  s.beta_var = c.beta;
  s.sigma = c.sigma;
  if (c.separable_ar) s.noise = SeparableArNoise{c.rho1, c.rho2};
  s.seed = c.seed;
  s.validate();
  return s;
}

inline KernelRidgeTemplate kernel_ridge_template(const RunConfig& c) {
  KernelRidgeTemplate t;
  t.rho = c.rho;
  t.kappa = c.kappa;
  t.folds = c.folds;
  t.cv_seed = stream_seed(c.seed, "cv");
  return t;
}

/// Smoother template for data with n observations.
inline SmootherTemplate smoother_template(const RunConfig& c, Index n) {
  switch (c.smoother) {
    case SmootherKind::KernelRidge:
      return kernel_ridge_template(c);
    case SmootherKind::Fourier:
      return FourierSpec{c.fourier_terms ? *c.fourier_terms : choose_fourier_N(n, c.smoothness), c.fourier_mode};
    case SmootherKind::LocalPoly:
      return LocalPolySpec{c.degree, c.bandwidth ? *c.bandwidth : default_local_poly_bandwidth(n, c.smoothness),
                           c.kernel};
  }
  throw InvalidArgument("smoother_template: unknown smoother");
}

}  // namespace npsr::io
