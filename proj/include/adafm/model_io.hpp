#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "adafm/error.hpp"
#include "adafm/fm_model.hpp"

namespace adafm {

// Model file layout:
//   ADAFM v1
//   d=<int> k=<int> T=<int>
//   then per component:
//     alpha=<decimal>
//     <d decimals: w>
//     <d lines of k decimals: rows of V>
// Decimals use 17 significant digits, which round-trips every double.

inline constexpr std::string_view kModelMagic = "ADAFM";
inline constexpr std::string_view kModelVersion = "v1";

/// Shortest-safe decimal with 17 significant digits.
inline std::string format_decimal(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline void save_model(std::ostream& out, const EnsembleModel& model) {
  if (model.empty()) throw ConfigError("refusing to save an empty model");
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "d=" << model.dim() << " k=" << model.component_rank() << " T=" << model.size() << '\n';
  for (const auto& c : model.components()) {
    if (!std::isfinite(c.alpha) || !c.params.all_finite()) {
      throw DivergenceError("refusing to save a model with non-finite parameters");
    }
    out << "alpha=" << format_decimal(c.alpha) << '\n';
    const auto w = c.params.linear();
    for (std::size_t l = 0; l < w.size(); ++l) out << (l ? " " : "") << format_decimal(w[l]);
    out << '\n';
    for (std::size_t l = 0; l < c.params.dim(); ++l) {
      const auto row = c.params.row(l);
      for (std::size_t m = 0; m < row.size(); ++m) out << (m ? " " : "") << format_decimal(row[m]);
      out << '\n';
    }
  }
}

inline void save_model(const std::string& path, const EnsembleModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  save_model(out, model);
  if (!out) throw ConfigError("failed writing " + path);
}

namespace detail {

class ModelReader {
 public:
  ModelReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string next_line(const char* expecting) {
    std::string line;
    if (!std::getline(in_, line)) {
      throw FormatError(source_, line_ + 1, std::string("unexpected end of file, expected ") + expecting);
    }
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_, line_, what); }

  std::vector<double> decimals(const std::string& line, std::size_t expected) {
    std::vector<double> out;
    out.reserve(expected);
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(p, end, x);
      if (ec != std::errc() || (ptr != end && *ptr != ' ')) fail("malformed decimal");
      if (!std::isfinite(x)) fail("non-finite value");
      out.push_back(x);
      p = ptr;
    }
    if (out.size() != expected) {
      fail("expected " + std::to_string(expected) + " values, found " + std::to_string(out.size()));
    }
    return out;
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

inline std::size_t parse_size_field(ModelReader& r, std::string_view token, std::string_view key) {
  if (token.substr(0, key.size()) != key || token.size() <= key.size() || token[key.size()] != '=') {
    r.fail("expected field '" + std::string(key) + "='");
  }
  const auto digits = token.substr(key.size() + 1);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    r.fail("malformed integer in field '" + std::string(key) + "'");
  }
  return value;
}

}  // namespace detail

inline EnsembleModel load_model(std::istream& in, const std::string& source = "<model>") {
  detail::ModelReader r(in, source);
  {
    const auto header = r.next_line("header");
    std::istringstream hs(header);
    std::string magic;
    std::string version;
    hs >> magic >> version;
    if (magic != kModelMagic) r.fail("not a model file (missing '" + std::string(kModelMagic) + "' header)");
    if (version != kModelVersion) {
      r.fail("unsupported model version '" + version + "', expected " + std::string(kModelVersion));
    }
  }
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t t = 0;
  {
    const auto shape = r.next_line("shape line");
    std::istringstream ss(shape);
    std::string a;
    std::string b;
    std::string c;
    std::string extra;
    ss >> a >> b >> c;
    if (ss >> extra) r.fail("trailing content on shape line");
    d = detail::parse_size_field(r, a, "d");
    k = detail::parse_size_field(r, b, "k");
    t = detail::parse_size_field(r, c, "T");
    if (d == 0 || k == 0 || t == 0) r.fail("d, k and T must be positive");
  }
  EnsembleModel model;
  for (std::size_t comp = 0; comp < t; ++comp) {
    const auto alpha_line = r.next_line("alpha line");
    if (alpha_line.rfind("alpha=", 0) != 0) r.fail("expected 'alpha=' line");
    const auto alpha = r.decimals(alpha_line.substr(6), 1)[0];
    if (!(alpha > 0.0)) r.fail("alpha must be positive");
    FmParams params(d, k);
    const auto w = r.decimals(r.next_line("linear weights"), d);
    std::copy(w.begin(), w.end(), params.linear().begin());
    for (std::size_t l = 0; l < d; ++l) {
      const auto row = r.decimals(r.next_line("factor row"), k);
      std::copy(row.begin(), row.end(), params.row(l).begin());
    }
    model.add(alpha, std::move(params));
  }
  std::string rest;
  while (std::getline(in, rest)) {
    if (!rest.empty() && rest != "\r") {
      throw FormatError(source, r.line() + 1, "trailing content after the last component");
    }
  }
  return model;
}

inline EnsembleModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model file " + path);
  return load_model(in, path);
}

}  // namespace adafm
