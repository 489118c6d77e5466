#include "sgdlab/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sgdlab {

namespace {

constexpr const char* kHeader = "checkpoint,mean_grad_sq,se_grad_sq,mean_gap,se_gap";
constexpr const char* kHeaderAvg =
    "checkpoint,mean_grad_sq,se_grad_sq,mean_gap,se_gap,mean_avg_gap,se_avg_gap";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

template <class T>
T parse_field(const std::string& s, int lineno) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError(fmt::format("line {}: bad field '{}'", lineno, s));
  }
  return v;
}

// Plot area inside an 800x500 viewBox.
constexpr double kLeft = 80, kRight = 770, kTop = 30, kBottom = 440;

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const {
    const double t = hi > lo ? (std::log10(v) - lo) / (hi - lo) : 0.5;
    return a + t * (b - a);
  }
};

}  // namespace

std::vector<EstimateRow> parse_estimates_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool avg = false;
  if (line == kHeaderAvg) {
    avg = true;
  } else if (line != kHeader) {
    throw SchemaError("unexpected header '" + line + "'");
  }
  const std::size_t cols = avg ? 7 : 5;
  std::vector<EstimateRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols) {
      throw SchemaError(fmt::format("line {}: expected {} fields, got {}", lineno,
                                    cols, f.size()));
    }
    EstimateRow r;
    r.checkpoint = parse_field<std::uint64_t>(f[0], lineno);
    r.mean_grad_sq = parse_field<double>(f[1], lineno);
    r.se_grad_sq = parse_field<double>(f[2], lineno);
    r.mean_gap = parse_field<double>(f[3], lineno);
    r.se_gap = parse_field<double>(f[4], lineno);
    if (avg) {
      r.mean_avg_gap = parse_field<double>(f[5], lineno);
      r.se_avg_gap = parse_field<double>(f[6], lineno);
    }
    if (r.checkpoint == 0) throw SchemaError(fmt::format("line {}: checkpoint 0", lineno));
    if (!rows.empty() && r.checkpoint <= rows.back().checkpoint) {
      throw SchemaError(fmt::format("line {}: checkpoints not increasing", lineno));
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw SchemaError("no data rows");
  return rows;
}

std::string render_svg(const std::vector<EstimateRow>& rows) {
  if (rows.empty()) throw SchemaError("no data rows");

  double floor_v = std::numeric_limits<double>::infinity();
  double ymax = 0.0;
  for (const auto& r : rows) {
    for (double v : {r.mean_grad_sq, r.mean_gap, r.mean_grad_sq - r.se_grad_sq,
                     r.mean_gap - r.se_gap}) {
      if (v > 0.0 && std::isfinite(v)) floor_v = std::min(floor_v, v);
    }
    ymax = std::max({ymax, r.mean_grad_sq + r.se_grad_sq, r.mean_gap + r.se_gap});
  }
  if (!std::isfinite(floor_v)) floor_v = 1e-300;
  if (!(ymax > floor_v)) ymax = floor_v * 10.0;
  const auto clamp = [&](double v) { return std::isfinite(v) && v > floor_v ? v : floor_v; };

  const Axis xa{std::log10(static_cast<double>(rows.front().checkpoint)),
                std::log10(static_cast<double>(rows.back().checkpoint))};
  const Axis ya{std::log10(floor_v), std::log10(ymax)};
  const auto px = [&](std::uint64_t k) {
    return xa.map(static_cast<double>(k), kLeft, kRight);
  };
  const auto py = [&](double v) { return ya.map(clamp(v), kBottom, kTop); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
       "width=\"800\" height=\"500\">\n";
  s += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
      "stroke=\"#444\"/>\n",
      kLeft, kTop, kRight - kLeft, kBottom - kTop);

  struct Series {
    const char* name;
    const char* color;
    double EstimateRow::*mean;
    double EstimateRow::*se;
  };
  const Series series[] = {
      {"mean_grad_sq", "#1f77b4", &EstimateRow::mean_grad_sq, &EstimateRow::se_grad_sq},
      {"mean_gap", "#d62728", &EstimateRow::mean_gap, &EstimateRow::se_gap},
  };

  for (const auto& ser : series) {
    std::string band;
    for (const auto& r : rows) {
      band += fmt::format("{:.2f},{:.2f} ", px(r.checkpoint), py(r.*ser.mean + r.*ser.se));
    }
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      band += fmt::format("{:.2f},{:.2f} ", px(it->checkpoint),
                          py((*it).*ser.mean - (*it).*ser.se));
    }
    band.pop_back();
    s += fmt::format(
        "<polygon class=\"band\" points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" "
        "stroke=\"none\"/>\n",
        band, ser.color);
  }
  for (const auto& ser : series) {
    std::string pts;
    for (const auto& r : rows) {
      pts += fmt::format("{:.6f},{:.6f} ", px(r.checkpoint), py(r.*ser.mean));
    }
    pts.pop_back();
    s += fmt::format(
        "<polyline class=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" "
        "stroke-width=\"1.5\"/>\n",
        ser.name, pts, ser.color);
  }

  s += fmt::format("<text x=\"{}\" y=\"480\" text-anchor=\"middle\">k (log scale)</text>\n",
                   (kLeft + kRight) / 2);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"start\">{}</text>\n", kLeft,
                   kBottom + 18, rows.front().checkpoint);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", kRight,
                   kBottom + 18, rows.back().checkpoint);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                   kTop + 4, ymax);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                   kBottom, floor_v);
  s += "<text x=\"600\" y=\"50\" fill=\"#1f77b4\">mean_grad_sq</text>\n";
  s += "<text x=\"600\" y=\"70\" fill=\"#d62728\">mean_gap</text>\n";
  s += "</svg>\n";
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace sgdlab
