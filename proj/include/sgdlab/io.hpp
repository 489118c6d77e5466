#ifndef SGDLAB_IO_HPP
#define SGDLAB_IO_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdlab {

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EstimateRow {
  std::uint64_t checkpoint = 0;
  double mean_grad_sq = 0.0;
  double se_grad_sq = 0.0;
  double mean_gap = 0.0;
  double se_gap = 0.0;
  std::optional<double> mean_avg_gap;
  std::optional<double> se_avg_gap;
};

/// Parses estimates.csv. The header must be exactly the documented one (with
/// or without the averaged columns) and there must be at least one data row.
std::vector<EstimateRow> parse_estimates_csv(const std::string& text);

/// Log-log plot of mean_grad_sq and mean_gap against k. Each series is one
/// <polyline> with a +-se band drawn as a <polygon> behind it. Non-positive
/// values are clamped to the smallest positive value in the plot.
std::string render_svg(const std::vector<EstimateRow>& rows);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace sgdlab

#endif  // SGDLAB_IO_HPP
