#ifndef SGDLAB_SCHEDULES_HPP
#define SGDLAB_SCHEDULES_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sgdlab {

/// Step size alpha_k = c * k^-a and damping mu_k = m * k^-b, k >= 1.
/// m == 0 means the schedule carries no damping sequence.
struct PowerSchedule {
  double coeff_alpha = 1.0;
  double exp_alpha = 1.0;
  double coeff_mu = 0.0;
  double exp_mu = 0.0;

  double alpha(std::uint64_t k) const;
  double mu(std::uint64_t k) const;
  bool has_damping() const { return coeff_mu > 0.0; }

  friend bool operator==(const PowerSchedule&, const PowerSchedule&) = default;
};

/// Throws std::invalid_argument on non-finite or out-of-range parameters:
/// c > 0, a in [0, 1.5], m >= 0, b in [0, 1).
PowerSchedule make_power_schedule(double c, double a, double m = 0.0,
                                  double b = 0.0);

/// Closed-form admissibility of a power-law schedule.
struct ScheduleClass {
  bool diverges = false;         // sum alpha = inf and alpha -> 0
  bool square_summable = false;  // sum alpha^2 < inf
  // alpha_n * sum_{k<=n} alpha_k^2 -> 0. Reported as "thm22_condition".
  bool tail_product_vanishes = false;
  // alpha, mu -> 0, alpha/mu -> 0, sum alpha*mu = inf and
  // mu_{k-1} - mu_k = l_mu * alpha_k * mu_k + o(alpha_k * mu_k).
  bool damping_admissible = false;
  double l_mu = 0.0;  // meaningful only when damping_admissible
};

ScheduleClass classify(const PowerSchedule& s);

struct PartialSumReport {
  std::uint64_t horizon = 0;
  double sum_alpha = 0.0;
  double sum_alpha_sq = 0.0;
  double tail_product = 0.0;    // alpha_n * sum_{k<=n} alpha_k^2
  double ratio_alpha_mu = 0.0;  // alpha_n / mu_n, 0 without damping
  double sum_alpha_mu = 0.0;
};

using Sequence = std::function<double(std::uint64_t)>;

/// Plain forward partial sums up to `horizon` (>= 10). Throws
/// std::overflow_error if a sum leaves the representable range.
PartialSumReport numeric_probe(const PowerSchedule& s, std::uint64_t horizon);

/// Same sums for arbitrary sequences; pass an empty `mu` for no damping.
PartialSumReport numeric_probe(const Sequence& alpha, const Sequence& mu,
                               std::uint64_t horizon);

/// Reports at each of the ascending `horizons`, from a single pass.
std::vector<PartialSumReport> numeric_probe_at(
    const Sequence& alpha, const Sequence& mu,
    std::span<const std::uint64_t> horizons);

/// Finite-horizon trend surrogates for the analytic classes, read off
/// reports at n/100, n/10 and n. This is the only classification available
/// for sequences that are not power laws.
struct ScheduleTrend {
  bool alpha_decreasing = false;
  bool sum_growing = false;  // last-decade growth >= 0.9 x previous decade
  bool tail_product_decreasing = false;
  bool damping_trend = false;
  PartialSumReport at_horizon;
};

ScheduleTrend numeric_trend(const Sequence& alpha, const Sequence& mu,
                            std::uint64_t horizon);
ScheduleTrend numeric_trend(const PowerSchedule& s, std::uint64_t horizon);

}  // namespace sgdlab

#endif  // SGDLAB_SCHEDULES_HPP
