#include "sgdlab/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sgdlab {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("schedule: " + what);
}

// Growth over the last decade must not fall below this fraction of the
// growth over the decade before it. Power sums with exponent p satisfy
// ratio = 10^(1-p): 1 at the harmonic boundary, < 0.8 once p >= 1.1.
constexpr double kGrowthRatio = 0.9;

}  // namespace

double PowerSchedule::alpha(std::uint64_t k) const {
  return coeff_alpha * std::pow(static_cast<double>(k), -exp_alpha);
}

double PowerSchedule::mu(std::uint64_t k) const {
  if (coeff_mu == 0.0) return 0.0;
  return coeff_mu * std::pow(static_cast<double>(k), -exp_mu);
}

PowerSchedule make_power_schedule(double c, double a, double m, double b) {
  require(std::isfinite(c) && std::isfinite(a) && std::isfinite(m) &&
              std::isfinite(b),
          "parameters must be finite");
  require(c > 0.0, "alpha coefficient c must be > 0");
  require(a >= 0.0 && a <= 1.5, "alpha exponent a must lie in [0, 1.5]");
  require(m >= 0.0, "mu coefficient m must be >= 0");
  require(b >= 0.0 && b < 1.0, "mu exponent b must lie in [0, 1)");
  return PowerSchedule{c, a, m, b};
}

ScheduleClass classify(const PowerSchedule& s) {
  const double a = s.exp_alpha;
  const double b = s.exp_mu;
  ScheduleClass out;
  out.diverges = a > 0.0 && a <= 1.0;
  out.square_summable = a > 0.5;
  // alpha_n * sum k^-2a ~ n^(1-3a) for a < 1/2, n^-1/2 log n at a = 1/2,
  // n^-a once the sum converges. The open endpoint a = 1/3 is excluded.
  out.tail_product_vanishes = a > 1.0 / 3.0;
  if (s.has_damping() && b > 0.0 && a > b && a + b <= 1.0) {
    // mu_{k-1} - mu_k ~ m b k^(-b-1) against alpha_k mu_k ~ c m k^(-a-b):
    // ratio b k^(a-1) / c, which tends to b/c at a = 1 and to 0 below.
    out.damping_admissible = true;
    out.l_mu = (a == 1.0) ? b / s.coeff_alpha : 0.0;
  }
  return out;
}

std::vector<PartialSumReport> numeric_probe_at(
    const Sequence& alpha, const Sequence& mu,
    std::span<const std::uint64_t> horizons) {
  if (horizons.empty()) return {};
  if (!std::is_sorted(horizons.begin(), horizons.end()) ||
      horizons.front() < 10) {
    throw std::invalid_argument(
        "numeric_probe: horizons must be ascending and >= 10");
  }
  std::vector<PartialSumReport> out;
  out.reserve(horizons.size());
  double sa = 0.0;
  double sa2 = 0.0;
  double sam = 0.0;
  std::size_t next = 0;
  const std::uint64_t last = horizons.back();
  for (std::uint64_t k = 1; k <= last; ++k) {
    const double a = alpha(k);
    const double m = mu ? mu(k) : 0.0;
    sa += a;
    sa2 += a * a;
    sam += a * m;
    while (next < horizons.size() && horizons[next] == k) {
      if (!std::isfinite(sa) || !std::isfinite(sa2) || !std::isfinite(sam)) {
        throw std::overflow_error("numeric_probe: partial sum overflow at k=" +
                                  std::to_string(k));
      }
      PartialSumReport r;
      r.horizon = k;
      r.sum_alpha = sa;
      r.sum_alpha_sq = sa2;
      r.tail_product = a * sa2;
      r.ratio_alpha_mu = m > 0.0 ? a / m : 0.0;
      r.sum_alpha_mu = sam;
      out.push_back(r);
      ++next;
    }
  }
  return out;
}

PartialSumReport numeric_probe(const Sequence& alpha, const Sequence& mu,
                               std::uint64_t horizon) {
  const std::uint64_t h[] = {horizon};
  return numeric_probe_at(alpha, mu, h).front();
}

PartialSumReport numeric_probe(const PowerSchedule& s, std::uint64_t horizon) {
  Sequence mu;
  if (s.has_damping()) mu = [&s](std::uint64_t k) { return s.mu(k); };
  return numeric_probe([&s](std::uint64_t k) { return s.alpha(k); }, mu,
                       horizon);
}

ScheduleTrend numeric_trend(const Sequence& alpha, const Sequence& mu,
                            std::uint64_t horizon) {
  if (horizon < 1000) {
    throw std::invalid_argument("numeric_trend: horizon must be >= 1000");
  }
  const std::uint64_t h[] = {horizon / 100, horizon / 10, horizon};
  const auto r = numeric_probe_at(alpha, mu, h);
  const auto grows = [](double s0, double s1, double s2) {
    const double prev = s1 - s0;
    const double last = s2 - s1;
    return prev > 0.0 && last >= kGrowthRatio * prev;
  };
  ScheduleTrend t;
  t.alpha_decreasing = alpha(h[2]) < alpha(h[1]);
  t.sum_growing = grows(r[0].sum_alpha, r[1].sum_alpha, r[2].sum_alpha);
  t.tail_product_decreasing = r[2].tail_product < r[1].tail_product;
  if (mu) {
    t.damping_trend = t.alpha_decreasing && mu(h[2]) < mu(h[1]) &&
                      r[2].ratio_alpha_mu < r[1].ratio_alpha_mu &&
                      grows(r[0].sum_alpha_mu, r[1].sum_alpha_mu,
                            r[2].sum_alpha_mu);
  }
  t.at_horizon = r[2];
  return t;
}

ScheduleTrend numeric_trend(const PowerSchedule& s, std::uint64_t horizon) {
  Sequence mu;
  if (s.has_damping()) mu = [&s](std::uint64_t k) { return s.mu(k); };
  return numeric_trend([&s](std::uint64_t k) { return s.alpha(k); }, mu,
                       horizon);
}

}  // namespace sgdlab
