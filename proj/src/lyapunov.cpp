#include "sgdlab/lyapunov.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgdlab {

LyapunovScalars scalars_from(double gap, std::span<const double> grad,
                             std::span<const double> v, double coupling) {
  LyapunovScalars s;
  const double vv = norm_sq(v);
  s.h = gap + 0.5 * vv;
  s.h_bar = norm_sq(grad) + vv;
  s.z_tilde = dot(v, grad);
  s.h_tilde = s.h + coupling * s.z_tilde;
  return s;
}

LyapunovScalars scalars(const Problem& p, std::span<const double> x,
                        std::span<const double> v, double coupling) {
  if (!p.minimum()) {
    throw std::invalid_argument("lyapunov: problem '" + p.name() +
                                "' has no known minimum value");
  }
  const Vec g = p.gradient(x);
  return scalars_from(p.value(x) - p.minimum()->f_star, g, v, coupling);
}

double select_zeta(double l_smooth, double mu_lo, double mu_hi) {
  if (!(l_smooth > 0.0) || !(mu_lo > 0.0) || !(mu_hi >= mu_lo)) {
    throw std::invalid_argument(
        "select_zeta: need L > 0 and 0 < mu_lo <= mu_hi");
  }
  return mu_lo / (2.0 * (mu_hi * mu_hi / 4.0 + l_smooth));
}

double select_lambda(double l_smooth, double l_mu) {
  if (!(l_smooth > 0.0) || !(l_mu >= 0.0)) {
    throw std::invalid_argument("select_lambda: need L > 0 and l_mu >= 0");
  }
  return 0.5 * std::min(1.0 / l_smooth, 1.0 / (l_smooth + l_mu * l_mu / 4.0));
}

namespace {

struct Nnls2 {
  double k = 0.0;
  double c = 0.0;
};

// min sum (d + K r - C q)^2 over K, C >= 0, i.e. d ~ -K r + C q.
Nnls2 fit_nonnegative(std::span<const double> d, std::span<const double> r,
                      std::span<const double> q) {
  double rr = 0, rq = 0, qq = 0, dr = 0, dq = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    rr += r[i] * r[i];
    rq += r[i] * q[i];
    qq += q[i] * q[i];
    dr += d[i] * r[i];
    dq += d[i] * q[i];
  }
  const auto sse = [&](double k, double c) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double e = d[i] + k * r[i] - c * q[i];
      s += e * e;
    }
    return s;
  };
  std::vector<Nnls2> cand{{0.0, 0.0}};
  // Normal equations for regressors (-r, q).
  const double det = rr * qq - rq * rq;
  if (det > 0.0) {
    const double k = (-dr * qq + dq * rq) / det;
    const double c = (dq * rr - dr * rq) / det;
    if (k >= 0.0 && c >= 0.0) cand.push_back({k, c});
  }
  if (rr > 0.0) cand.push_back({std::max(-dr / rr, 0.0), 0.0});
  if (qq > 0.0) cand.push_back({0.0, std::max(dq / qq, 0.0)});
  return *std::min_element(cand.begin(), cand.end(),
                           [&](const Nnls2& a, const Nnls2& b) {
                             return sse(a.k, a.c) < sse(b.k, b.c);
                           });
}

}  // namespace

DescentFit descent_fit(std::span<const DescentPoint> series,
                       const PowerSchedule& s, std::uint64_t burn_in,
                       DampingMode mode) {
  DescentFit fit;
  fit.burn_in = burn_in;
  std::vector<double> d, r, q, band;
  for (const DescentPoint& p : series) {
    if (p.k <= burn_in || p.k == 0) continue;
    const double a = s.alpha(p.k);
    const double scale = mode == DampingMode::vanishing ? a * s.mu(p.k) : a;
    d.push_back(p.mean_delta);
    r.push_back(scale * p.mean_h_bar_prev);
    q.push_back(a * a);
    band.push_back(3.0 * p.se_delta);
  }
  fit.checkpoints_used = d.size();
  if (d.empty()) {
    fit.conclusive = false;
    return fit;
  }
  const std::size_t half = std::max<std::size_t>(d.size() / 2, 1);
  const std::span<const double> dc(d.data(), half), rc(r.data(), half),
      qc(q.data(), half);

  // Rank check on the calibration regressors [-r, q].
  double rr = 0, rq = 0, qq = 0;
  for (std::size_t i = 0; i < half; ++i) {
    rr += rc[i] * rc[i];
    rq += rc[i] * qc[i];
    qq += qc[i] * qc[i];
  }
  const double det = rr * qq - rq * rq;
  fit.conclusive = half >= 2 && rr > 0.0 && qq > 0.0 && det > 1e-12 * rr * qq;

  if (fit.conclusive) {
    const Nnls2 ls = fit_nonnegative(dc, rc, qc);
    fit.k_hat = ls.k;
    double c = ls.c;
    for (std::size_t i = 0; i < half; ++i) {
      if (q[i] > 0.0) c = std::max(c, (d[i] + fit.k_hat * r[i] - band[i]) / q[i]);
    }
    fit.c_hat = c;
  }

  std::size_t violations = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > -fit.k_hat * r[i] + fit.c_hat * q[i] + band[i]) ++violations;
  }
  fit.violation_fraction =
      static_cast<double>(violations) / static_cast<double>(d.size());
  return fit;
}

TripletReport triplet_probe(std::span<const double> x, std::span<const double> y,
                            std::span<const double> z,
                            std::span<const double> alpha,
                            std::span<const double> tolerance) {
  const std::size_t n = x.size();
  if (y.size() != n || z.size() != n || alpha.size() != n ||
      (!tolerance.empty() && tolerance.size() != n)) {
    throw std::invalid_argument("triplet_probe: series lengths differ");
  }
  if (n < 10) throw std::invalid_argument("triplet_probe: need >= 10 entries");

  TripletReport rep;
  rep.running_min_y.resize(n);
  double run_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    run_min = std::min(run_min, y[k]);
    rep.running_min_y[k] = run_min;
  }

  std::size_t holds = 0;
  for (std::size_t k = 1; k < n; ++k) {
    const double tol = tolerance.empty() ? 0.0 : tolerance[k];
    if (x[k] <= x[k - 1] - alpha[k] * y[k] + alpha[k] * z[k] + tol) ++holds;
  }
  rep.fraction_holding = static_cast<double>(holds) / static_cast<double>(n - 1);
  rep.holds_everywhere = holds == n - 1;

  const double x_min = *std::min_element(x.begin(), x.end());
  rep.k_slack = std::max(x[0] - x_min, 0.0);
  double sum_y = 0.0;
  double sum_z = 0.0;
  double excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < n; ++k) {
    sum_y += alpha[k] * y[k];
    sum_z += alpha[k] * z[k];
    excess = std::max(excess, sum_y - (rep.k_slack + sum_z));
  }
  rep.max_partial_sum_excess = excess;
  rep.partial_sum_bound = excess <= 0.0;
  return rep;
}

std::string to_json(const DescentFit& fit) {
  nlohmann::ordered_json j;
  j["k_hat"] = fit.k_hat;
  j["c_hat"] = fit.c_hat;
  j["violation_fraction"] = fit.violation_fraction;
  j["burn_in"] = fit.burn_in;
  j["conclusive"] = fit.conclusive;
  j["checkpoints_used"] = fit.checkpoints_used;
  return j.dump(2);
}

}  // namespace sgdlab
