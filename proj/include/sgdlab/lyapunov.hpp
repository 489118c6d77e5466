#ifndef SGDLAB_LYAPUNOV_HPP
#define SGDLAB_LYAPUNOV_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgdlab/problems.hpp"
#include "sgdlab/schedules.hpp"

namespace sgdlab {

/// Energy quantities of a momentum state (x, v):
///   h       = f(x) - f* + |v|^2 / 2
///   h_bar   = |grad f(x)|^2 + |v|^2
///   z_tilde = v . grad f(x)
///   h_tilde = h + coupling * z_tilde
/// where coupling is zeta (constant damping) or lambda * mu_k (vanishing).
struct LyapunovScalars {
  double h = 0.0;
  double h_bar = 0.0;
  double z_tilde = 0.0;
  double h_tilde = 0.0;
};

/// Throws std::invalid_argument if the problem has no known minimum.
LyapunovScalars scalars(const Problem& p, std::span<const double> x,
                        std::span<const double> v, double coupling);

/// Same, from an already evaluated f(x) - f* and gradient.
LyapunovScalars scalars_from(double gap, std::span<const double> grad,
                             std::span<const double> v, double coupling);

/// Coupling for constant damping mu_k in [mu_lo, mu_hi]:
///   zeta = mu_lo / (2 (mu_hi^2 / 4 + L)),
/// which keeps the |v|^2 coefficient mu_lo - zeta (mu_k^2/4 + L) of the
/// drift at least mu_lo / 2.
double select_zeta(double l_smooth, double mu_lo, double mu_hi);

/// Coupling scale for vanishing damping:
///   lambda = 1/2 min(1/L, 1/(L + l_mu^2/4)).
double select_lambda(double l_smooth, double l_mu);

enum class DampingMode { constant, vanishing };

/// Monte Carlo means at checkpoint k, paired with the step that produced it.
struct DescentPoint {
  std::uint64_t k = 0;
  double mean_h_tilde = 0.0;       // E H~_k
  double mean_h_tilde_prev = 0.0;  // E H~_{k-1}
  double mean_h_bar_prev = 0.0;    // E H-bar_{k-1}
  double mean_delta = 0.0;         // E (H~_k - H~_{k-1}), paired per replica
  double se_delta = 0.0;
};

/// Fit of E H~_k - E H~_{k-1} <= -K r_k + C alpha_k^2 with
/// r_k = alpha_k E H-bar_{k-1} (constant damping) or
/// r_k = alpha_k mu_k E H-bar_{k-1} (vanishing damping).
struct DescentFit {
  double k_hat = 0.0;
  double c_hat = 0.0;
  double violation_fraction = 0.0;
  std::uint64_t burn_in = 0;
  bool conclusive = true;
  std::size_t checkpoints_used = 0;
};

/// K is fitted by non-negative least squares on the first half of the
/// post-burn-in checkpoints; C is then lifted to the smallest value for which
/// that half satisfies the inequality within a 3-standard-error band. The
/// violation fraction counts all post-burn-in checkpoints, so only the held-out
/// second half can contribute. A rank-deficient regressor set yields
/// conclusive = false with K = C = 0.
DescentFit descent_fit(std::span<const DescentPoint> series,
                       const PowerSchedule& s, std::uint64_t burn_in,
                       DampingMode mode = DampingMode::constant);

/// Pointwise check of X_k <= X_{k-1} - alpha_k Y_k + alpha_k Z_k.
struct TripletReport {
  bool holds_everywhere = false;
  double fraction_holding = 0.0;   // over k = 1..n-1
  std::vector<double> running_min_y;
  double k_slack = 0.0;            // max(X_0 - min X, 0)
  bool partial_sum_bound = false;  // sum alpha Y <= K + sum alpha Z for all n
  double max_partial_sum_excess = 0.0;
};

/// `tolerance` is an optional per-point additive band (empty = exact).
/// Throws std::invalid_argument on length mismatch or fewer than 10 entries.
TripletReport triplet_probe(std::span<const double> x, std::span<const double> y,
                            std::span<const double> z,
                            std::span<const double> alpha,
                            std::span<const double> tolerance = {});

std::string to_json(const DescentFit& fit);

}  // namespace sgdlab

#endif  // SGDLAB_LYAPUNOV_HPP
