#ifndef SGDLAB_OPTIMIZERS_HPP
#define SGDLAB_OPTIMIZERS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/lyapunov.hpp"
#include "sgdlab/oracles.hpp"
#include "sgdlab/problems.hpp"
#include "sgdlab/schedules.hpp"
#include "sgdlab/vec.hpp"

namespace sgdlab {

/// Iterate x_k, velocity v_k (zero for plain SGD) and x_{k-1}.
struct IterState {
  std::uint64_t k = 0;
  Vec x;
  Vec v;
  Vec x_prev;

  static IterState initial(std::span<const double> x0);
};

/// Raised when an iterate has a non-finite coordinate or |x| > 1e12.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(std::uint64_t iteration);
  std::uint64_t iteration() const { return iteration_; }

 private:
  std::uint64_t iteration_;
};

/// x_k = x_{k-1} - alpha F(x_{k-1}, xi_k).
IterState vsgd_step(const IterState& s, const OracleSample& g, double alpha);

/// Damped heavy ball, velocity first:
///   v_k = v_{k-1} - mu alpha v_{k-1} - alpha F(x_{k-1}, xi_k)
///   x_k = x_{k-1} + alpha v_k
/// Requires mu * alpha <= 1.
IterState msgd_damped_step(const IterState& s, const OracleSample& g,
                           double alpha, double mu);

/// v_k = beta v_{k-1} - alpha F(x_{k-1}, xi_k);  x_k = x_{k-1} + v_k.
/// With constant step a and beta = 1 - mu a, this is msgd_damped_step under
/// alpha = a^2 and v_classical = a * v_damped.
IterState msgd_classical_step(const IterState& s, const OracleSample& g,
                              double alpha, double beta);

/// Nesterov form of the damped method, gradient taken at the lookahead
///   y = x_{k-1} + beta_k (x_{k-1} - x_{k-2}),
///   beta_k = (1 - mu alpha_k) alpha_k / alpha_prev   (0 on the first step),
///   v_k = (1 - mu alpha_k) v_{k-1} - alpha_k F(y, xi_k),
///   x_k = x_{k-1} + alpha_k v_k.
IterState nasgd_step(const IterState& s, GradientOracle& oracle,
                     double alpha_k, double alpha_prev, double mu);

/// y = x_{k-1} + beta (x_{k-1} - x_{k-2});  x_k = y - alpha F(y, xi_k).
/// v records the displacement x_k - x_{k-1}.
IterState nesterov_classical_step(const IterState& s, GradientOracle& oracle,
                                  double alpha, double beta);

/// Step-size weighted mean of past iterates.
struct AveragedState {
  Vec xbar;
  double weight_sum = 0.0;
};

/// xbar += alpha / (weight_sum + alpha) * (x_prev_iterate - xbar).
AveragedState averaged_update(const AveragedState& a,
                              std::span<const double> x_prev_iterate,
                              double alpha);
void averaged_update_inplace(AveragedState& a,
                             std::span<const double> x_prev_iterate,
                             double alpha);

enum class Method { vsgd, msgd, msgd_classical, nasgd, nesterov_classical };

std::string to_string(Method m);
Method parse_method(const std::string& name);
bool needs_damping(Method m);

/// lim sup of (1 - mu_k alpha_k) alpha_k / alpha_{k-1} for a power schedule.
double nesterov_beta_hat(const PowerSchedule& s);

/// Checkpoint grid. Geometric: powers of two, {1,2,5} x 10^j, a tail window
/// of 8 points over the last 5% of the horizon, and the horizon itself.
/// A positive stride adds every multiple of the stride as well.
struct CheckpointPlan {
  std::uint64_t stride = 0;
  bool geometric = true;
};

std::vector<std::uint64_t> checkpoint_grid(std::uint64_t horizon,
                                           const CheckpointPlan& plan);

struct LyapunovOptions {
  bool enabled = false;
  DampingMode mode = DampingMode::constant;
  /// zeta for constant damping, lambda for vanishing (coupling lambda mu_k).
  double coefficient = 0.0;
};

struct RunOptions {
  Method method = Method::vsgd;
  PowerSchedule schedule;
  std::uint64_t iters = 1;
  Vec x0;
  double beta = 0.0;  // classical momentum / Nesterov coefficient
  CheckpointPlan checkpoints;
  bool averaged = false;
  LyapunovOptions lyapunov;
};

/// Validates method/schedule compatibility; throws std::invalid_argument.
void validate(const RunOptions& opt, const Problem& p);

struct Checkpoint {
  std::uint64_t k = 0;
  Vec x;
  Vec v;
  double alpha = 0.0;
  double mu = 0.0;
  double f = 0.0;
  double grad_sq = 0.0;
  // State k-1, evaluated at the same checkpoint for one-step differences.
  double f_prev = 0.0;
  double grad_sq_prev = 0.0;
  std::optional<LyapunovScalars> lyap;
  std::optional<LyapunovScalars> lyap_prev;
  std::optional<double> f_avg;
};

struct Trajectory {
  Method method = Method::vsgd;
  std::vector<Checkpoint> states;
  bool has_lyapunov = false;
  bool has_averaged = false;
};

/// Runs the selected kernel for `iters` iterations from opt.x0. The oracle is
/// reseeded with `seed`, so the result is a function of (opt, oracle model,
/// seed). Propagates DivergenceError with the failing iteration.
Trajectory run(const RunOptions& opt, const Problem& p, GradientOracle& oracle,
               std::uint64_t seed);

/// CSV `k,alpha,mu,f,grad_sq[,H,Zt,Ht]` with round-trip precision.
std::string trajectory_csv(const Trajectory& t);
std::string trajectory_json(const Trajectory& t);

}  // namespace sgdlab

#endif  // SGDLAB_OPTIMIZERS_HPP
