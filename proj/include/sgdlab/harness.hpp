#ifndef SGDLAB_HARNESS_HPP
#define SGDLAB_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/lyapunov.hpp"
#include "sgdlab/optimizers.hpp"
#include "sgdlab/oracles.hpp"
#include "sgdlab/problems.hpp"
#include "sgdlab/schedules.hpp"

namespace sgdlab {

struct OracleSpec {
  std::string kind = "gaussian";  // gaussian | relative | minibatch
  double sigma = 0.0;
  double eta = 0.0;
  std::size_t batch = 1;
  bool with_replacement = true;
};

struct ExperimentConfig {
  Method method = Method::vsgd;
  ProblemSpec problem;
  OracleSpec oracle;
  PowerSchedule schedule;
  std::uint64_t horizon = 1000;
  std::uint64_t replicas = 2;
  std::uint64_t master_seed = 0;
  CheckpointPlan checkpoints;
  bool lyapunov = false;
  bool averaged = false;
  Vec x0;
  double x0_spread = 0.0;  // > 0 draws x0 uniformly in x0 +- spread per replica
  double beta = 0.0;       // classical methods only
  std::optional<double> lyapunov_coefficient;  // default: select_zeta/lambda
};

/// Throws std::invalid_argument naming the violated constraint.
void validate(const ExperimentConfig& cfg);

/// Builds the oracle described by cfg (the seed is replaced per replica).
GradientOracle make_oracle(const ExperimentConfig& cfg, const Problem& p);

/// Run options for one replica of cfg, Lyapunov coupling included.
RunOptions single_run_options(const ExperimentConfig& cfg, const Problem& p);

/// Replica i draws from derive_key(master_seed, i).
std::uint64_t replica_seed(std::uint64_t master_seed, std::uint64_t replica);

struct CheckpointEstimate {
  std::uint64_t k = 0;
  double alpha = 0.0;
  double mu = 0.0;
  double mean_grad_sq = 0.0;
  double se_grad_sq = 0.0;
  double mean_gap = 0.0;
  double se_gap = 0.0;
  std::optional<double> mean_avg_gap;
  std::optional<double> se_avg_gap;
  // One-step pairs (k-1, k) at this checkpoint.
  double mean_gap_prev = 0.0;
  double mean_grad_sq_prev = 0.0;
  double mean_gap_delta = 0.0;
  double se_gap_delta = 0.0;
  std::optional<DescentPoint> descent;  // Lyapunov means, when enabled
  double mean_h = 0.0;
  double mean_z_tilde = 0.0;
  double mean_h_bar = 0.0;
};

struct MonteCarloEstimate {
  ExperimentConfig config;
  std::vector<CheckpointEstimate> checkpoints;
  std::uint64_t replicas_ok = 0;
  std::uint64_t replicas_diverged = 0;
  std::vector<std::uint64_t> diverged_at;  // failing iteration per diverged replica
  double smoothness_l = 0.0;
  double lyapunov_coefficient = 0.0;
  DampingMode lyapunov_mode = DampingMode::constant;
  // Nesterov hypothesis: L * beta_hat < inf mu_k, or the problem is convex.
  double beta_hat = 0.0;
  bool lbeta_below_mu = false;
  bool problem_convex = false;

  const CheckpointEstimate* at(std::uint64_t k) const;
};

/// More than 1% of replicas diverged.
class ExperimentFailure : public std::runtime_error {
 public:
  ExperimentFailure(const std::string& what, std::uint64_t diverged,
                    std::uint64_t total)
      : std::runtime_error(what), diverged_{diverged}, total_{total} {}
  std::uint64_t diverged() const { return diverged_; }
  std::uint64_t total() const { return total_; }

 private:
  std::uint64_t diverged_;
  std::uint64_t total_;
};

/// Worker count: SGDLAB_THREADS if set, else hardware concurrency.
unsigned harness_threads();

/// Runs all replicas (in parallel) and reduces them in replica order with
/// pairwise summation, so the result does not depend on scheduling.
MonteCarloEstimate run_experiment(const ExperimentConfig& cfg);

/// Running minimum of mean_grad_sq over checkpoints.
std::vector<double> liminf_probe(const MonteCarloEstimate& est);

/// True if the running minimum strictly decreases across the listed
/// checkpoints (all of which must be on the grid).
bool running_min_decreasing(const MonteCarloEstimate& est,
                            std::span<const std::uint64_t> ks);

struct AveragedBoundProbe {
  std::vector<std::uint64_t> k;
  std::vector<double> ratio;  // (E f(xbar) - f*) sum alpha / (1 + sum alpha^2)
  double max_after_burn_in = 0.0;
  double median_after_burn_in = 0.0;
  double start_after_burn_in = 0.0;  // ratio at the first post-burn-in checkpoint
  bool within_twice_median = false;  // max <= 2 x median, both after burn-in
  bool bounded = false;
};

/// Finite-horizon surrogate for a bounded ratio: after burn-in the ratio
/// never exceeds twice the larger of its median and its starting value.
/// Post-burn-in checkpoints are thinned to spacing >= 1.5x (plus the last).
/// A flat series passes through the median, a decaying one through its
/// start; sustained growth fails both. Requires averaged mode.
AveragedBoundProbe averaged_bound_probe(const MonteCarloEstimate& est,
                                        const PowerSchedule& s,
                                        std::uint64_t burn_in);

/// Descent-fit input series from a Lyapunov-enabled estimate.
std::vector<DescentPoint> descent_series(const MonteCarloEstimate& est);

struct SweepRow {
  Method method = Method::vsgd;
  double a = 0.0;
  double b = 0.0;
  bool ok = false;
  std::string error;
  std::optional<CheckpointEstimate> final;
  std::vector<std::uint64_t> grid;
};

/// Runs every config; failures are recorded per row and the sweep continues.
std::vector<SweepRow> sweep(const std::vector<ExperimentConfig>& grid);

std::string estimates_csv(const MonteCarloEstimate& est);
std::string summary_json(const MonteCarloEstimate& est);
std::string lyapunov_csv(const MonteCarloEstimate& est);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Summation by recursive halving over the index order.
double pairwise_sum(std::span<const double> v);

}  // namespace sgdlab

#endif  // SGDLAB_HARNESS_HPP
