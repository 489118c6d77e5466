// Pilot run for the nonconvex acceptance experiment. Uses a master seed that
// the acceptance suite never uses and prints the constants it derives.
// Usage: sgdlab_pilot [config] [verbose]
#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "sgdlab/config.hpp"
#include "sgdlab/harness.hpp"

using namespace sgdlab;

int main(int argc, char** argv) {
  const std::string path =
      argc > 1 ? argv[1] : std::string(SGDLAB_SOURCE_DIR "/configs/acceptance/rastrigin_vsgd.cfg");
  ExperimentConfig cfg = load_config_file(path);
  cfg.master_seed = 0x9e3779b97f4a7c15ULL;
  const MonteCarloEstimate est = run_experiment(cfg);
  const Problem p = make_problem(cfg.problem);
  const double lm_half = p.smoothness_l() * cfg.oracle.sigma * cfg.oracle.sigma *
                         static_cast<double>(p.dim()) / 2.0;

  const CheckpointEstimate& last = est.checkpoints.back();
  fmt::print("final mean_grad_sq {:.6g} (se {:.3g})\n", last.mean_grad_sq, last.se_grad_sq);
  for (std::uint64_t k : {1000ULL, 10000ULL, 100000ULL}) {
    const auto mins = liminf_probe(est);
    for (std::size_t i = 0; i < est.checkpoints.size(); ++i) {
      if (est.checkpoints[i].k == k) fmt::print("running min at {}: {:.6g}\n", k, mins[i]);
    }
  }
  fmt::print("threshold (2x final): {:.6g}\n", 2.0 * last.mean_grad_sq);

  // Largest C for which the one-step inequality holds at each checkpoint:
  //   gap_k - gap_{k-1} <= -alpha_k C g_{k-1} + alpha_k^2 L M / 2 + 3 se.
  std::vector<double> c_max;
  for (const CheckpointEstimate& c : est.checkpoints) {
    if (c.k < 2) continue;
    const double room = -c.mean_gap_delta + c.alpha * c.alpha * lm_half + 3.0 * c.se_gap_delta;
    c_max.push_back(room / (c.alpha * c.mean_grad_sq_prev));
    if (argc > 2) fmt::print("  k {} C_max {:.4g}\n", c.k, c_max.back());
  }
  std::vector<double> sorted = c_max;
  std::sort(sorted.begin(), sorted.end());
  const double q05 = sorted[sorted.size() / 20];
  fmt::print("checkpoints {} ; C_max min {:.4g}, 5% quantile {:.4g}, median {:.4g}\n",
             sorted.size(), sorted.front(), q05, sorted[sorted.size() / 2]);
  fmt::print("triplet constant (half the 5% quantile): {:.4g}\n", q05 / 2.0);
  return 0;
}
