#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include <json.hpp>

#include "sgdlab/harness.hpp"

using namespace sgdlab;

namespace {

ExperimentConfig base_config() {
  ExperimentConfig cfg;
  cfg.method = Method::vsgd;
  cfg.problem.name = "quadratic";
  cfg.problem.spectrum = {1.0, 4.0};
  cfg.problem.dim = 2;
  cfg.oracle.sigma = 0.5;
  cfg.schedule = make_power_schedule(0.2, 0.7, 1.0, 0.0);
  cfg.horizon = 2000;
  cfg.replicas = 16;
  cfg.master_seed = 5;
  cfg.x0 = {3.0, -2.0};
  return cfg;
}

MonteCarloEstimate series(std::initializer_list<double> values) {
  MonteCarloEstimate est;
  std::uint64_t k = 1;
  for (double v : values) {
    CheckpointEstimate c;
    c.k = k;
    c.mean_grad_sq = v;
    est.checkpoints.push_back(c);
    k *= 10;
  }
  return est;
}

}  // namespace

TEST_CASE("zero noise: identical replicas, zero standard errors") {
  for (Method m : {Method::vsgd, Method::msgd, Method::nasgd, Method::msgd_classical,
                   Method::nesterov_classical}) {
    CAPTURE(to_string(m));
    ExperimentConfig cfg = base_config();
    cfg.method = m;
    cfg.beta = 0.3;
    cfg.oracle.sigma = 0.0;
    cfg.averaged = true;
    const MonteCarloEstimate est = run_experiment(cfg);
    CHECK(est.replicas_ok == cfg.replicas);
    for (const CheckpointEstimate& c : est.checkpoints) {
      CHECK(c.se_grad_sq == 0.0);
      CHECK(c.se_gap == 0.0);
      CHECK(*c.se_avg_gap == 0.0);
    }
    // The mean gap equals the single deterministic trajectory's gap exactly.
    const Problem p = make_problem(cfg.problem);
    GradientOracle o = make_oracle(cfg, p);
    const Trajectory t = run(single_run_options(cfg, p), p, o, 123);
    REQUIRE(t.states.size() == est.checkpoints.size());
    for (std::size_t i = 0; i < t.states.size(); ++i) {
      CHECK(est.checkpoints[i].mean_gap == t.states[i].f - 0.0);
      CHECK(est.checkpoints[i].mean_grad_sq == t.states[i].grad_sq);
    }
  }
}

TEST_CASE("identical configs give identical bytes") {
  ExperimentConfig cfg = base_config();
  cfg.replicas = 2;
  CHECK(estimates_csv(run_experiment(cfg)) == estimates_csv(run_experiment(cfg)));
  CHECK(summary_json(run_experiment(cfg)) == summary_json(run_experiment(cfg)));
  cfg.master_seed = 6;
  const std::string other = estimates_csv(run_experiment(cfg));
  cfg.master_seed = 5;
  CHECK(other != estimates_csv(run_experiment(cfg)));
}

TEST_CASE("results do not depend on the worker count") {
  ExperimentConfig cfg = base_config();
  cfg.replicas = 37;
  cfg.lyapunov = true;
  cfg.method = Method::msgd;
  setenv("SGDLAB_THREADS", "1", 1);
  const std::string one = estimates_csv(run_experiment(cfg)) + lyapunov_csv(run_experiment(cfg));
  setenv("SGDLAB_THREADS", "4", 1);
  const std::string four = estimates_csv(run_experiment(cfg)) + lyapunov_csv(run_experiment(cfg));
  unsetenv("SGDLAB_THREADS");
  CHECK(one == four);
}

TEST_CASE("vSGD with a 1/k schedule reduces the mean squared gradient") {
  ExperimentConfig cfg;
  cfg.problem.name = "quadratic";
  cfg.problem.spectrum = {1.0};
  cfg.problem.dim = 1;
  cfg.oracle.sigma = 1.0;
  cfg.schedule = make_power_schedule(0.5, 1.0);
  cfg.horizon = 10000;
  cfg.replicas = 200;
  cfg.master_seed = 1;
  cfg.x0 = {5.0};
  const MonteCarloEstimate est = run_experiment(cfg);
  CHECK(est.at(10000)->mean_grad_sq < est.at(100)->mean_grad_sq);
}

TEST_CASE("liminf probe") {
  CHECK(liminf_probe(series({1, 1, 1})) == std::vector<double>{1, 1, 1});
  CHECK(liminf_probe(series({4, 1, 2, 0.5})) == std::vector<double>{4, 1, 1, 0.5});
  CHECK_THROWS_AS(liminf_probe(series({1, 2})), std::invalid_argument);

  const MonteCarloEstimate est = series({4, 1, 2, 0.5});
  const std::uint64_t dec[] = {1, 10, 1000};
  CHECK(running_min_decreasing(est, dec));
  const std::uint64_t flat[] = {10, 100};
  CHECK_FALSE(running_min_decreasing(est, flat));
  const std::uint64_t off_grid[] = {1, 7};
  CHECK_THROWS_AS(running_min_decreasing(est, off_grid), std::invalid_argument);
}

TEST_CASE("averaged bound probe") {
  // Deterministic GD, constant step: the gap decays geometrically.
  ExperimentConfig gd = base_config();
  gd.oracle.sigma = 0.0;
  gd.schedule = make_power_schedule(0.1, 0.0);
  gd.averaged = true;
  gd.replicas = 2;
  const MonteCarloEstimate e1 = run_experiment(gd);
  const AveragedBoundProbe p1 = averaged_bound_probe(e1, gd.schedule, gd.horizon / 20);
  CHECK(p1.bounded);
  CHECK(p1.ratio.back() < p1.ratio.front());

  // Starting at the minimizer without noise: f(xbar) = f* throughout.
  ExperimentConfig still = gd;
  still.x0 = {0.0, 0.0};
  const MonteCarloEstimate e2 = run_experiment(still);
  const AveragedBoundProbe p2 = averaged_bound_probe(e2, still.schedule, still.horizon / 20);
  for (double r : p2.ratio) CHECK(r == 0.0);
  CHECK(p2.bounded);

  ExperimentConfig ph;
  ph.problem.name = "pseudo_huber";
  ph.problem.dim = 2;
  ph.oracle.sigma = 0.5;
  ph.schedule = make_power_schedule(1.0, 0.6);
  ph.horizon = 10000;
  ph.replicas = 200;
  ph.averaged = true;
  ph.x0 = {5.0, 5.0};
  const MonteCarloEstimate e3 = run_experiment(ph);
  CHECK(averaged_bound_probe(e3, ph.schedule, ph.horizon / 20).bounded);

  // A ratio that keeps growing after burn-in is not bounded.
  MonteCarloEstimate growing;
  growing.config = gd;
  for (std::uint64_t k : checkpoint_grid(2000, {})) {
    CheckpointEstimate c;
    c.k = k;
    c.mean_avg_gap = 1e-3 * double(k);
    growing.checkpoints.push_back(c);
  }
  const AveragedBoundProbe p4 = averaged_bound_probe(growing, gd.schedule, 100);
  CHECK_FALSE(p4.bounded);
  CHECK_FALSE(p4.within_twice_median);

  ExperimentConfig off = gd;
  off.averaged = false;
  CHECK_THROWS_AS(averaged_bound_probe(run_experiment(off), off.schedule, 10),
                  std::invalid_argument);
}

TEST_CASE("standard errors shrink like one over root replicas") {
  ExperimentConfig cfg = base_config();
  cfg.horizon = 500;
  cfg.schedule = make_power_schedule(0.1, 0.0);
  cfg.replicas = 2000;
  cfg.master_seed = 1000;
  const MonteCarloEstimate small = run_experiment(cfg);
  cfg.replicas = 4000;
  cfg.master_seed = 2000;  // fresh seed block
  const MonteCarloEstimate large = run_experiment(cfg);
  const double r = large.checkpoints.back().se_gap / small.checkpoints.back().se_gap;
  CHECK(r >= 0.8 / std::sqrt(2.0));
  CHECK(r <= 1.25 / std::sqrt(2.0));
}

TEST_CASE("divergence beyond tolerance fails the experiment") {
  ExperimentConfig cfg = base_config();
  cfg.schedule = make_power_schedule(1.0, 0.0);  // 1 * 4 > 2: unstable
  try {
    run_experiment(cfg);
    FAIL("expected failure");
  } catch (const ExperimentFailure& e) {
    CHECK(e.diverged() == cfg.replicas);
    CHECK(e.total() == cfg.replicas);
  }
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = base_config();
  cfg.replicas = 1;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = base_config();
  cfg.horizon = 9;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = base_config();
  cfg.oracle.kind = "minibatch";
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = base_config();
  cfg.method = Method::msgd;
  cfg.schedule = make_power_schedule(0.2, 0.7);
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  CHECK_NOTHROW(validate(base_config()));
}

TEST_CASE("sweep") {
  const ExperimentConfig cfg = base_config();
  const auto one = sweep({cfg});
  REQUIRE(one.size() == 1);
  REQUIRE(one[0].ok);
  const MonteCarloEstimate direct = run_experiment(cfg);
  CHECK(one[0].final->mean_grad_sq == direct.checkpoints.back().mean_grad_sq);
  CHECK(one[0].final->se_gap == direct.checkpoints.back().se_gap);

  ExperimentConfig m = cfg;
  m.method = Method::msgd;
  const auto two = sweep({cfg, m});
  REQUIRE(two.size() == 2);
  CHECK(two[0].method != two[1].method);
  CHECK(two[0].grid == two[1].grid);
  CHECK(two[0].final->mean_grad_sq != two[1].final->mean_grad_sq);

  // Matched schedule a = 0.7 on the quadratic, horizon 2*10^4. The stationary
  // level of E|grad f|^2 is about alpha sigma^2 sum(lambda)/2 ~ 3e-4 at the
  // horizon; the shared threshold leaves a factor of 30 for transients.
  std::vector<ExperimentConfig> grid;
  for (Method meth : {Method::vsgd, Method::msgd, Method::nasgd}) {
    ExperimentConfig c = cfg;
    c.method = meth;
    c.schedule = make_power_schedule(0.5, 0.7, 1.0, 0.0);
    c.horizon = 20000;
    c.replicas = 64;
    grid.push_back(c);
  }
  for (const SweepRow& r : sweep(grid)) {
    CAPTURE(to_string(r.method));
    REQUIRE(r.ok);
    CHECK(r.final->mean_grad_sq < 1e-2);
  }

  ExperimentConfig bad = cfg;
  bad.method = Method::nasgd;
  bad.schedule = make_power_schedule(0.2, 0.7);
  const auto mixed = sweep({bad, cfg});
  CHECK_FALSE(mixed[0].ok);
  CHECK_FALSE(mixed[0].error.empty());
  CHECK(mixed[1].ok);
  CHECK(sweep_csv(mixed).find("error") != std::string::npos);
  CHECK_THROWS_AS(sweep({}), std::invalid_argument);
}

TEST_CASE("output formats") {
  ExperimentConfig cfg = base_config();
  const MonteCarloEstimate plain = run_experiment(cfg);
  CHECK(estimates_csv(plain).rfind("checkpoint,mean_grad_sq,se_grad_sq,mean_gap,se_gap\n", 0) == 0);
  cfg.averaged = true;
  cfg.method = Method::nasgd;
  cfg.lyapunov = true;
  const MonteCarloEstimate avg = run_experiment(cfg);
  CHECK(estimates_csv(avg).rfind(
            "checkpoint,mean_grad_sq,se_grad_sq,mean_gap,se_gap,mean_avg_gap,se_avg_gap\n",
            0) == 0);
  const auto j = nlohmann::json::parse(summary_json(avg));
  CHECK(j["schedule_class"].contains("thm22_condition"));
  CHECK(j["nesterov_hypothesis"]["beta_hat"] == 1.0);
  CHECK(j["nesterov_hypothesis"]["convex"] == true);
  CHECK(j["nesterov_hypothesis"]["holds"] == true);
  CHECK(j["lyapunov"]["mode"] == "constant");
  CHECK_FALSE(lyapunov_csv(avg).empty());
}

TEST_CASE("seeds and summation") {
  CHECK(replica_seed(9, 3) == derive_key(9, 3));
  CHECK(replica_seed(9, 3) != replica_seed(9, 4));
  const double v[] = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0};
  CHECK(pairwise_sum(v) == 66.0);
  CHECK(pairwise_sum(std::span<const double>{}) == 0.0);
  std::vector<double> tiny(1 << 16, 0.1);
  CHECK(std::abs(pairwise_sum(tiny) - 6553.6) < 1e-9);
}
