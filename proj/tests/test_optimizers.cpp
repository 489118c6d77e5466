#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sgdlab/optimizers.hpp"

using namespace sgdlab;

namespace {

const double kOne[] = {1.0};
const double kZero[] = {0.0};

Problem half_square() { return quadratic(kOne, kZero); }

IterState state(double x, double v = 0.0, double x_prev = NAN, std::uint64_t k = 0) {
  IterState s = IterState::initial(Vec{x});
  s.v = {v};
  s.x_prev = {std::isnan(x_prev) ? x : x_prev};
  s.k = k;
  return s;
}

OracleSample sample(double f) { return OracleSample{{f}, {0.0}}; }

}  // namespace

TEST_CASE("vsgd step") {
  CHECK(vsgd_step(state(1.0), sample(1.0), 0.1).x[0] == doctest::Approx(0.9).epsilon(1e-15));
  const IterState fixed = vsgd_step(state(2.0), sample(0.0), 0.1);
  CHECK(fixed.x[0] == 2.0);
  CHECK(fixed.k == 1);
  // xi = 0.5, so F = 1 - 0.5.
  CHECK(vsgd_step(state(1.0), sample(0.5), 0.1).x[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK_THROWS_AS(vsgd_step(state(1.0), sample(1.0), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(vsgd_step(state(1.0), sample(NAN), 0.1), DivergenceError);
}

TEST_CASE("damped heavy ball step") {
  const IterState a = msgd_damped_step(state(1.0), sample(1.0), 0.1, 1.0);
  CHECK(a.v[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(a.x[0] == doctest::Approx(0.99).epsilon(1e-15));

  const IterState b = msgd_damped_step(state(3.0), sample(0.0), 0.1, 1.0);
  CHECK(b.x[0] == 3.0);
  CHECK(b.v[0] == 0.0);
  CHECK(b.k == 1);

  const IterState c = msgd_damped_step(state(0.0, 1.0), sample(0.0), 0.5, 1.0);
  CHECK(c.v[0] == 0.5);
  CHECK(c.x[0] == 0.25);

  CHECK_NOTHROW(msgd_damped_step(state(1.0), sample(1.0), 1.0, 1.0));
  CHECK_THROWS_AS(msgd_damped_step(state(1.0), sample(1.0), 0.5, 2.5), std::invalid_argument);
}

TEST_CASE("classical momentum step") {
  for (double x : {1.0, -0.37, 12.5}) {
    for (double f : {0.3, -2.0}) {
      const IterState m = msgd_classical_step(state(x), sample(f), 0.07, 0.0);
      const IterState v = vsgd_step(state(x), sample(f), 0.07);
      CHECK(m.x == v.x);
    }
  }
  const IterState a = msgd_classical_step(state(1.0), sample(1.0), 0.1, 0.9);
  CHECK(a.v[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(a.x[0] == doctest::Approx(0.9).epsilon(1e-15));
  const IterState b = msgd_classical_step(state(0.0, 1.0), sample(0.0), 0.1, 0.5);
  CHECK(b.v[0] == 0.5);
  CHECK(b.x[0] == 0.5);
}

TEST_CASE("nasgd step") {
  const Problem p = half_square();
  GradientOracle o = gaussian_oracle(p, 0.0, 1);

  // First step: beta = 0, identical to the damped step at x0.
  const IterState first = nasgd_step(state(1.0, 0.0, 1.0, 0), o, 0.1, 0.1, 1.0);
  const IterState damped = msgd_damped_step(state(1.0), sample(1.0), 0.1, 1.0);
  CHECK(first.x == damped.x);
  CHECK(first.v == damped.v);

  // Zero displacement: lookahead is x itself.
  const IterState still = nasgd_step(state(2.0, 0.0, 2.0, 3), o, 0.1, 0.2, 1.0);
  CHECK(still.x[0] == msgd_damped_step(state(2.0), sample(2.0), 0.1, 1.0).x[0]);

  // beta = (1 - 0.1) 0.1 / 0.1 = 0.9, y = 1.18, v' = -0.118, x' = 0.9882.
  const IterState s = nasgd_step(state(1.0, 0.0, 0.8, 5), o, 0.1, 0.1, 1.0);
  CHECK(s.v[0] == doctest::Approx(-0.118).epsilon(1e-14));
  CHECK(s.x[0] == doctest::Approx(0.9882).epsilon(1e-14));
  CHECK(s.x_prev[0] == 1.0);
}

TEST_CASE("classical Nesterov step") {
  const Problem p = half_square();
  GradientOracle o = gaussian_oracle(p, 0.0, 1);
  for (double x : {1.0, -4.0}) {
    const IterState n = nesterov_classical_step(state(x, 0.0, x - 0.3, 4), o, 0.1, 0.0);
    CHECK(n.x == vsgd_step(state(x), sample(x), 0.1).x);
  }
  CHECK(nesterov_classical_step(state(1.0, 0.0, 1.0, 2), o, 0.1, 0.5).x[0] ==
        doctest::Approx(0.9).epsilon(1e-15));
  CHECK(nesterov_classical_step(state(1.0, 0.0, 0.0, 2), o, 0.1, 0.5).x[0] ==
        doctest::Approx(1.35).epsilon(1e-15));
}

TEST_CASE("averaged update") {
  AveragedState a;
  a = averaged_update(a, Vec{0.0}, 1.0);
  a = averaged_update(a, Vec{1.0}, 1.0);
  CHECK(a.xbar[0] == 0.5);

  AveragedState one = averaged_update(AveragedState{}, Vec{7.25}, 0.3);
  CHECK(one.xbar[0] == 7.25);
  CHECK(one.weight_sum == 0.3);

  AveragedState w;
  w = averaged_update(w, Vec{0.0}, 1.0);
  w = averaged_update(w, Vec{4.0}, 3.0);
  CHECK(w.xbar[0] == 3.0);
  CHECK(w.weight_sum == 4.0);
}

TEST_CASE("run: deterministic contraction and divergence") {
  const Problem p = half_square();
  GradientOracle o = gaussian_oracle(p, 0.0, 1);
  RunOptions opt;
  opt.method = Method::vsgd;
  opt.schedule = make_power_schedule(0.5, 0.0);
  opt.iters = 10;
  opt.x0 = {1.0};
  const Trajectory t = run(opt, p, o, 7);
  CHECK(t.states.back().k == 10);
  CHECK(t.states.back().x[0] == 0.0009765625);

  opt.schedule = make_power_schedule(2.5, 0.0);
  opt.iters = 1000;
  try {
    run(opt, p, o, 7);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() < 100);
    CHECK(e.iteration() > 1);
  }
}

TEST_CASE("run: identical seeds give identical trajectories") {
  const double spec[] = {1.0, 4.0};
  const double xs[] = {0.0, 0.0};
  const Problem p = quadratic(spec, xs);
  for (Method m : {Method::vsgd, Method::msgd, Method::msgd_classical, Method::nasgd,
                   Method::nesterov_classical}) {
    CAPTURE(to_string(m));
    RunOptions opt;
    opt.method = m;
    opt.schedule = make_power_schedule(0.2, 0.6, 1.0, 0.0);
    opt.iters = 500;
    opt.x0 = {1.0, -2.0};
    opt.beta = 0.5;
    opt.averaged = true;
    GradientOracle a = gaussian_oracle(p, 1.0, 1);
    GradientOracle b = gaussian_oracle(p, 1.0, 2);
    const Trajectory ta = run(opt, p, a, 99);
    const Trajectory tb = run(opt, p, b, 99);
    CHECK(trajectory_csv(ta) == trajectory_csv(tb));
    REQUIRE(ta.states.size() == tb.states.size());
    for (std::size_t i = 0; i < ta.states.size(); ++i) {
      CHECK(ta.states[i].x == tb.states[i].x);
      CHECK(ta.states[i].v == tb.states[i].v);
    }
    const Trajectory tc = run(opt, p, a, 100);
    CHECK(trajectory_csv(ta) != trajectory_csv(tc));
  }
}

TEST_CASE("zero noise vSGD is plain gradient descent, bitwise") {
  const std::vector<Problem> problems{pseudo_huber(2), smooth_rastrigin(2, 1.0)};
  for (const Problem& p : problems) {
    CAPTURE(p.name());
    RunOptions opt;
    opt.schedule = make_power_schedule(0.002, 0.3);
    opt.iters = 300;
    opt.x0 = {1.3, -0.4};
    opt.checkpoints.geometric = false;
    opt.checkpoints.stride = 1;
    GradientOracle o = gaussian_oracle(p, 0.0, 3);
    const Trajectory t = run(opt, p, o, 11);
    Vec x = opt.x0;
    for (std::uint64_t k = 1; k <= opt.iters; ++k) {
      const Vec g = p.gradient(x);
      const double a = opt.schedule.alpha(k);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] - a * g[i];
      REQUIRE(t.states[k - 1].k == k);
      CHECK(t.states[k - 1].x == x);
    }
  }
}

TEST_CASE("classical momentum matches the damped form under the change of variables") {
  // alpha_cl = a^2, beta = 1 - mu a, v_cl = a v_damped.
  const double a = 0.05, mu = 1.0;
  CounterRng r{5};
  IterState d = state(2.0);
  IterState c = state(2.0);
  for (int k = 0; k < 2000; ++k) {
    const double x = d.x[0];
    const double f = 3.0 * x + 0.5 * r.normal();  // f = 1.5 x^2 plus noise
    d = msgd_damped_step(d, sample(f), a, mu);
    c = msgd_classical_step(c, sample(3.0 * c.x[0] + (f - 3.0 * x)), a * a, 1.0 - mu * a);
    REQUIRE(std::abs(c.x[0] - d.x[0]) <= 1e-12);
    REQUIRE(std::abs(c.v[0] - a * d.v[0]) <= 1e-12);
  }
}

TEST_CASE("deterministic heavy-ball energy is non-increasing below the step threshold") {
  // Per eigendirection, dH <= v^2 (L a^2 - mu a / 2) + u^2 (mu a^3 / 2 + L a^4 - a^2 / 2),
  // u = mu v + lambda x, which is <= 0 when a <= min(mu / (2L), 1 / (2 mu)).
  const double spec[] = {1.0, 4.0};
  const double xs[] = {0.0, 0.0};
  const Problem p = quadratic(spec, xs);
  const double mu = 1.0;
  const double threshold = std::min(mu / (2.0 * p.smoothness_l()), 1.0 / (2.0 * mu));
  CHECK(threshold == 0.125);
  for (double a : {0.12, 0.05, threshold}) {
    RunOptions opt;
    opt.method = Method::msgd;
    opt.schedule = make_power_schedule(a, 0.0, mu, 0.0);
    opt.iters = 3000;
    opt.x0 = {3.0, -2.0};
    opt.checkpoints.geometric = false;
    opt.checkpoints.stride = 1;
    GradientOracle o = gaussian_oracle(p, 0.0, 1);
    const Trajectory t = run(opt, p, o, 1);
    double prev = p.value(opt.x0);
    int increases = 0;
    for (const Checkpoint& c : t.states) {
      const double h = c.f + 0.5 * norm_sq(c.v);
      if (h > prev * (1.0 + 1e-14) + 1e-300) ++increases;
      prev = h;
    }
    CHECK(increases == 0);
  }
}

TEST_CASE("averaged iterate satisfies Jensen at every checkpoint") {
  const Problem p = pseudo_huber(2);
  RunOptions opt;
  opt.schedule = make_power_schedule(1.0, 0.6);
  opt.iters = 2000;
  opt.x0 = {4.0, -3.0};
  opt.averaged = true;
  opt.checkpoints.geometric = false;
  opt.checkpoints.stride = 1;
  GradientOracle o = gaussian_oracle(p, 0.5, 1);
  const Trajectory t = run(opt, p, o, 3);
  double weighted = 0.0, wsum = 0.0;
  int violations = 0;
  for (const Checkpoint& c : t.states) {
    weighted += c.alpha * c.f_prev;  // alpha_k f(x_{k-1})
    wsum += c.alpha;
    REQUIRE(c.f_avg);
    if (*c.f_avg > weighted / wsum + 1e-10) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("checkpoint grid") {
  const auto g = checkpoint_grid(100000, {});
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(std::adjacent_find(g.begin(), g.end()) == g.end());
  CHECK(g.back() == 100000);
  for (std::uint64_t k : {1ull, 2ull, 1024ull, 1000ull, 5000ull, 10000ull, 50000ull}) {
    CHECK(std::binary_search(g.begin(), g.end(), k));
  }
  // Tail window over the last 5%.
  CHECK(std::count_if(g.begin(), g.end(), [](auto k) { return k >= 95000; }) >= 8);

  const auto s = checkpoint_grid(1000, CheckpointPlan{250, false});
  CHECK(s == std::vector<std::uint64_t>{250, 500, 750, 1000});
  CHECK(checkpoint_grid(7, CheckpointPlan{0, false}) == std::vector<std::uint64_t>{7});
}

TEST_CASE("run option validation") {
  const double spec[] = {1.0, 4.0};
  const double xs[] = {0.0, 0.0};
  const Problem p = quadratic(spec, xs);
  RunOptions opt;
  opt.x0 = {1.0, 1.0};
  opt.method = Method::msgd;
  opt.schedule = make_power_schedule(1.0, 0.7);
  try {
    validate(opt, p);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("m > 0") != std::string::npos);
  }
  opt.method = Method::nasgd;
  CHECK_THROWS_AS(validate(opt, p), std::invalid_argument);
  opt.schedule = make_power_schedule(2.0, 0.7, 1.0, 0.0);  // mu_1 alpha_1 = 2
  CHECK_THROWS_AS(validate(opt, p), std::invalid_argument);
  opt.schedule = make_power_schedule(1.0, 0.7, 1.0, 0.0);
  CHECK_NOTHROW(validate(opt, p));
  opt.x0 = {1.0};
  CHECK_THROWS_AS(validate(opt, p), std::invalid_argument);
  opt.x0 = {1.0, 1.0};
  opt.method = Method::msgd_classical;
  opt.beta = 1.0;
  CHECK_THROWS_AS(validate(opt, p), std::invalid_argument);
}

TEST_CASE("method names and the Nesterov coefficient") {
  for (Method m : {Method::vsgd, Method::msgd, Method::msgd_classical, Method::nasgd,
                   Method::nesterov_classical}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("adam"), std::invalid_argument);
  CHECK(nesterov_beta_hat(make_power_schedule(1.0, 0.7, 1.0, 0.0)) == 1.0);
  CHECK(nesterov_beta_hat(make_power_schedule(0.1, 0.0, 1.0, 0.0)) == doctest::Approx(0.9));
}

TEST_CASE("trajectory export") {
  const double spec[] = {1.0, 4.0};
  const double xs[] = {0.0, 0.0};
  const Problem p = quadratic(spec, xs);
  RunOptions opt;
  opt.method = Method::msgd;
  opt.schedule = make_power_schedule(0.5, 0.7, 1.0, 0.0);
  opt.iters = 20;
  opt.x0 = {1.0, 1.0};
  GradientOracle o = gaussian_oracle(p, 0.1, 1);
  const Trajectory plain = run(opt, p, o, 1);
  CHECK(trajectory_csv(plain).rfind("k,alpha,mu,f,grad_sq\n", 0) == 0);
  opt.lyapunov.enabled = true;
  opt.lyapunov.coefficient = 0.1;
  const Trajectory ly = run(opt, p, o, 1);
  CHECK(trajectory_csv(ly).rfind("k,alpha,mu,f,grad_sq,H,Zt,Ht\n", 0) == 0);
  CHECK(trajectory_json(ly).find("\"Ht\"") != std::string::npos);
  // Lyapunov mode does not change the path.
  CHECK(ly.states.back().x == plain.states.back().x);
}
