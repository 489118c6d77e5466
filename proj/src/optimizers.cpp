#include "sgdlab/optimizers.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace sgdlab {

namespace {

constexpr double kDivergenceNormSq = 1e24;  // |x| > 1e12

void check_finite(const IterState& s) {
  if (!all_finite(s.x) || !all_finite(s.v) || norm_sq(s.x) > kDivergenceNormSq) {
    throw DivergenceError(s.k);
  }
}

void require_positive(double alpha, const char* what) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": step size must be > 0");
  }
}

void require_damping_guard(double mu, double alpha, const char* what) {
  if (!(mu >= 0.0) || mu * alpha > 1.0) {
    throw std::invalid_argument(std::string(what) +
                                ": damping must satisfy 0 <= mu*alpha <= 1");
  }
}

// In-place kernels. `stoch` is F evaluated at the point the method needs.

void vsgd_inplace(IterState& s, std::span<const double> stoch, double alpha) {
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    s.x_prev[i] = s.x[i];
    s.x[i] -= alpha * stoch[i];
  }
  ++s.k;
  check_finite(s);
}

void damped_inplace(IterState& s, std::span<const double> stoch, double alpha,
                    double mu) {
  const double keep = 1.0 - mu * alpha;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    s.v[i] = keep * s.v[i] - alpha * stoch[i];
    s.x_prev[i] = s.x[i];
    s.x[i] += alpha * s.v[i];
  }
  ++s.k;
  check_finite(s);
}

void classical_inplace(IterState& s, std::span<const double> stoch,
                       double alpha, double beta) {
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    s.v[i] = beta * s.v[i] - alpha * stoch[i];
    s.x_prev[i] = s.x[i];
    s.x[i] += s.v[i];
  }
  ++s.k;
  check_finite(s);
}

double nasgd_beta(std::uint64_t k_before, double alpha_k, double alpha_prev,
                  double mu) {
  if (k_before == 0) return 0.0;
  return (1.0 - mu * alpha_k) * alpha_k / alpha_prev;
}

void lookahead(const IterState& s, double beta, Vec& y) {
  y.resize(s.x.size());
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    y[i] = s.x[i] + beta * (s.x[i] - s.x_prev[i]);
  }
}

void nesterov_inplace(IterState& s, std::span<const double> y,
                      std::span<const double> stoch, double alpha) {
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double next = y[i] - alpha * stoch[i];
    s.v[i] = next - s.x[i];
    s.x_prev[i] = s.x[i];
    s.x[i] = next;
  }
  ++s.k;
  check_finite(s);
}

}  // namespace

IterState IterState::initial(std::span<const double> x0) {
  IterState s;
  s.x.assign(x0.begin(), x0.end());
  s.v.assign(x0.size(), 0.0);
  s.x_prev = s.x;
  return s;
}

DivergenceError::DivergenceError(std::uint64_t iteration)
    : std::runtime_error("iterate diverged at iteration " +
                         std::to_string(iteration)),
      iteration_{iteration} {}

IterState vsgd_step(const IterState& s, const OracleSample& g, double alpha) {
  require_positive(alpha, "vsgd_step");
  IterState out = s;
  vsgd_inplace(out, g.stoch_grad, alpha);
  return out;
}

IterState msgd_damped_step(const IterState& s, const OracleSample& g,
                           double alpha, double mu) {
  require_positive(alpha, "msgd_damped_step");
  require_damping_guard(mu, alpha, "msgd_damped_step");
  IterState out = s;
  damped_inplace(out, g.stoch_grad, alpha, mu);
  return out;
}

IterState msgd_classical_step(const IterState& s, const OracleSample& g,
                              double alpha, double beta) {
  require_positive(alpha, "msgd_classical_step");
  IterState out = s;
  classical_inplace(out, g.stoch_grad, alpha, beta);
  return out;
}

IterState nasgd_step(const IterState& s, GradientOracle& oracle,
                     double alpha_k, double alpha_prev, double mu) {
  require_positive(alpha_k, "nasgd_step");
  require_damping_guard(mu, alpha_k, "nasgd_step");
  if (s.k > 0) require_positive(alpha_prev, "nasgd_step");
  IterState out = s;
  Vec y;
  lookahead(s, nasgd_beta(s.k, alpha_k, alpha_prev, mu), y);
  const OracleSample g = oracle.sample(y);
  damped_inplace(out, g.stoch_grad, alpha_k, mu);
  return out;
}

IterState nesterov_classical_step(const IterState& s, GradientOracle& oracle,
                                  double alpha, double beta) {
  require_positive(alpha, "nesterov_classical_step");
  IterState out = s;
  Vec y;
  lookahead(s, beta, y);
  const OracleSample g = oracle.sample(y);
  nesterov_inplace(out, y, g.stoch_grad, alpha);
  return out;
}

void averaged_update_inplace(AveragedState& a,
                             std::span<const double> x_prev_iterate,
                             double alpha) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("averaged_update: alpha must be > 0");
  }
  if (a.xbar.empty()) a.xbar.assign(x_prev_iterate.size(), 0.0);
  const double w = alpha / (a.weight_sum + alpha);
  for (std::size_t i = 0; i < a.xbar.size(); ++i) {
    a.xbar[i] += w * (x_prev_iterate[i] - a.xbar[i]);
  }
  a.weight_sum += alpha;
}

AveragedState averaged_update(const AveragedState& a,
                              std::span<const double> x_prev_iterate,
                              double alpha) {
  AveragedState out = a;
  averaged_update_inplace(out, x_prev_iterate, alpha);
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::vsgd: return "vsgd";
    case Method::msgd: return "msgd";
    case Method::msgd_classical: return "msgd_classical";
    case Method::nasgd: return "nasgd";
    case Method::nesterov_classical: return "nesterov_classical";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::vsgd, Method::msgd, Method::msgd_classical,
                   Method::nasgd, Method::nesterov_classical}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + name + "'");
}

bool needs_damping(Method m) { return m == Method::msgd || m == Method::nasgd; }

double nesterov_beta_hat(const PowerSchedule& s) {
  // alpha_k / alpha_{k-1} -> 1 for every power law. mu_k alpha_k -> 0 unless
  // both sequences are constant.
  if (s.exp_alpha == 0.0 && s.exp_mu == 0.0) {
    return 1.0 - s.coeff_mu * s.coeff_alpha;
  }
  return 1.0;
}

std::vector<std::uint64_t> checkpoint_grid(std::uint64_t horizon,
                                           const CheckpointPlan& plan) {
  std::set<std::uint64_t> ks;
  if (horizon == 0) return {};
  if (plan.geometric) {
    for (std::uint64_t p = 1; p <= horizon; p *= 2) ks.insert(p);
    for (std::uint64_t dec = 1; dec <= horizon; dec *= 10) {
      for (std::uint64_t m : {1, 2, 5}) {
        if (m * dec <= horizon) ks.insert(m * dec);
      }
      if (dec > horizon / 10) break;
    }
    const std::uint64_t window = horizon / 20;
    if (window >= 8) {
      for (std::uint64_t j = 0; j < 8; ++j) {
        ks.insert(horizon - window + (j * window) / 8);
      }
    }
  }
  if (plan.stride > 0) {
    for (std::uint64_t k = plan.stride; k <= horizon; k += plan.stride) ks.insert(k);
  }
  ks.insert(horizon);
  return {ks.begin(), ks.end()};
}

void validate(const RunOptions& opt, const Problem& p) {
  if (opt.iters < 1) throw std::invalid_argument("run: iters must be >= 1");
  if (opt.x0.size() != p.dim()) {
    throw std::invalid_argument("run: x0 has dimension " +
                                std::to_string(opt.x0.size()) +
                                ", problem has " + std::to_string(p.dim()));
  }
  const PowerSchedule& s = opt.schedule;
  if (needs_damping(opt.method)) {
    if (!s.has_damping()) {
      throw std::invalid_argument("method " + to_string(opt.method) +
                                  " requires a damping schedule with mu "
                                  "coefficient m > 0");
    }
    // mu_k alpha_k = c m k^-(a+b) is largest at k = 1.
    if (s.coeff_alpha * s.coeff_mu > 1.0) {
      throw std::invalid_argument(
          "method " + to_string(opt.method) +
          " requires mu_k * alpha_k <= 1, violated at k=1 (c*m = " +
          fmt::format("{}", s.coeff_alpha * s.coeff_mu) + ")");
    }
  }
  if (opt.method == Method::msgd_classical ||
      opt.method == Method::nesterov_classical) {
    if (!(opt.beta >= 0.0 && opt.beta < 1.0)) {
      throw std::invalid_argument("classical momentum requires beta in [0, 1)");
    }
  }
  if (opt.lyapunov.enabled) {
    if (!p.minimum()) {
      throw std::invalid_argument("lyapunov mode requires a problem with known "
                                  "minimum value");
    }
    if (opt.lyapunov.mode == DampingMode::vanishing && !s.has_damping()) {
      throw std::invalid_argument(
          "vanishing-damping lyapunov mode requires mu coefficient m > 0");
    }
  }
}

Trajectory run(const RunOptions& opt, const Problem& p, GradientOracle& oracle,
               std::uint64_t seed) {
  validate(opt, p);
  oracle.reseed(seed);
  const PowerSchedule& s = opt.schedule;
  const std::size_t d = p.dim();
  const std::vector<std::uint64_t> grid = checkpoint_grid(opt.iters, opt.checkpoints);
  const double f_star = p.minimum() ? p.minimum()->f_star : 0.0;
  const bool lyap = opt.lyapunov.enabled;

  Trajectory traj;
  traj.method = opt.method;
  traj.has_lyapunov = lyap;
  traj.has_averaged = opt.averaged;
  traj.states.reserve(grid.size());

  IterState st = IterState::initial(opt.x0);
  AveragedState avg;
  Vec grad(d), stoch(d), y(d), gx(d);

  const auto coupling = [&](std::uint64_t k) {
    if (opt.lyapunov.mode == DampingMode::constant) return opt.lyapunov.coefficient;
    return opt.lyapunov.coefficient * s.mu(std::max<std::uint64_t>(k, 1));
  };

  std::size_t next = 0;
  for (std::uint64_t k = 1; k <= opt.iters; ++k) {
    const double alpha = s.alpha(k);
    const double mu = s.mu(k);
    const bool is_cp = next < grid.size() && grid[next] == k;

    Checkpoint cp;
    if (is_cp) {
      p.gradient(st.x, gx);
      cp.f_prev = p.value(st.x);
      cp.grad_sq_prev = norm_sq(gx);
      if (lyap) {
        cp.lyap_prev = scalars_from(cp.f_prev - f_star, gx, st.v, coupling(k - 1));
      }
    }
    if (opt.averaged) averaged_update_inplace(avg, st.x, alpha);

    switch (opt.method) {
      case Method::vsgd:
        oracle.sample_into(st.x, grad, stoch);
        vsgd_inplace(st, stoch, alpha);
        break;
      case Method::msgd:
        oracle.sample_into(st.x, grad, stoch);
        damped_inplace(st, stoch, alpha, mu);
        break;
      case Method::msgd_classical:
        oracle.sample_into(st.x, grad, stoch);
        classical_inplace(st, stoch, alpha, opt.beta);
        break;
      case Method::nasgd:
        lookahead(st, nasgd_beta(st.k, alpha, s.alpha(k > 1 ? k - 1 : 1), mu), y);
        oracle.sample_into(y, grad, stoch);
        damped_inplace(st, stoch, alpha, mu);
        break;
      case Method::nesterov_classical:
        lookahead(st, opt.beta, y);
        oracle.sample_into(y, grad, stoch);
        nesterov_inplace(st, y, stoch, alpha);
        break;
    }

    if (is_cp) {
      cp.k = k;
      cp.x = st.x;
      cp.v = st.v;
      cp.alpha = alpha;
      cp.mu = mu;
      p.gradient(st.x, gx);
      cp.f = p.value(st.x);
      cp.grad_sq = norm_sq(gx);
      if (lyap) cp.lyap = scalars_from(cp.f - f_star, gx, st.v, coupling(k));
      if (opt.averaged) cp.f_avg = p.value(avg.xbar);
      traj.states.push_back(std::move(cp));
      ++next;
    }
  }
  return traj;
}

std::string trajectory_csv(const Trajectory& t) {
  std::string out = "k,alpha,mu,f,grad_sq";
  if (t.has_lyapunov) out += ",H,Zt,Ht";
  out += '\n';
  for (const Checkpoint& c : t.states) {
    out += fmt::format("{},{},{},{},{}", c.k, c.alpha, c.mu, c.f, c.grad_sq);
    if (t.has_lyapunov && c.lyap) {
      out += fmt::format(",{},{},{}", c.lyap->h, c.lyap->z_tilde, c.lyap->h_tilde);
    }
    out += '\n';
  }
  return out;
}

std::string trajectory_json(const Trajectory& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const Checkpoint& c : t.states) {
    nlohmann::ordered_json r;
    r["k"] = c.k;
    r["alpha"] = c.alpha;
    r["mu"] = c.mu;
    r["f"] = c.f;
    r["grad_sq"] = c.grad_sq;
    if (t.has_lyapunov && c.lyap) {
      r["H"] = c.lyap->h;
      r["Zt"] = c.lyap->z_tilde;
      r["Ht"] = c.lyap->h_tilde;
    }
    rows.push_back(std::move(r));
  }
  nlohmann::ordered_json j;
  j["method"] = to_string(t.method);
  j["states"] = std::move(rows);
  return j.dump(2);
}

}  // namespace sgdlab
