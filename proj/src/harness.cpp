#include "sgdlab/harness.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace sgdlab {

namespace {

// Per-replica values recorded at each checkpoint.
enum Field : std::size_t {
  kGradSq,
  kGap,
  kAvgGap,
  kGapPrev,
  kGradSqPrev,
  kGapDelta,
  kH,
  kZt,
  kHt,
  kHbar,
  kHtPrev,
  kHbarPrev,
  kHtDelta,
  kFieldCount
};

using Row = std::array<double, kFieldCount>;

struct ReplicaResult {
  bool diverged = false;
  std::uint64_t diverged_at = 0;
  std::vector<Row> rows;
};

struct Stat {
  double mean = 0.0;
  double se = 0.0;
};

// Identical samples (no randomness) give their common value and zero error
// exactly, without rounding from the summation.
Stat stat_of(std::span<const double> v) {
  if (v.empty()) return {};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) return {*lo, 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = pairwise_sum(v) / n;
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
  const double var = v.size() > 1 ? pairwise_sum(dev) / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

struct LyapunovSetup {
  DampingMode mode = DampingMode::constant;
  double coefficient = 0.0;
};

LyapunovSetup lyapunov_setup(const ExperimentConfig& cfg, double l_smooth) {
  LyapunovSetup out;
  const PowerSchedule& s = cfg.schedule;
  if (s.has_damping() && s.exp_mu > 0.0) {
    out.mode = DampingMode::vanishing;
    out.coefficient = cfg.lyapunov_coefficient.value_or(
        select_lambda(l_smooth, classify(s).l_mu));
  } else if (s.has_damping()) {
    out.coefficient = cfg.lyapunov_coefficient.value_or(
        select_zeta(l_smooth, s.coeff_mu, s.coeff_mu));
  } else {
    out.coefficient = cfg.lyapunov_coefficient.value_or(0.0);
  }
  return out;
}

RunOptions run_options(const ExperimentConfig& cfg, const LyapunovSetup& ly) {
  RunOptions o;
  o.method = cfg.method;
  o.schedule = cfg.schedule;
  o.iters = cfg.horizon;
  o.x0 = cfg.x0;
  o.beta = cfg.beta;
  o.checkpoints = cfg.checkpoints;
  o.averaged = cfg.averaged;
  o.lyapunov.enabled = cfg.lyapunov;
  o.lyapunov.mode = ly.mode;
  o.lyapunov.coefficient = ly.coefficient;
  return o;
}

}  // namespace

RunOptions single_run_options(const ExperimentConfig& cfg, const Problem& p) {
  return run_options(cfg, lyapunov_setup(cfg, p.smoothness_l()));
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

std::uint64_t replica_seed(std::uint64_t master_seed, std::uint64_t replica) {
  return derive_key(master_seed, replica);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.replicas < 2) {
    throw std::invalid_argument("run.replicas must be >= 2 (standard errors)");
  }
  if (cfg.horizon < 10) throw std::invalid_argument("run.horizon must be >= 10");
  if (!(cfg.x0_spread >= 0.0)) {
    throw std::invalid_argument("run.x0_spread must be >= 0");
  }
  const Problem p = make_problem(cfg.problem);
  if (!p.minimum()) {
    throw std::invalid_argument("problem must have a known minimum value");
  }
  validate(run_options(cfg, lyapunov_setup(cfg, p.smoothness_l())), p);
  if (cfg.oracle.kind == "minibatch" && cfg.problem.name != "least_squares") {
    throw std::invalid_argument(
        "oracle 'minibatch' requires problem 'least_squares'");
  }
}

GradientOracle make_oracle(const ExperimentConfig& cfg, const Problem& p) {
  const OracleSpec& o = cfg.oracle;
  if (o.kind == "gaussian") return gaussian_oracle(p, o.sigma, cfg.master_seed);
  if (o.kind == "relative") return relative_noise_oracle(p, o.eta, cfg.master_seed);
  if (o.kind == "minibatch") {
    const FiniteSumProblem fsp =
        least_squares_sum(cfg.problem.design, cfg.problem.targets);
    return minibatch_oracle(fsp, o.batch, cfg.master_seed,
                            o.with_replacement ? Sampling::with_replacement
                                               : Sampling::without_replacement);
  }
  throw std::invalid_argument("unknown oracle '" + o.kind + "'");
}

unsigned harness_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SGDLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) n = static_cast<unsigned>(v);
  }
  return n;
}

const CheckpointEstimate* MonteCarloEstimate::at(std::uint64_t k) const {
  const auto it = std::lower_bound(
      checkpoints.begin(), checkpoints.end(), k,
      [](const CheckpointEstimate& c, std::uint64_t key) { return c.k < key; });
  return it != checkpoints.end() && it->k == k ? &*it : nullptr;
}

MonteCarloEstimate run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const Problem p = make_problem(cfg.problem);
  const GradientOracle base = make_oracle(cfg, p);
  const LyapunovSetup ly = lyapunov_setup(cfg, p.smoothness_l());
  const RunOptions opts = run_options(cfg, ly);
  const double f_star = p.minimum()->f_star;
  const std::vector<std::uint64_t> grid =
      checkpoint_grid(cfg.horizon, cfg.checkpoints);

  std::vector<ReplicaResult> results(cfg.replicas);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  const auto worker = [&] {
    GradientOracle oracle = base;
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= cfg.replicas) return;
      const std::uint64_t key = replica_seed(cfg.master_seed, i);
      RunOptions ro = opts;
      if (cfg.x0_spread > 0.0) {
        CounterRng init{derive_key(key, 0x1417)};
        for (double& v : ro.x0) v += cfg.x0_spread * (2.0 * init.uniform() - 1.0);
      }
      ReplicaResult& r = results[i];
      try {
        const Trajectory t = run(ro, p, oracle, key);
        r.rows.reserve(t.states.size());
        for (const Checkpoint& c : t.states) {
          Row row{};
          row[kGradSq] = c.grad_sq;
          row[kGap] = c.f - f_star;
          row[kAvgGap] = c.f_avg ? *c.f_avg - f_star : 0.0;
          row[kGapPrev] = c.f_prev - f_star;
          row[kGradSqPrev] = c.grad_sq_prev;
          row[kGapDelta] = c.f - c.f_prev;
          if (c.lyap && c.lyap_prev) {
            row[kH] = c.lyap->h;
            row[kZt] = c.lyap->z_tilde;
            row[kHt] = c.lyap->h_tilde;
            row[kHbar] = c.lyap->h_bar;
            row[kHtPrev] = c.lyap_prev->h_tilde;
            row[kHbarPrev] = c.lyap_prev->h_bar;
            row[kHtDelta] = c.lyap->h_tilde - c.lyap_prev->h_tilde;
          }
          r.rows.push_back(row);
        }
      } catch (const DivergenceError& e) {
        r.diverged = true;
        r.diverged_at = e.iteration();
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const unsigned nthreads = static_cast<unsigned>(
      std::min<std::uint64_t>(harness_threads(), cfg.replicas));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  MonteCarloEstimate est;
  est.config = cfg;
  est.smoothness_l = p.smoothness_l();
  est.lyapunov_coefficient = ly.coefficient;
  est.lyapunov_mode = ly.mode;
  est.beta_hat = nesterov_beta_hat(cfg.schedule);
  const double mu_inf = cfg.schedule.exp_mu > 0.0 ? 0.0 : cfg.schedule.coeff_mu;
  est.lbeta_below_mu = p.smoothness_l() * est.beta_hat < mu_inf;
  est.problem_convex = p.convexity().is_convex();

  std::vector<const ReplicaResult*> ok;
  for (const ReplicaResult& r : results) {
    if (r.diverged) {
      ++est.replicas_diverged;
      est.diverged_at.push_back(r.diverged_at);
    } else {
      ok.push_back(&r);
    }
  }
  est.replicas_ok = ok.size();
  if (static_cast<double>(est.replicas_diverged) >
      0.01 * static_cast<double>(cfg.replicas)) {
    std::uint64_t first = est.diverged_at.empty()
                              ? 0
                              : *std::min_element(est.diverged_at.begin(),
                                                  est.diverged_at.end());
    throw ExperimentFailure(
        fmt::format("{} of {} replicas diverged (tolerance 1%); earliest at "
                    "iteration {}",
                    est.replicas_diverged, cfg.replicas, first),
        est.replicas_diverged, cfg.replicas);
  }

  std::vector<double> buf(ok.size());
  const auto field = [&](std::size_t cp, Field f) {
    for (std::size_t i = 0; i < ok.size(); ++i) buf[i] = ok[i]->rows[cp][f];
    return stat_of(buf);
  };
  est.checkpoints.reserve(grid.size());
  for (std::size_t cp = 0; cp < grid.size(); ++cp) {
    CheckpointEstimate e;
    e.k = grid[cp];
    e.alpha = cfg.schedule.alpha(e.k);
    e.mu = cfg.schedule.mu(e.k);
    const Stat gs = field(cp, kGradSq);
    const Stat gap = field(cp, kGap);
    e.mean_grad_sq = gs.mean;
    e.se_grad_sq = gs.se;
    e.mean_gap = gap.mean;
    e.se_gap = gap.se;
    if (cfg.averaged) {
      const Stat ag = field(cp, kAvgGap);
      e.mean_avg_gap = ag.mean;
      e.se_avg_gap = ag.se;
    }
    e.mean_gap_prev = field(cp, kGapPrev).mean;
    e.mean_grad_sq_prev = field(cp, kGradSqPrev).mean;
    const Stat gd = field(cp, kGapDelta);
    e.mean_gap_delta = gd.mean;
    e.se_gap_delta = gd.se;
    if (cfg.lyapunov) {
      DescentPoint dp;
      dp.k = e.k;
      dp.mean_h_tilde = field(cp, kHt).mean;
      dp.mean_h_tilde_prev = field(cp, kHtPrev).mean;
      dp.mean_h_bar_prev = field(cp, kHbarPrev).mean;
      const Stat dd = field(cp, kHtDelta);
      dp.mean_delta = dd.mean;
      dp.se_delta = dd.se;
      e.descent = dp;
      e.mean_h = field(cp, kH).mean;
      e.mean_z_tilde = field(cp, kZt).mean;
      e.mean_h_bar = field(cp, kHbar).mean;
    }
    est.checkpoints.push_back(std::move(e));
  }
  return est;
}

std::vector<double> liminf_probe(const MonteCarloEstimate& est) {
  if (est.checkpoints.size() < 3) {
    throw std::invalid_argument("liminf_probe: need >= 3 checkpoints");
  }
  std::vector<double> out;
  out.reserve(est.checkpoints.size());
  double m = est.checkpoints.front().mean_grad_sq;
  for (const CheckpointEstimate& c : est.checkpoints) {
    m = std::min(m, c.mean_grad_sq);
    out.push_back(m);
  }
  return out;
}

bool running_min_decreasing(const MonteCarloEstimate& est,
                            std::span<const std::uint64_t> ks) {
  const std::vector<double> rm = liminf_probe(est);
  double prev = 0.0;
  bool first = true;
  for (std::uint64_t k : ks) {
    const CheckpointEstimate* c = est.at(k);
    if (!c) throw std::invalid_argument(fmt::format("checkpoint {} not on grid", k));
    const double v = rm[static_cast<std::size_t>(c - est.checkpoints.data())];
    if (!first && !(v < prev)) return false;
    prev = v;
    first = false;
  }
  return true;
}

AveragedBoundProbe averaged_bound_probe(const MonteCarloEstimate& est,
                                        const PowerSchedule& s,
                                        std::uint64_t burn_in) {
  if (!est.config.averaged) {
    throw std::invalid_argument("averaged_bound_probe: averaged mode was off");
  }
  AveragedBoundProbe out;
  double sa = 0.0;
  double sa2 = 0.0;
  std::uint64_t k = 0;
  std::vector<double> post;
  std::uint64_t last_kept = 0;
  for (const CheckpointEstimate& c : est.checkpoints) {
    for (; k < c.k;) {
      ++k;
      const double a = s.alpha(k);
      sa += a;
      sa2 += a * a;
    }
    const double ratio = c.mean_avg_gap.value_or(0.0) * sa / (1.0 + sa2);
    out.k.push_back(c.k);
    out.ratio.push_back(ratio);
    // Keep post-burn-in checkpoints at least a factor 1.5 apart (plus the
    // last one) so the dense tail window does not dominate the median.
    if (c.k > burn_in && (last_kept == 0 || c.k * 2 >= last_kept * 3 ||
                          c.k == est.checkpoints.back().k)) {
      post.push_back(ratio);
      last_kept = c.k;
    }
  }
  if (post.empty()) {
    throw std::invalid_argument("averaged_bound_probe: no checkpoint after burn-in");
  }
  std::vector<double> sorted = post;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  out.median_after_burn_in =
      n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  out.start_after_burn_in = post.front();
  out.max_after_burn_in = sorted.back();
  out.within_twice_median = out.max_after_burn_in <= 2.0 * out.median_after_burn_in;
  out.bounded = out.max_after_burn_in <=
                2.0 * std::max(out.median_after_burn_in, out.start_after_burn_in);
  return out;
}

std::vector<DescentPoint> descent_series(const MonteCarloEstimate& est) {
  std::vector<DescentPoint> out;
  for (const CheckpointEstimate& c : est.checkpoints) {
    if (c.descent) out.push_back(*c.descent);
  }
  return out;
}

std::vector<SweepRow> sweep(const std::vector<ExperimentConfig>& grid) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const ExperimentConfig& cfg : grid) {
    SweepRow row;
    row.method = cfg.method;
    row.a = cfg.schedule.exp_alpha;
    row.b = cfg.schedule.exp_mu;
    try {
      const MonteCarloEstimate est = run_experiment(cfg);
      row.ok = true;
      row.final = est.checkpoints.back();
      for (const auto& c : est.checkpoints) row.grid.push_back(c.k);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string estimates_csv(const MonteCarloEstimate& est) {
  const bool avg = est.config.averaged;
  std::string out = "checkpoint,mean_grad_sq,se_grad_sq,mean_gap,se_gap";
  if (avg) out += ",mean_avg_gap,se_avg_gap";
  out += '\n';
  for (const CheckpointEstimate& c : est.checkpoints) {
    out += fmt::format("{},{},{},{},{}", c.k, c.mean_grad_sq, c.se_grad_sq,
                       c.mean_gap, c.se_gap);
    if (avg) {
      out += fmt::format(",{},{}", c.mean_avg_gap.value_or(0.0),
                         c.se_avg_gap.value_or(0.0));
    }
    out += '\n';
  }
  return out;
}

std::string lyapunov_csv(const MonteCarloEstimate& est) {
  std::string out = "checkpoint,alpha,mu,H,Zt,Ht,Hbar,Ht_prev,Hbar_prev,delta,se_delta\n";
  for (const CheckpointEstimate& c : est.checkpoints) {
    if (!c.descent) continue;
    const DescentPoint& d = *c.descent;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", c.k, c.alpha, c.mu,
                       c.mean_h, c.mean_z_tilde, d.mean_h_tilde, c.mean_h_bar,
                       d.mean_h_tilde_prev, d.mean_h_bar_prev, d.mean_delta,
                       d.se_delta);
  }
  return out;
}

std::string summary_json(const MonteCarloEstimate& est) {
  const ExperimentConfig& cfg = est.config;
  nlohmann::ordered_json j;
  j["method"] = to_string(cfg.method);
  j["problem"] = cfg.problem.name;
  j["oracle"] = cfg.oracle.kind;
  j["alpha"] = {cfg.schedule.coeff_alpha, cfg.schedule.exp_alpha};
  j["mu"] = {cfg.schedule.coeff_mu, cfg.schedule.exp_mu};
  j["horizon"] = cfg.horizon;
  j["replicas"] = cfg.replicas;
  j["replicas_ok"] = est.replicas_ok;
  j["replicas_diverged"] = est.replicas_diverged;
  j["master_seed"] = cfg.master_seed;
  j["smoothness_l"] = est.smoothness_l;
  const ScheduleClass sc = classify(cfg.schedule);
  j["schedule_class"] = {{"diverges", sc.diverges},
                         {"square_summable", sc.square_summable},
                         {"thm22_condition", sc.tail_product_vanishes},
                         {"damping_admissible", sc.damping_admissible},
                         {"l_mu", sc.l_mu}};
  if (cfg.method == Method::nasgd) {
    j["nesterov_hypothesis"] = {{"beta_hat", est.beta_hat},
                                {"l_beta_hat_below_mu", est.lbeta_below_mu},
                                {"convex", est.problem_convex},
                                {"holds", est.lbeta_below_mu || est.problem_convex}};
  }
  if (cfg.lyapunov) {
    j["lyapunov"] = {
        {"mode", est.lyapunov_mode == DampingMode::constant ? "constant" : "vanishing"},
        {"coefficient", est.lyapunov_coefficient}};
  }
  const std::vector<double> rm = liminf_probe(est);
  const CheckpointEstimate& last = est.checkpoints.back();
  j["final"] = {{"checkpoint", last.k},
                {"mean_grad_sq", last.mean_grad_sq},
                {"se_grad_sq", last.se_grad_sq},
                {"mean_gap", last.mean_gap},
                {"se_gap", last.se_gap},
                {"running_min_grad_sq", rm.back()}};
  if (last.mean_avg_gap) {
    j["final"]["mean_avg_gap"] = *last.mean_avg_gap;
    j["final"]["se_avg_gap"] = *last.se_avg_gap;
  }
  return j.dump(2);
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "method,a,b,status,checkpoint,mean_grad_sq,se_grad_sq,mean_gap,se_gap\n";
  for (const SweepRow& r : rows) {
    if (r.ok && r.final) {
      const CheckpointEstimate& c = *r.final;
      out += fmt::format("{},{},{},ok,{},{},{},{},{}\n", to_string(r.method), r.a,
                         r.b, c.k, c.mean_grad_sq, c.se_grad_sq, c.mean_gap,
                         c.se_gap);
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out += fmt::format("{},{},{},error: {},,,,,\n", to_string(r.method), r.a,
                         r.b, msg);
    }
  }
  return out;
}

}  // namespace sgdlab
