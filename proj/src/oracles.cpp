#include "sgdlab/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace sgdlab {

namespace {

class GaussianModel final : public OracleModel {
 public:
  GaussianModel(Problem p, double sigma) : p_{std::move(p)}, sigma_{sigma} {}
  const Problem& problem() const override { return p_; }
  std::string kind() const override { return "gaussian"; }
  void draw(std::span<const double> x, CounterRng& rng, std::span<double> grad,
            std::span<double> stoch) const override {
    p_.gradient(x, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      stoch[i] = sigma_ == 0.0 ? grad[i] : grad[i] - sigma_ * rng.normal();
    }
  }

 private:
  Problem p_;
  double sigma_;
};

class RelativeModel final : public OracleModel {
 public:
  RelativeModel(Problem p, double eta) : p_{std::move(p)}, eta_{eta} {}
  const Problem& problem() const override { return p_; }
  std::string kind() const override { return "relative"; }
  void draw(std::span<const double> x, CounterRng& rng, std::span<double> grad,
            std::span<double> stoch) const override {
    p_.gradient(x, grad);
    const double scale = eta_ * norm(grad);
    if (scale == 0.0) {
      std::copy(grad.begin(), grad.end(), stoch.begin());
      return;
    }
    // Direction goes into `stoch` first, then is overwritten in place.
    rng.unit_sphere(stoch);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      stoch[i] = grad[i] - scale * stoch[i];
    }
  }

 private:
  Problem p_;
  double eta_;
};

class MinibatchModel final : public OracleModel {
 public:
  MinibatchModel(FiniteSumProblem fsp, std::size_t batch, Sampling mode)
      : fsp_{std::move(fsp)}, batch_{batch}, mode_{mode} {}
  const Problem& problem() const override { return fsp_.aggregate; }
  std::string kind() const override { return "minibatch"; }

  void draw(std::span<const double> x, CounterRng& rng, std::span<double> grad,
            std::span<double> stoch) const override {
    fsp_.aggregate.gradient(x, grad);
    std::fill(stoch.begin(), stoch.end(), 0.0);
    const std::size_t s = fsp_.size();
    thread_local std::vector<std::size_t> perm;
    thread_local Vec gi;
    gi.resize(grad.size());
    if (mode_ == Sampling::without_replacement) {
      perm.resize(s);
      for (std::size_t i = 0; i < s; ++i) perm[i] = i;
    }
    for (std::size_t j = 0; j < batch_; ++j) {
      std::size_t idx = 0;
      if (mode_ == Sampling::with_replacement) {
        idx = rng.bounded(s);
      } else {
        // Partial Fisher-Yates.
        const std::size_t pick = j + rng.bounded(s - j);
        std::swap(perm[j], perm[pick]);
        idx = perm[j];
      }
      add_component_gradient(idx, x, gi, stoch);
    }
    const double inv_b = 1.0 / static_cast<double>(batch_);
    for (double& v : stoch) v *= inv_b;
  }

 private:
  void add_component_gradient(std::size_t idx, std::span<const double> x,
                              Vec& scratch, std::span<double> acc) const {
    if (fsp_.is_least_squares()) {
      const Vec& a = fsp_.design[idx];
      const double r = dot(a, x) - fsp_.targets[idx];
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += a[k] * r;
      return;
    }
    fsp_.components[idx].gradient(x, scratch);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += scratch[k];
  }

  FiniteSumProblem fsp_;
  std::size_t batch_;
  Sampling mode_;
};

// Evaluation grid for empirical bound fits: x* plus a symmetric lattice of
// offsets at several radii along each axis and the diagonal.
std::vector<Vec> fit_points(const Problem& p) {
  const std::size_t d = p.dim();
  const Vec center = p.minimum() ? p.minimum()->x_star : Vec(d, 0.0);
  std::vector<Vec> pts{center};
  for (double r : {0.5, 2.0, 8.0}) {
    for (std::size_t i = 0; i < d; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        Vec q = center;
        q[i] += sgn * r;
        pts.push_back(std::move(q));
      }
    }
    Vec q = center;
    for (double& v : q) v += r;
    pts.push_back(std::move(q));
  }
  return pts;
}

}  // namespace

GradientOracle::GradientOracle(std::shared_ptr<const OracleModel> model,
                               NoiseBound bound, bool empirical_bound,
                               std::uint64_t stream_key)
    : model_{std::move(model)},
      bound_{bound},
      empirical_{empirical_bound},
      key_{stream_key} {
  if (!model_) throw std::invalid_argument("oracle: null model");
  if (!(bound_.m_const >= 0.0) || !(bound_.v_const >= 0.0) ||
      !std::isfinite(bound_.m_const) || !std::isfinite(bound_.v_const)) {
    throw std::invalid_argument("oracle: noise bound must be finite and >= 0");
  }
}

void GradientOracle::reseed(std::uint64_t stream_key) {
  key_ = stream_key;
  draws_ = 0;
}

void GradientOracle::sample_into(std::span<const double> x,
                                 std::span<double> grad,
                                 std::span<double> stoch) {
  CounterRng rng{derive_key(key_, draws_++)};
  model_->draw(x, rng, grad, stoch);
}

OracleSample GradientOracle::sample(std::span<const double> x) {
  const std::size_t d = model_->problem().dim();
  Vec grad(d);
  OracleSample out{Vec(d), Vec(d)};
  sample_into(x, grad, out.stoch_grad);
  for (std::size_t i = 0; i < d; ++i) out.noise[i] = grad[i] - out.stoch_grad[i];
  return out;
}

GradientOracle gaussian_oracle(const Problem& p, double sigma,
                               std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("gaussian_oracle: sigma must be >= 0");
  }
  const NoiseBound b{sigma * sigma * static_cast<double>(p.dim()), 0.0};
  return GradientOracle(std::make_shared<GaussianModel>(p, sigma), b, false,
                        seed);
}

GradientOracle relative_noise_oracle(const Problem& p, double eta,
                                     std::uint64_t seed) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw std::invalid_argument("relative_noise_oracle: eta must be >= 0");
  }
  return GradientOracle(std::make_shared<RelativeModel>(p, eta),
                        NoiseBound{0.0, eta * eta}, false, seed);
}

GradientOracle minibatch_oracle(const FiniteSumProblem& fsp, std::size_t batch,
                                std::uint64_t seed, Sampling mode) {
  if (batch < 1 || batch > fsp.size()) {
    throw std::invalid_argument("minibatch_oracle: batch must lie in [1, S]");
  }
  auto model = std::make_shared<MinibatchModel>(fsp, batch, mode);
  const Problem& agg = fsp.aggregate;
  const bool closed_form = fsp.is_least_squares() &&
                           agg.convexity().kind ==
                               ConvexityKind::strongly_convex &&
                           agg.minimum().has_value();
  if (closed_form) {
    // With replacement, E|xi|^2 = (1/B)(mean_i |g_i|^2 - |g|^2), and without
    // replacement it is smaller. With g_i = a_i (a_i.x - b_i) and
    // r_i = a_i.x* - b_i:
    //   |g_i|^2 <= 2|a_i|^4 |x - x*|^2 + 2|a_i|^2 r_i^2,
    //   |x - x*| <= |g| / lambda_min.
    const Vec& xs = agg.minimum()->x_star;
    const double lmin = agg.convexity().strong_mu;
    double m_acc = 0.0;
    double v_acc = 0.0;
    for (std::size_t i = 0; i < fsp.size(); ++i) {
      const double a2 = norm_sq(fsp.design[i]);
      const double r = dot(fsp.design[i], xs) - fsp.targets[i];
      m_acc += a2 * r * r;
      v_acc += a2 * a2;
    }
    const double inv = 1.0 / static_cast<double>(fsp.size());
    const double scale = 2.0 / static_cast<double>(batch);
    const NoiseBound b{scale * m_acc * inv, scale * v_acc * inv / (lmin * lmin)};
    return GradientOracle(model, b, false, seed);
  }
  GradientOracle probe(model, NoiseBound{}, true, derive_key(seed, 0xb0b0));
  const NoiseBound fitted = estimate_noise_bound(probe, fit_points(agg), 4000);
  return GradientOracle(model, fitted, true, seed);
}

NoiseBound estimate_noise_bound(GradientOracle& o,
                                const std::vector<Vec>& points,
                                std::size_t samples) {
  if (points.empty() || samples == 0) {
    throw std::invalid_argument("estimate_noise_bound: need points and samples");
  }
  const std::size_t d = o.problem().dim();
  Vec grad(d), stoch(d);
  std::vector<double> gsq(points.size()), second(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      o.sample_into(points[j], grad, stoch);
      double e = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double xi = grad[i] - stoch[i];
        e += xi * xi;
      }
      acc += e;
    }
    gsq[j] = norm_sq(grad);
    second[j] = acc / static_cast<double>(samples);
  }
  // Two-variable NNLS on relative residuals (second - M - V g2) / (1 + g2),
  // so small-gradient points are not swamped by large ones. Candidates are
  // the unconstrained solution and the two faces M = 0 and V = 0.
  const std::size_t n = points.size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const double w = 1.0 / (1.0 + gsq[j]);
    a(row, 0) = w;
    a(row, 1) = w * gsq[j];
    y[row] = w * second[j];
  }
  const auto sse = [&](double m, double v) {
    return (y - a * Eigen::Vector2d(m, v)).squaredNorm();
  };
  const auto face = [&](Eigen::Index col) {
    const double den = a.col(col).squaredNorm();
    return den > 0.0 ? std::max(a.col(col).dot(y) / den, 0.0) : 0.0;
  };
  std::vector<std::pair<double, double>> candidates{{face(0), 0.0}, {0.0, face(1)}};
  const Eigen::VectorXd full = a.completeOrthogonalDecomposition().solve(y);
  if (full[0] >= 0.0 && full[1] >= 0.0) candidates.emplace_back(full[0], full[1]);
  auto [m, v] = *std::min_element(
      candidates.begin(), candidates.end(), [&](const auto& l, const auto& r) {
        return sse(l.first, l.second) < sse(r.first, r.second);
      });
  // Lift M until every fitted point is covered, then inflate.
  double lift = 0.0;
  for (std::size_t j = 0; j < n; ++j) lift = std::max(lift, second[j] - m - v * gsq[j]);
  return NoiseBound{1.5 * (m + lift), 1.5 * v};
}

bool BoundReport::all_pass() const {
  return std::all_of(points.begin(), points.end(),
                     [](const PointCheck& c) { return c.pass(); });
}

BoundReport verify_bound(GradientOracle& o, const Problem& p,
                         const std::vector<Vec>& points, std::size_t samples) {
  if (samples < 1000) throw std::invalid_argument("verify_bound: samples must be >= 1000");
  const std::size_t d = p.dim();
  const double n = static_cast<double>(samples);
  Vec grad(d), stoch(d), sum(d), sumsq(d);
  BoundReport report;
  for (const Vec& x : points) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sumsq.begin(), sumsq.end(), 0.0);
    double e_sum = 0.0;
    double e_sumsq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      o.sample_into(x, grad, stoch);
      double e = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double xi = grad[i] - stoch[i];
        sum[i] += xi;
        sumsq[i] += xi * xi;
        e += xi * xi;
      }
      e_sum += e;
      e_sumsq += e * e;
    }
    PointCheck c;
    c.point = x;
    p.gradient(x, grad);
    c.grad_sq = norm_sq(grad);
    double mean_sq = 0.0;
    double var_sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double m = sum[i] / n;
      mean_sq += m * m;
      var_sum += std::max(sumsq[i] / n - m * m, 0.0) * n / (n - 1.0);
    }
    c.mean_noise_norm = std::sqrt(mean_sq);
    c.mean_noise_tol = 3.0 * std::sqrt(var_sum / n);
    c.second_moment = e_sum / n;
    const double e_var =
        std::max(e_sumsq / n - c.second_moment * c.second_moment, 0.0) * n /
        (n - 1.0);
    c.second_moment_se = std::sqrt(e_var / n);
    const NoiseBound& b = o.declared_bound();
    c.declared = b.m_const + b.v_const * c.grad_sq;
    c.unbiased = c.mean_noise_norm <= c.mean_noise_tol;
    // Noise of exactly prescribed length (relative oracle, zero-variance
    // batches) meets the bound with equality, so allow the rounding error of
    // summing n terms.
    const double rounding = n * std::numeric_limits<double>::epsilon() * c.declared;
    c.bounded = c.second_moment <= c.declared + 4.0 * c.second_moment_se + rounding;
    report.points.push_back(std::move(c));
  }
  return report;
}

}  // namespace sgdlab
