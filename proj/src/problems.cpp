#include "sgdlab/problems.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace sgdlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Relative inflation applied to iteratively computed smoothness constants.
constexpr double kLInflation = 1e-6;

// Strongly convex quadratics satisfy f - f* <= |grad f|^2 / (2 mu), hence
// (f - f*)^2 <= delta / (4 mu^2) * |grad f|^2 on {|grad f|^2 <= delta}.
WeakConvexCert strong_convexity_cert(double strong_mu) {
  constexpr double delta = 1.0;
  return WeakConvexCert{delta / (4.0 * strong_mu * strong_mu), delta};
}

}  // namespace

Problem::Problem(std::string name, std::size_t dim, ValueFn value,
                 GradFn gradient, double smoothness_l, Convexity convexity,
                 std::optional<Minimum> minimum,
                 std::optional<WeakConvexCert> cert)
    : name_{std::move(name)},
      dim_{dim},
      value_{std::move(value)},
      gradient_{std::move(gradient)},
      smoothness_l_{smoothness_l},
      convexity_{convexity},
      minimum_{std::move(minimum)},
      cert_{cert} {
  if (dim_ == 0) throw std::invalid_argument("problem: dim must be >= 1");
  if (!(smoothness_l_ > 0.0) || !std::isfinite(smoothness_l_)) {
    throw std::invalid_argument("problem: smoothness constant must be > 0");
  }
  if (minimum_ && minimum_->x_star.size() != dim_) {
    throw std::invalid_argument("problem: minimizer has wrong dimension");
  }
}

Vec Problem::gradient(std::span<const double> x) const {
  Vec g(dim_);
  gradient_(x, g);
  return g;
}

Problem quadratic(std::span<const double> spectrum,
                  std::span<const double> x_star) {
  if (spectrum.empty()) throw std::invalid_argument("quadratic: empty spectrum");
  if (x_star.size() != spectrum.size()) {
    throw std::invalid_argument("quadratic: spectrum and x_star differ in size");
  }
  for (double l : spectrum) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw std::invalid_argument("quadratic: spectrum entries must be >= 0");
    }
  }
  const Vec lam(spectrum.begin(), spectrum.end());
  const Vec xs(x_star.begin(), x_star.end());
  const double lmax = *std::max_element(lam.begin(), lam.end());
  const double lmin = *std::min_element(lam.begin(), lam.end());
  if (lmax == 0.0) {
    throw std::invalid_argument("quadratic: spectrum must have a positive entry");
  }

  Convexity cvx{ConvexityKind::convex, 0.0};
  std::optional<WeakConvexCert> cert;
  if (lmin > 0.0) {
    cvx = {ConvexityKind::strongly_convex, lmin};
    cert = strong_convexity_cert(lmin);
  }
  auto value = [lam, xs](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < lam.size(); ++i) {
      const double e = x[i] - xs[i];
      s += lam[i] * e * e;
    }
    return 0.5 * s;
  };
  auto grad = [lam, xs](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < lam.size(); ++i) g[i] = lam[i] * (x[i] - xs[i]);
  };
  return Problem("quadratic", lam.size(), value, grad, lmax, cvx,
                 Minimum{xs, 0.0}, cert);
}

Problem pseudo_huber(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("pseudo_huber: dim must be >= 1");
  auto value = [](std::span<const double> x) {
    double s = 0.0;
    for (double xi : x) s += std::sqrt(1.0 + xi * xi) - 1.0;
    return s;
  };
  auto grad = [](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = x[i] / std::sqrt(1.0 + x[i] * x[i]);
    }
  };

  // Certificate: on D = {|grad f|^2 <= delta}, (f - f*)^2 <= |grad f|^2 |x|^2
  // by convexity along the ray from 0, so k0 = sup_D |x|^2. The sublevel
  // constraint sum x_i^2/(1+x_i^2) <= delta is concave in x_i^2, so the
  // supremum sits on a coordinate axis; scan the first one or two axes on a
  // grid and inflate by 10%.
  constexpr double delta = 0.25;
  const std::size_t grid_dim = std::min<std::size_t>(dim, 2);
  const int n = grid_dim == 1 ? 4001 : 801;
  const double r = 1.0 / std::sqrt(3.0) * 1.05;
  double sup = 0.0;
  const auto g2 = [](double t) { return t * t / (1.0 + t * t); };
  for (int i = 0; i < n; ++i) {
    const double x0 = -r + 2.0 * r * i / (n - 1);
    if (grid_dim == 1) {
      if (g2(x0) <= delta) sup = std::max(sup, x0 * x0);
      continue;
    }
    for (int j = 0; j < n; ++j) {
      const double x1 = -r + 2.0 * r * j / (n - 1);
      if (g2(x0) + g2(x1) <= delta) sup = std::max(sup, x0 * x0 + x1 * x1);
    }
  }
  const WeakConvexCert cert{1.1 * sup, delta};
  return Problem("pseudo_huber", dim, value, grad, 1.0,
                 Convexity{ConvexityKind::convex, 0.0},
                 Minimum{Vec(dim, 0.0), 0.0}, cert);
}

Problem smooth_rastrigin(std::size_t dim, double amplitude) {
  if (dim == 0) throw std::invalid_argument("smooth_rastrigin: dim must be >= 1");
  if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
    throw std::invalid_argument("smooth_rastrigin: amplitude must be > 0");
  }
  const double curv = 4.0 * std::numbers::pi * std::numbers::pi * amplitude;
  // f'' = 2 + 4 pi^2 A cos(2 pi x) ranges over [2 - curv, 2 + curv].
  Convexity cvx{ConvexityKind::nonconvex, 0.0};
  if (curv < 2.0) cvx = {ConvexityKind::strongly_convex, 2.0 - curv};
  if (curv == 2.0) cvx = {ConvexityKind::convex, 0.0};

  auto value = [amplitude](std::span<const double> x) {
    double s = 0.0;
    for (double xi : x) s += xi * xi + amplitude * (1.0 - std::cos(kTwoPi * xi));
    return s;
  };
  auto grad = [amplitude](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = 2.0 * x[i] + amplitude * kTwoPi * std::sin(kTwoPi * x[i]);
    }
  };
  return Problem("smooth_rastrigin", dim, value, grad, 2.0 + curv, cvx,
                 Minimum{Vec(dim, 0.0), 0.0});
}

double power_iteration_lmax(const std::vector<Vec>& sym, double tol,
                            int max_iter) {
  const std::size_t d = sym.size();
  if (d == 0) throw std::invalid_argument("power_iteration: empty matrix");
  // Deterministic start with no zero components, so it is not orthogonal
  // to a coordinate-aligned top eigenvector.
  Vec v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i);
  double nv = norm(v);
  for (double& e : v) e /= nv;
  Vec w(d);
  double rayleigh = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < d; ++i) w[i] = dot(sym[i], v);
    const double next = dot(v, w);
    nv = norm(w);
    if (nv == 0.0) return 0.0;
    for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / nv;
    if (it > 0 && std::abs(next - rayleigh) <= tol * std::abs(next)) {
      return next;
    }
    rayleigh = next;
  }
  return rayleigh;
}

FiniteSumProblem least_squares_sum(const std::vector<Vec>& design,
                                   std::span<const double> targets) {
  const std::size_t s = design.size();
  if (s == 0) throw std::invalid_argument("least_squares_sum: no rows");
  if (targets.size() != s) {
    throw std::invalid_argument(
        "least_squares_sum: design rows and targets differ in count");
  }
  const std::size_t d = design.front().size();
  if (d == 0) throw std::invalid_argument("least_squares_sum: zero-width rows");
  for (const auto& row : design) {
    if (row.size() != d) {
      throw std::invalid_argument("least_squares_sum: ragged design matrix");
    }
    if (!all_finite(row)) {
      throw std::invalid_argument("least_squares_sum: non-finite design entry");
    }
  }
  if (!all_finite(targets)) {
    throw std::invalid_argument("least_squares_sum: non-finite target");
  }

  FiniteSumProblem out{{}, quadratic(Vec{1.0}, Vec{0.0}), design,
                       Vec(targets.begin(), targets.end())};
  out.components.reserve(s);
  for (std::size_t i = 0; i < s; ++i) {
    const Vec a = design[i];
    const double b = targets[i];
    const double l_i = std::max(norm_sq(a), 1e-300);
    out.components.emplace_back(
        "least_squares_component", d,
        [a, b](std::span<const double> x) {
          const double r = dot(a, x) - b;
          return 0.5 * r * r;
        },
        [a, b](std::span<const double> x, std::span<double> g) {
          const double r = dot(a, x) - b;
          for (std::size_t j = 0; j < a.size(); ++j) g[j] = a[j] * r;
        },
        l_i, Convexity{ConvexityKind::convex, 0.0});
  }

  // Normal-equation matrix (1/S) sum a_i a_i^T.
  std::vector<Vec> gram(d, Vec(d, 0.0));
  Eigen::MatrixXd gm = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                             static_cast<Eigen::Index>(d));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  const double inv_s = 1.0 / static_cast<double>(s);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      rhs[static_cast<Eigen::Index>(r)] += inv_s * design[i][r] * targets[i];
      for (std::size_t c = 0; c < d; ++c) {
        gram[r][c] += inv_s * design[i][r] * design[i][c];
      }
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      gm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = gram[r][c];
    }
  }
  double l_agg = power_iteration_lmax(gram) * (1.0 + kLInflation);
  if (!(l_agg > 0.0)) l_agg = 1e-300;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gm);
  const double lmin = std::max(eig.eigenvalues().minCoeff(), 0.0);
  const Eigen::VectorXd xs_e = gm.completeOrthogonalDecomposition().solve(rhs);
  Vec xs(xs_e.data(), xs_e.data() + xs_e.size());

  auto value = [design, tg = out.targets, inv_s](std::span<const double> x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < design.size(); ++i) {
      const double r = dot(design[i], x) - tg[i];
      acc += 0.5 * r * r;
    }
    return acc * inv_s;
  };
  auto grad = [design, tg = out.targets, inv_s](std::span<const double> x,
                                                std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < design.size(); ++i) {
      const double r = dot(design[i], x) - tg[i];
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += design[i][j] * r;
    }
    for (double& gj : g) gj *= inv_s;
  };
  const double f_star = value(xs);

  // Relative eigenvalue floor below which the normal matrix counts as
  // singular.
  Convexity cvx{ConvexityKind::convex, 0.0};
  std::optional<WeakConvexCert> cert;
  if (lmin > 1e-12 * l_agg) {
    cvx = {ConvexityKind::strongly_convex, lmin};
    cert = strong_convexity_cert(lmin);
  }
  out.aggregate = Problem("least_squares", d, value, grad, l_agg, cvx,
                          Minimum{xs, f_star}, cert);
  return out;
}

double check_gradient(const Problem& p, std::span<const double> x,
                      double step) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be > 0");
  const Vec g = p.gradient(x);
  Vec probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = p.value(probe);
    probe[i] = orig - step;
    const double fm = p.value(probe);
    probe[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - g[i]) / (1.0 + std::abs(g[i])));
  }
  return worst;
}

Problem make_problem(const ProblemSpec& spec) {
  if (spec.name == "quadratic") {
    Vec xs = spec.x_star;
    if (xs.empty()) xs.assign(spec.spectrum.size(), 0.0);
    return quadratic(spec.spectrum, xs);
  }
  if (spec.name == "pseudo_huber") return pseudo_huber(spec.dim);
  if (spec.name == "smooth_rastrigin") {
    return smooth_rastrigin(spec.dim, spec.amplitude);
  }
  if (spec.name == "least_squares") {
    return least_squares_sum(spec.design, spec.targets).aggregate;
  }
  throw std::invalid_argument("unknown problem '" + spec.name + "'");
}

}  // namespace sgdlab
