#ifndef SGDLAB_PROBLEMS_HPP
#define SGDLAB_PROBLEMS_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdlab/vec.hpp"

namespace sgdlab {

enum class ConvexityKind { strongly_convex, convex, nonconvex };

struct Convexity {
  ConvexityKind kind = ConvexityKind::nonconvex;
  double strong_mu = 0.0;  // > 0 only for strongly_convex

  bool is_convex() const { return kind != ConvexityKind::nonconvex; }
};

struct Minimum {
  Vec x_star;
  double f_star = 0.0;
};

/// (f(x) - f*)^2 <= k0 * |grad f(x)|^2 wherever |grad f(x)|^2 <= delta.
struct WeakConvexCert {
  double k0 = 0.0;
  double delta = 0.0;
};

/// Objective with exact gradient and certified metadata. Immutable after
/// construction; evaluation is reentrant.
class Problem {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradFn =
      std::function<void(std::span<const double>, std::span<double>)>;

  Problem(std::string name, std::size_t dim, ValueFn value, GradFn gradient,
          double smoothness_l, Convexity convexity,
          std::optional<Minimum> minimum = std::nullopt,
          std::optional<WeakConvexCert> cert = std::nullopt);

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  double smoothness_l() const { return smoothness_l_; }
  const Convexity& convexity() const { return convexity_; }
  const std::optional<Minimum>& minimum() const { return minimum_; }
  const std::optional<WeakConvexCert>& weak_convex_cert() const {
    return cert_;
  }

  double value(std::span<const double> x) const { return value_(x); }
  void gradient(std::span<const double> x, std::span<double> out) const {
    gradient_(x, out);
  }
  Vec gradient(std::span<const double> x) const;

 private:
  std::string name_;
  std::size_t dim_;
  ValueFn value_;
  GradFn gradient_;
  double smoothness_l_;
  Convexity convexity_;
  std::optional<Minimum> minimum_;
  std::optional<WeakConvexCert> cert_;
};

/// f = (1/S) sum_i f_i. For least-squares instances the design rows are
/// kept so that oracles can evaluate component gradients directly.
struct FiniteSumProblem {
  std::vector<Problem> components;
  Problem aggregate;
  std::vector<Vec> design;  // rows a_i; empty when not least squares
  Vec targets;              // b_i

  std::size_t size() const { return components.size(); }
  bool is_least_squares() const { return !design.empty(); }
};

/// f(x) = 1/2 sum_i lambda_i (x_i - x*_i)^2.
Problem quadratic(std::span<const double> spectrum,
                  std::span<const double> x_star);

/// f(x) = sum_i (sqrt(1 + x_i^2) - 1). Convex, L = 1, carries a
/// weak-convexity certificate with delta = 1/4.
Problem pseudo_huber(std::size_t dim);

/// f(x) = sum_i [x_i^2 + A (1 - cos(2 pi x_i))], L = 2 + 4 pi^2 A.
Problem smooth_rastrigin(std::size_t dim, double amplitude);

/// f_i(x) = 1/2 (a_i . x - b_i)^2 averaged over the rows of `design`.
FiniteSumProblem least_squares_sum(const std::vector<Vec>& design,
                                   std::span<const double> targets);

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, stopping when successive Rayleigh quotients agree to `tol`
/// (relative).
double power_iteration_lmax(const std::vector<Vec>& sym, double tol = 1e-10,
                            int max_iter = 100000);

/// Max over coordinates of |fd_i - g_i| / (1 + |g_i|), central differences.
double check_gradient(const Problem& p, std::span<const double> x,
                      double step);

/// Builds a problem from its config name and numeric parameters.
struct ProblemSpec {
  std::string name = "quadratic";
  std::size_t dim = 1;
  Vec spectrum;
  Vec x_star;
  double amplitude = 10.0;
  std::vector<Vec> design;
  Vec targets;
};

Problem make_problem(const ProblemSpec& spec);

}  // namespace sgdlab

#endif  // SGDLAB_PROBLEMS_HPP
