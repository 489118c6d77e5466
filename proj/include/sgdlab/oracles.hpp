#ifndef SGDLAB_ORACLES_HPP
#define SGDLAB_ORACLES_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgdlab/problems.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/vec.hpp"

namespace sgdlab {

/// E[xi | past] = 0 and E[|xi|^2 | past] <= M + V |grad f|^2.
struct NoiseBound {
  double m_const = 0.0;
  double v_const = 0.0;
};

/// F(x, xi) together with xi = grad f(x) - F(x, xi).
struct OracleSample {
  Vec stoch_grad;
  Vec noise;
};

/// Noise mechanism behind an oracle. Stateless; randomness comes from the
/// generator passed in.
class OracleModel {
 public:
  virtual ~OracleModel() = default;
  virtual const Problem& problem() const = 0;
  virtual std::string kind() const = 0;
  /// Writes grad f(x) into `grad` and F(x, xi) into `stoch`.
  virtual void draw(std::span<const double> x, CounterRng& rng,
                    std::span<double> grad, std::span<double> stoch) const = 0;
};

/// Stochastic gradient oracle with a declared noise bound. Owns its random
/// stream: the j-th call to sample() draws from the counter-based substream
/// (stream_key, j), so a fixed key reproduces the whole sample sequence.
/// Instances are not shared between concurrently running trajectories.
class GradientOracle {
 public:
  GradientOracle(std::shared_ptr<const OracleModel> model, NoiseBound bound,
                 bool empirical_bound, std::uint64_t stream_key);

  const Problem& problem() const { return model_->problem(); }
  std::string kind() const { return model_->kind(); }
  const NoiseBound& declared_bound() const { return bound_; }
  bool bound_is_empirical() const { return empirical_; }

  /// Restarts the sample sequence under a new stream key.
  void reseed(std::uint64_t stream_key);
  std::uint64_t stream_key() const { return key_; }
  std::uint64_t draws() const { return draws_; }

  OracleSample sample(std::span<const double> x);
  /// Allocation-free form; `noise` may be empty when not needed.
  void sample_into(std::span<const double> x, std::span<double> grad,
                   std::span<double> stoch);

 private:
  std::shared_ptr<const OracleModel> model_;
  NoiseBound bound_;
  bool empirical_;
  std::uint64_t key_;
  std::uint64_t draws_ = 0;
};

/// xi ~ N(0, sigma^2 I); declares (M, V) = (sigma^2 d, 0).
GradientOracle gaussian_oracle(const Problem& p, double sigma,
                               std::uint64_t seed);

/// xi = eta |grad f(x)| u with u uniform on the unit sphere; declares
/// (M, V) = (0, eta^2).
GradientOracle relative_noise_oracle(const Problem& p, double eta,
                                     std::uint64_t seed);

enum class Sampling { with_replacement, without_replacement };

/// Average of `batch` component gradients drawn uniformly. For least-squares
/// sums with a strongly convex aggregate the bound is closed form; otherwise
/// it is fitted empirically and flagged.
GradientOracle minibatch_oracle(const FiniteSumProblem& fsp, std::size_t batch,
                                std::uint64_t seed,
                                Sampling mode = Sampling::with_replacement);

/// Fits E|xi|^2 <= M + V |grad f|^2 by non-negative least squares over the
/// second moments observed at `points` (residuals relative to 1 + |grad f|^2),
/// raises M until every point is covered, then inflates both constants by 50%.
NoiseBound estimate_noise_bound(GradientOracle& o,
                                const std::vector<Vec>& points,
                                std::size_t samples);

struct PointCheck {
  Vec point;
  double grad_sq = 0.0;
  double mean_noise_norm = 0.0;
  double mean_noise_tol = 0.0;  // 3 x standard errors in quadrature
  double second_moment = 0.0;
  double second_moment_se = 0.0;
  double declared = 0.0;  // M + V |grad f|^2
  bool unbiased = false;
  bool bounded = false;
  bool pass() const { return unbiased && bounded; }
};

struct BoundReport {
  std::vector<PointCheck> points;
  bool all_pass() const;
};

/// Monte Carlo check of the declared bound at each point; `samples` >= 1000.
BoundReport verify_bound(GradientOracle& o, const Problem& p,
                         const std::vector<Vec>& points, std::size_t samples);

}  // namespace sgdlab

#endif  // SGDLAB_ORACLES_HPP
