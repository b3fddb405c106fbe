#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace tende {

/// Variance-preserving diffusion with a linear rate beta(t).
///
/// The forward process dX = -beta(t)/2 X dt + sqrt(beta(t)) dW has the Gaussian
/// perturbation kernel X_t | X_0 ~ N(k(t) X_0, v(t) I) with k(t) = exp(-B(t)/2),
/// B(t) = int_0^t beta, and v(t) = 1 - k(t)^2. Everything is closed form.
class VpSchedule {
 public:
  static constexpr double kDefaultBetaMin = 0.1;
  static constexpr double kDefaultBetaMax = 20.0;
  static constexpr double kDefaultHorizon = 1.0;
  static constexpr double kDefaultTMin = 1e-5;

  VpSchedule(double beta_min, double beta_max, double t_horizon, double t_min = kDefaultTMin);
  VpSchedule() : VpSchedule(kDefaultBetaMin, kDefaultBetaMax, kDefaultHorizon) {}

  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  double t_horizon() const { return t_horizon_; }
  double t_min() const { return t_min_; }

  /// beta(t), equal to g(t)^2.
  double g2(double t) const;
  /// Drift coefficient f(t) = -beta(t)/2.
  double f(double t) const;
  /// B(t) = int_0^t beta(s) ds.
  double integrated_beta(double t) const;
  /// Inverse of integrated_beta: the t >= 0 with B(t) = b.
  double time_at(double b) const;
  double k(double t) const;
  double v(double t) const;

 private:
  void check_time(double t) const;

  double beta_min_;
  double beta_max_;
  double t_horizon_;
  double t_min_;
};

/// Throws std::invalid_argument on nonpositive inputs.
VpSchedule make_schedule(double beta_min, double beta_max, double t_horizon);

/// Free-function accessors mirroring the schedule members.
double k_t(const VpSchedule& sched, double t);
double v_t(const VpSchedule& sched, double t);
double g2_t(const VpSchedule& sched, double t);

/// Variance of the diffused N(0, sigma^2 I) reference: k^2 sigma^2 + v.
double chi_t(const VpSchedule& sched, double t, double sigma);

/// k(t) x0 + sqrt(v(t)) noise.
Eigen::VectorXd perturb(const VpSchedule& sched, const Eigen::Ref<const Eigen::VectorXd>& x0,
                        double t, const Eigen::Ref<const Eigen::VectorXd>& noise);

/// Score of the diffused Gaussian reference, -x/chi.
Eigen::VectorXd gaussian_ref_score(const Eigen::Ref<const Eigen::VectorXd>& x_t, double chi);

/// KL(N(0, I) || N(0, chi_T I)) in `dim` dimensions.
double gaussian_tail_kl(int dim, double chi_T);

struct TimeDraw {
  double t;
  double weight;
};

/// Draws diffusion times on [t_min, T] with compensating weights.
///
/// The proposal density is proportional to g^2(t)/v(t), whose antiderivative is
/// log(v/k^2). Cell masses on a uniform grid are tabulated from it, a cell is
/// picked by inverse CDF, and t is placed inside the cell by inverting the
/// antiderivative, so the draw follows the density exactly. The weight is the
/// reciprocal density and E[weight * h(t)] = int h(t) dt. The uniform proposal
/// has weight T - t_min.
class TimeSampler {
 public:
  enum class Proposal { kImportance, kUniform };

  static constexpr std::size_t kDefaultGridPoints = 1000;

  explicit TimeSampler(const VpSchedule& sched, Proposal proposal = Proposal::kImportance,
                       std::size_t grid_points = kDefaultGridPoints);

  template <typename Rng>
  TimeDraw operator()(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return draw(unit(rng), unit(rng));
  }

  /// Deterministic map from two uniforms in [0, 1) to a draw.
  TimeDraw draw(double u_cell, double u_within) const;

  /// Density of the sampler at t (piecewise constant).
  double density(double t) const;

  Proposal proposal() const { return proposal_; }

 private:
  double antiderivative(double t) const;
  double invert(double a) const;

  VpSchedule sched_;
  double t_lo_;
  double t_hi_;
  double cell_width_;
  Proposal proposal_;
  std::vector<double> anti_;  // antiderivative at the grid points
  std::vector<double> cdf_;   // cumulative normalized cell masses, size = cells + 1
  double total_ = 0.0;
};

template <typename Rng>
TimeDraw sample_time_importance(const TimeSampler& sampler, Rng& rng) {
  return sampler(rng);
}

}  // namespace tende
