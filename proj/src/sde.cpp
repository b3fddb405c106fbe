#include "tende/sde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tende {

VpSchedule::VpSchedule(double beta_min, double beta_max, double t_horizon, double t_min)
    : beta_min_(beta_min), beta_max_(beta_max), t_horizon_(t_horizon), t_min_(t_min) {
  if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !(t_horizon > 0.0)) {
    throw std::invalid_argument("VpSchedule: need 0 < beta_min <= beta_max and T > 0");
  }
  if (!(t_min > 0.0) || !(t_min < t_horizon)) {
    throw std::invalid_argument("VpSchedule: need 0 < t_min < T");
  }
}

void VpSchedule::check_time(double t) const {
  // Allow a rounding-sized overshoot at either end.
  const double slack = 1e-12 * t_horizon_;
  if (!(t >= -slack && t <= t_horizon_ + slack)) {
    throw std::out_of_range("VpSchedule: t = " + std::to_string(t) + " outside [0, T]");
  }
}

double VpSchedule::g2(double t) const {
  check_time(t);
  return beta_min_ + (beta_max_ - beta_min_) * t / t_horizon_;
}

double VpSchedule::f(double t) const { return -0.5 * g2(t); }

double VpSchedule::integrated_beta(double t) const {
  check_time(t);
  return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t / t_horizon_;
}

double VpSchedule::time_at(double b) const {
  const double c = 0.5 * (beta_max_ - beta_min_) / t_horizon_;
  return 2.0 * b / (beta_min_ + std::sqrt(beta_min_ * beta_min_ + 4.0 * c * b));
}

double VpSchedule::k(double t) const { return std::exp(-0.5 * integrated_beta(t)); }

double VpSchedule::v(double t) const { return -std::expm1(-integrated_beta(t)); }

VpSchedule make_schedule(double beta_min, double beta_max, double t_horizon) {
  return VpSchedule(beta_min, beta_max, t_horizon);
}

double k_t(const VpSchedule& sched, double t) { return sched.k(t); }
double v_t(const VpSchedule& sched, double t) { return sched.v(t); }
double g2_t(const VpSchedule& sched, double t) { return sched.g2(t); }

double chi_t(const VpSchedule& sched, double t, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("chi_t: sigma must be positive");
  if (sigma == 1.0) return 1.0;  // k^2 + v = 1; skip the rounding of the sum
  const double k = sched.k(t);
  return k * k * sigma * sigma + sched.v(t);
}

Eigen::VectorXd perturb(const VpSchedule& sched, const Eigen::Ref<const Eigen::VectorXd>& x0,
                        double t, const Eigen::Ref<const Eigen::VectorXd>& noise) {
  if (x0.size() != noise.size()) {
    throw std::invalid_argument("perturb: x0 and noise dimensions differ");
  }
  return sched.k(t) * x0 + std::sqrt(sched.v(t)) * noise;
}

Eigen::VectorXd gaussian_ref_score(const Eigen::Ref<const Eigen::VectorXd>& x_t, double chi) {
  if (!(chi > 0.0)) throw std::invalid_argument("gaussian_ref_score: chi must be positive");
  return -x_t / chi;
}

double gaussian_tail_kl(int dim, double chi_T) {
  if (!(chi_T > 0.0)) throw std::invalid_argument("gaussian_tail_kl: chi_T must be positive");
  if (dim < 0) throw std::invalid_argument("gaussian_tail_kl: negative dimension");
  return 0.5 * dim * (std::log(chi_T) - 1.0 + 1.0 / chi_T);
}

TimeSampler::TimeSampler(const VpSchedule& sched, Proposal proposal, std::size_t grid_points)
    : sched_(sched), t_lo_(sched.t_min()), t_hi_(sched.t_horizon()), proposal_(proposal) {
  if (grid_points < 2) throw std::invalid_argument("TimeSampler: need at least 2 grid points");
  const std::size_t cells = grid_points - 1;
  cell_width_ = (t_hi_ - t_lo_) / static_cast<double>(cells);

  anti_.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double t = (i + 1 == grid_points) ? t_hi_ : t_lo_ + cell_width_ * static_cast<double>(i);
    anti_[i] = antiderivative(t);
  }
  total_ = anti_.back() - anti_.front();
  cdf_.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) cdf_[i] = (anti_[i] - anti_.front()) / total_;
  cdf_.back() = 1.0;
}

double TimeSampler::antiderivative(double t) const {
  if (proposal_ == Proposal::kUniform) return t;
  return std::log(std::expm1(sched_.integrated_beta(t)));
}

double TimeSampler::invert(double a) const {
  if (proposal_ == Proposal::kUniform) return a;
  // B = log(1 + e^a).
  const double big_b = a > 30.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
  return sched_.time_at(big_b);
}

TimeDraw TimeSampler::draw(double u_cell, double u_within) const {
  // First cell whose upper cumulative bound exceeds u_cell.
  auto it = std::upper_bound(cdf_.begin() + 1, cdf_.end(), u_cell);
  if (it == cdf_.end()) --it;
  const auto cell = static_cast<std::size_t>(std::distance(cdf_.begin(), it) - 1);
  const double lo = t_lo_ + cell_width_ * static_cast<double>(cell);
  const double hi = cell + 2 == cdf_.size() ? t_hi_ : lo + cell_width_;
  const double a = anti_[cell] + u_within * (anti_[cell + 1] - anti_[cell]);
  const double t = std::clamp(invert(a), lo, hi);
  return {t, 1.0 / density(t)};
}

double TimeSampler::density(double t) const {
  if (t < t_lo_ || t > t_hi_) return 0.0;
  if (proposal_ == Proposal::kUniform) return 1.0 / total_;
  return sched_.g2(t) / sched_.v(t) / total_;
}

}  // namespace tende
