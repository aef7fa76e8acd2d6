#include "diffrestore/process.hpp"

#include <cmath>
#include <stdexcept>

namespace diffrestore {

ProcessKind process_kind_from_string(const std::string& s) {
  if (s == "ve") return ProcessKind::VE;
  if (s == "vp") return ProcessKind::VP;
  if (s == "ouve") return ProcessKind::OUVE;
  if (s == "bbed") return ProcessKind::BBED;
  throw std::invalid_argument("unknown process kind: " + s);
}

std::string to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::VE: return "ve";
    case ProcessKind::VP: return "vp";
    case ProcessKind::OUVE: return "ouve";
    case ProcessKind::BBED: return "bbed";
  }
  return "?";
}

DiffusionProcess::DiffusionProcess(ProcessKind kind, const ScheduleParams& p)
    : kind_(kind), p_(p) {
  if (!(p_.T > 0) || !(p_.tau_eps > 0) || !(p_.tau_eps < p_.T))
    throw std::invalid_argument("need 0 < tau_eps < T");
  if (!(p_.sigma_max > p_.sigma_min) || !(p_.sigma_min > 0))
    throw std::invalid_argument("need sigma_max > sigma_min > 0");
  if (!(p_.beta_max > p_.beta_min) || !(p_.beta_min > 0))
    throw std::invalid_argument("need beta_max > beta_min > 0");
  if (!(p_.gamma > 0)) throw std::invalid_argument("need gamma > 0");
  if (!(p_.bridge_scale > 0))
    throw std::invalid_argument("need bridge_scale > 0");
}

DiffusionProcess DiffusionProcess::ve(const ScheduleParams& p) {
  return DiffusionProcess(ProcessKind::VE, p);
}

DiffusionProcess DiffusionProcess::vp(const ScheduleParams& p) {
  return DiffusionProcess(ProcessKind::VP, p);
}

DiffusionProcess DiffusionProcess::ouve(const ScheduleParams& p) {
  ScheduleParams q = p;
  // Speech-enhancement style defaults when the caller kept the VE values.
  if (q.sigma_min == ScheduleParams{}.sigma_min &&
      q.sigma_max == ScheduleParams{}.sigma_max) {
    q.sigma_min = 0.05;
    q.sigma_max = 0.5;
  }
  return DiffusionProcess(ProcessKind::OUVE, q);
}

DiffusionProcess DiffusionProcess::bbed(const ScheduleParams& p) {
  return DiffusionProcess(ProcessKind::BBED, p);
}

DiffusionProcess DiffusionProcess::make(ProcessKind kind,
                                        const ScheduleParams& p) {
  switch (kind) {
    case ProcessKind::VE: return ve(p);
    case ProcessKind::VP: return vp(p);
    case ProcessKind::OUVE: return ouve(p);
    case ProcessKind::BBED: return bbed(p);
  }
  throw std::invalid_argument("bad process kind");
}

double DiffusionProcess::max_sampling_time() const {
  return kind_ == ProcessKind::BBED ? 0.999 * p_.T : p_.T;
}

void DiffusionProcess::check_tau(double tau, bool allow_zero,
                                 bool drift_eval) const {
  const double lo = allow_zero ? 0.0 : p_.tau_eps;
  if (!(tau >= lo) || !(tau <= p_.T))
    throw std::out_of_range("tau outside [" + std::to_string(lo) + ", " +
                            std::to_string(p_.T) + "]");
  if (drift_eval && kind_ == ProcessKind::BBED && tau >= p_.T)
    throw std::out_of_range("BBED drift is singular at tau = T");
}

const Vec* DiffusionProcess::check_y(const Vec& x, const Vec* y) const {
  if (requires_y()) {
    if (y == nullptr)
      throw std::invalid_argument(to_string(kind_) + " requires y");
    if (y->size() != x.size())
      throw std::invalid_argument("y shape does not match x");
    return y;
  }
  if (y != nullptr)
    throw std::invalid_argument(to_string(kind_) + " does not take y");
  return nullptr;
}

namespace {
// Integrated beta for VP: int_0^tau beta(s) ds.
double vp_int_beta(const ScheduleParams& p, double tau) {
  return p.beta_min * tau + (p.beta_max - p.beta_min) * tau * tau / (2 * p.T);
}
// Log-rate of the VE/OUVE sigma schedule.
double sigma_rate(const ScheduleParams& p) {
  return std::log(p.sigma_max / p.sigma_min) / p.T;
}
}  // namespace

double DiffusionProcess::mean_coeff_x0(double tau) const {
  switch (kind_) {
    case ProcessKind::VE: return 1.0;
    case ProcessKind::VP: return std::exp(-0.5 * vp_int_beta(p_, tau));
    case ProcessKind::OUVE: return std::exp(-p_.gamma * tau);
    case ProcessKind::BBED: return 1.0 - tau / p_.T;
  }
  return 0.0;
}

double DiffusionProcess::mean_coeff_y(double tau) const {
  switch (kind_) {
    case ProcessKind::OUVE: return 1.0 - std::exp(-p_.gamma * tau);
    case ProcessKind::BBED: return tau / p_.T;
    default: return 0.0;
  }
}

double DiffusionProcess::kernel_var(double tau) const {
  switch (kind_) {
    case ProcessKind::VE: {
      const double s0 = p_.sigma_min;
      return s0 * s0 * (std::exp(2.0 * sigma_rate(p_) * tau) - 1.0);
    }
    case ProcessKind::VP:
      return 1.0 - std::exp(-vp_int_beta(p_, tau));
    case ProcessKind::OUVE: {
      // Solution of dv/dtau = -2 gamma v + g(tau)^2 with v(0) = 0.
      const double k = sigma_rate(p_);
      const double s0 = p_.sigma_min;
      return (k * s0 * s0 / (p_.gamma + k)) *
             (std::exp(2.0 * k * tau) - std::exp(-2.0 * p_.gamma * tau));
    }
    case ProcessKind::BBED: {
      const double k = p_.bridge_scale;
      return k * k * tau * (p_.T - tau) / p_.T;
    }
  }
  return 0.0;
}

double DiffusionProcess::kernel_std(double tau) const {
  return std::sqrt(std::max(0.0, kernel_var(tau)));
}

double DiffusionProcess::diffusion_coeff(double tau) const {
  switch (kind_) {
    case ProcessKind::VE:
    case ProcessKind::OUVE: {
      const double k = sigma_rate(p_);
      return p_.sigma_min * std::exp(k * tau) * std::sqrt(2.0 * k);
    }
    case ProcessKind::VP:
      return std::sqrt(p_.beta_min +
                       (tau / p_.T) * (p_.beta_max - p_.beta_min));
    case ProcessKind::BBED:
      return p_.bridge_scale;
  }
  return 0.0;
}

std::pair<Vec, double> DiffusionProcess::drift_diffusion(const Vec& x,
                                                         double tau,
                                                         const Vec* y) const {
  if (!x.allFinite()) throw std::invalid_argument("non-finite state");
  check_tau(tau, /*allow_zero=*/false, /*drift_eval=*/true);
  const Vec* yy = check_y(x, y);
  Vec f;
  switch (kind_) {
    case ProcessKind::VE:
      f = Vec::Zero(x.size());
      break;
    case ProcessKind::VP: {
      const double beta =
          p_.beta_min + (tau / p_.T) * (p_.beta_max - p_.beta_min);
      f = -0.5 * beta * x;
      break;
    }
    case ProcessKind::OUVE:
      f = p_.gamma * (*yy - x);
      break;
    case ProcessKind::BBED:
      f = (*yy - x) / (p_.T - tau);
      break;
  }
  return {std::move(f), diffusion_coeff(tau)};
}

KernelMoments DiffusionProcess::kernel_moments(const Vec& x0, double tau,
                                               const Vec* y) const {
  check_tau(tau, /*allow_zero=*/true, /*drift_eval=*/false);
  const Vec* yy = check_y(x0, y);
  KernelMoments m;
  m.mean = mean_coeff_x0(tau) * x0;
  if (yy != nullptr) m.mean += mean_coeff_y(tau) * (*yy);
  m.std = kernel_std(tau);
  return m;
}

Vec DiffusionProcess::sample_kernel(const Vec& x0, double tau, RngStream& rng,
                                    const Vec* y) const {
  KernelMoments m = kernel_moments(x0, tau, y);
  if (m.std == 0.0) return m.mean;
  return m.mean + m.std * rng.normal_vec(x0.size());
}

Vec DiffusionProcess::prior_sample(Eigen::Index dim, RngStream& rng,
                                   const Vec* y, double tau_start) const {
  if (tau_start < 0) tau_start = max_sampling_time();
  check_tau(tau_start, /*allow_zero=*/true, /*drift_eval=*/false);
  switch (kind_) {
    case ProcessKind::VE:
      if (y != nullptr) throw std::invalid_argument("ve does not take y");
      return kernel_std(tau_start) * rng.normal_vec(dim);
    case ProcessKind::VP:
      if (y != nullptr) throw std::invalid_argument("vp does not take y");
      return rng.normal_vec(dim);
    case ProcessKind::OUVE:
    case ProcessKind::BBED: {
      if (y == nullptr)
        throw std::invalid_argument(to_string(kind_) +
                                    " prior requires the warm-init center y");
      if (y->size() != dim) throw std::invalid_argument("y shape mismatch");
      return *y + kernel_std(tau_start) * rng.normal_vec(dim);
    }
  }
  throw std::logic_error("unreachable");
}

Vec DiffusionProcess::denoise_to_x0(const Vec& x_tau, const Vec& score,
                                    double tau, const Vec* y) const {
  check_tau(tau, /*allow_zero=*/true, /*drift_eval=*/false);
  const Vec* yy = check_y(x_tau, y);
  if (score.size() != x_tau.size())
    throw std::invalid_argument("score shape mismatch");
  const double a = mean_coeff_x0(tau);
  if (std::abs(a) < 1e-12)
    throw std::domain_error("kernel numerically singular: a(tau) ~ 0");
  Vec num = x_tau + kernel_var(tau) * score;
  if (yy != nullptr) num -= mean_coeff_y(tau) * (*yy);
  return num / a;
}

}  // namespace diffrestore
