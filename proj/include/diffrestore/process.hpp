#pragma once

#include <optional>
#include <string>
#include <utility>

#include "diffrestore/rng.hpp"

namespace diffrestore {

enum class ProcessKind { VE, VP, OUVE, BBED };

ProcessKind process_kind_from_string(const std::string& s);
std::string to_string(ProcessKind kind);

/// Schedule parameters for the four process families. Only the fields of the
/// active family matter; the rest keep their defaults.
struct ScheduleParams {
  double T = 1.0;
  double tau_eps = 1e-3;
  // VE / OUVE noise schedule sigma(tau) = sigma_min * (sigma_max/sigma_min)^(tau/T).
  double sigma_min = 0.01;
  double sigma_max = 10.0;
  // VP: beta(tau) = beta_min + (tau/T) * (beta_max - beta_min).
  double beta_min = 0.1;
  double beta_max = 20.0;
  // OUVE mean-reversion stiffness.
  double gamma = 1.5;
  // BBED diffusion scale.
  double bridge_scale = 1.0;
};

struct KernelMoments {
  Vec mean;
  double std = 0.0;
};

/// Affine-drift forward diffusion with a closed-form Gaussian transition
/// kernel: x_tau | x_0 [, y]  ~  N(a(tau) x0 + b(tau) y, sigma(tau)^2 I).
///
/// VE   : zero drift, exploding variance.
/// VP   : mean shrinks to 0, variance saturates at 1.
/// OUVE : mean decays exponentially from x0 toward the corrupted signal y.
/// BBED : bridge pinned at y, mean moves linearly from x0 to y.
class DiffusionProcess {
 public:
  static DiffusionProcess ve(const ScheduleParams& p = {});
  static DiffusionProcess vp(const ScheduleParams& p = {});
  static DiffusionProcess ouve(const ScheduleParams& p = {});
  static DiffusionProcess bbed(const ScheduleParams& p = {});
  static DiffusionProcess make(ProcessKind kind, const ScheduleParams& p);

  ProcessKind kind() const { return kind_; }
  const ScheduleParams& params() const { return p_; }
  bool requires_y() const {
    return kind_ == ProcessKind::OUVE || kind_ == ProcessKind::BBED;
  }
  double horizon() const { return p_.T; }
  double tau_eps() const { return p_.tau_eps; }

  /// Largest process time usable for sampling. Equals T except for BBED,
  /// whose drift has a pole at T; reverse integration then starts slightly
  /// inside the bridge.
  double max_sampling_time() const;

  /// Kernel mean coefficients: mean = a(tau) x0 + b(tau) y.
  double mean_coeff_x0(double tau) const;
  double mean_coeff_y(double tau) const;
  double kernel_var(double tau) const;
  double kernel_std(double tau) const;
  /// Scalar diffusion coefficient g(tau).
  double diffusion_coeff(double tau) const;

  /// Drift f(x, tau [, y]) and diffusion coefficient g(tau).
  std::pair<Vec, double> drift_diffusion(const Vec& x, double tau,
                                         const Vec* y = nullptr) const;

  KernelMoments kernel_moments(const Vec& x0, double tau,
                               const Vec* y = nullptr) const;

  /// Draws x_tau = mean + sigma * eps. tau = 0 is allowed here (degenerate
  /// draw equal to the mean).
  Vec sample_kernel(const Vec& x0, double tau, RngStream& rng,
                    const Vec* y = nullptr) const;

  /// Initial state of the reverse process. VE/VP are centered at zero;
  /// OUVE/BBED start from a Gaussian around the corrupted signal
  /// (warm initialization). tau_start < 0 means max_sampling_time().
  Vec prior_sample(Eigen::Index dim, RngStream& rng, const Vec* y = nullptr,
                   double tau_start = -1.0) const;

  /// One-step estimate of x0 from the state and its score:
  /// x0_hat = (x_tau + sigma^2 * score - b y) / a.
  Vec denoise_to_x0(const Vec& x_tau, const Vec& score, double tau,
                    const Vec* y = nullptr) const;

 private:
  DiffusionProcess(ProcessKind kind, const ScheduleParams& p);

  void check_tau(double tau, bool allow_zero, bool drift_eval) const;
  const Vec* check_y(const Vec& x, const Vec* y) const;

  ProcessKind kind_;
  ScheduleParams p_;
};

}  // namespace diffrestore
