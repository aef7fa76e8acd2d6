#pragma once

#include <memory>
#include <vector>

#include "diffrestore/process.hpp"
#include "diffrestore/rng.hpp"

namespace diffrestore {

/// A score field s(x, tau [, cond]) together with the directional derivative
/// needed by posterior sampling.
class ScoreField {
 public:
  virtual ~ScoreField() = default;

  virtual Eigen::Index dim() const = 0;

  virtual Vec evaluate(const Vec& x, double tau,
                       const Vec* cond = nullptr) const = 0;

  /// (ds/dx)^T v at (x, tau).
  virtual Vec vjp(const Vec& x, double tau, const Vec& v,
                  const Vec* cond = nullptr) const = 0;

  /// Whether evaluate(x, tau, nullptr) is meaningful. Fields anchored on a
  /// corrupted signal (task-adapted marginals) return false.
  virtual bool supports_unconditional() const { return true; }
};

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Mat> covariances;

  Eigen::Index dim() const { return means.empty() ? 0 : means[0].size(); }
  std::size_t components() const { return weights.size(); }
  void validate() const;  // weights sum to 1, covariances SPD

  Vec sample(RngStream& rng) const;
  double log_density(const Vec& x) const;
  Vec score(const Vec& x) const;

  static GaussianMixture isotropic(const std::vector<double>& weights,
                                   const std::vector<Vec>& means,
                                   double variance);
};

/// Pushes the mixture through the transition kernel: each component becomes
/// N(a mu_k + b y, a^2 Sigma_k + sigma^2 I).
GaussianMixture gmm_marginal(const GaussianMixture& mix,
                             const DiffusionProcess& process, double tau,
                             const Vec* y = nullptr);

/// Exact score of the kernel marginal of a Gaussian mixture.
Vec gmm_score(const GaussianMixture& mix, const DiffusionProcess& process,
              const Vec& x, double tau, const Vec* y = nullptr);

double gmm_marginal_log_density(const GaussianMixture& mix,
                                const DiffusionProcess& process, const Vec& x,
                                double tau, const Vec* y = nullptr);

/// Jacobian of the marginal score (the Hessian of log p_tau).
Mat gmm_score_jacobian(const GaussianMixture& mix,
                       const DiffusionProcess& process, const Vec& x,
                       double tau, const Vec* y = nullptr);

/// Analytic score field backed by a mixture. For task-adapted processes the
/// anchor y is passed through the conditioning slot.
class GmmScoreField : public ScoreField {
 public:
  GmmScoreField(GaussianMixture mix, DiffusionProcess process);

  Eigen::Index dim() const override { return mix_.dim(); }
  Vec evaluate(const Vec& x, double tau, const Vec* cond) const override;
  Vec vjp(const Vec& x, double tau, const Vec& v,
          const Vec* cond) const override;
  bool supports_unconditional() const override {
    return !process_.requires_y();
  }
  const GaussianMixture& mixture() const { return mix_; }

 private:
  GaussianMixture mix_;
  DiffusionProcess process_;
};

/// Classifier-free guidance mix: w * s_cond + (1 - w) * s_uncond.
Vec cfg_mix(const Vec& s_cond, const Vec& s_uncond, double w);

/// Directional derivative helper, equivalent to field.vjp.
Vec score_vjp(const ScoreField& field, const Vec& x, double tau, const Vec& v,
              const Vec* cond = nullptr);

}  // namespace diffrestore
