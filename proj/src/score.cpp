#include "diffrestore/score.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace diffrestore {

void GaussianMixture::validate() const {
  if (weights.empty() || weights.size() != means.size() ||
      weights.size() != covariances.size())
    throw std::invalid_argument("mixture component lists disagree");
  double sum = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw std::invalid_argument("negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture weights must sum to 1");
  const Eigen::Index d = dim();
  for (std::size_t k = 0; k < components(); ++k) {
    if (means[k].size() != d || covariances[k].rows() != d ||
        covariances[k].cols() != d)
      throw std::invalid_argument("mixture component shape mismatch");
    Eigen::LLT<Mat> llt(covariances[k]);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("mixture covariance not SPD");
  }
}

Vec GaussianMixture::sample(RngStream& rng) const {
  const double u = rng.uniform();
  double acc = 0;
  std::size_t k = 0;
  for (; k + 1 < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) break;
  }
  Eigen::LLT<Mat> llt(covariances[k]);
  return means[k] + llt.matrixL() * rng.normal_vec(dim());
}

namespace {

// Log density of N(x; mu, C) via LDLT.
double gaussian_log_density(const Vec& x, const Vec& mu, const Mat& C) {
  const Eigen::Index d = x.size();
  Eigen::LDLT<Mat> ldlt(C);
  const Vec r = x - mu;
  const double quad = r.dot(ldlt.solve(r));
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * (quad + logdet + d * std::log(2.0 * std::numbers::pi));
}

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double GaussianMixture::log_density(const Vec& x) const {
  std::vector<double> lp(components());
  for (std::size_t k = 0; k < components(); ++k)
    lp[k] = std::log(weights[k]) + gaussian_log_density(x, means[k],
                                                        covariances[k]);
  return log_sum_exp(lp);
}

Vec GaussianMixture::score(const Vec& x) const {
  // Responsibilities via log-sum-exp; score = sum_k r_k * (-C_k^{-1}(x-mu_k)).
  std::vector<double> lp(components());
  std::vector<Vec> grads(components());
  for (std::size_t k = 0; k < components(); ++k) {
    Eigen::LDLT<Mat> ldlt(covariances[k]);
    const Vec r = x - means[k];
    const Vec sol = ldlt.solve(r);
    const double logdet = ldlt.vectorD().array().log().sum();
    lp[k] = std::log(weights[k]) -
            0.5 * (r.dot(sol) + logdet +
                   x.size() * std::log(2.0 * std::numbers::pi));
    grads[k] = -sol;
  }
  const double lse = log_sum_exp(lp);
  if (!std::isfinite(lse))
    throw std::runtime_error("all mixture responsibilities underflow");
  Vec s = Vec::Zero(x.size());
  for (std::size_t k = 0; k < components(); ++k)
    s += std::exp(lp[k] - lse) * grads[k];
  return s;
}

GaussianMixture GaussianMixture::isotropic(const std::vector<double>& weights,
                                           const std::vector<Vec>& means,
                                           double variance) {
  GaussianMixture mix;
  mix.weights = weights;
  mix.means = means;
  const Eigen::Index d = means.empty() ? 0 : means[0].size();
  for (std::size_t k = 0; k < means.size(); ++k)
    mix.covariances.push_back(variance * Mat::Identity(d, d));
  mix.validate();
  return mix;
}

GaussianMixture gmm_marginal(const GaussianMixture& mix,
                             const DiffusionProcess& process, double tau,
                             const Vec* y) {
  const double a = process.mean_coeff_x0(tau);
  const double b = process.mean_coeff_y(tau);
  const double var = process.kernel_var(tau);
  if (process.requires_y() && y == nullptr)
    throw std::invalid_argument("marginal of a task-adapted process needs y");
  GaussianMixture out;
  out.weights = mix.weights;
  const Eigen::Index d = mix.dim();
  for (std::size_t k = 0; k < mix.components(); ++k) {
    Vec m = a * mix.means[k];
    if (y != nullptr) m += b * (*y);
    out.means.push_back(std::move(m));
    out.covariances.push_back(a * a * mix.covariances[k] +
                              var * Mat::Identity(d, d));
  }
  return out;
}

Vec gmm_score(const GaussianMixture& mix, const DiffusionProcess& process,
              const Vec& x, double tau, const Vec* y) {
  return gmm_marginal(mix, process, tau, y).score(x);
}

double gmm_marginal_log_density(const GaussianMixture& mix,
                                const DiffusionProcess& process, const Vec& x,
                                double tau, const Vec* y) {
  return gmm_marginal(mix, process, tau, y).log_density(x);
}

Mat gmm_score_jacobian(const GaussianMixture& mix,
                       const DiffusionProcess& process, const Vec& x,
                       double tau, const Vec* y) {
  // For p = sum w_k N_k:  H = -sum r_k P_k + sum r_k g_k g_k^T - s s^T,
  // with P_k = C_k^{-1}, g_k = -P_k (x - m_k), s = sum r_k g_k.
  const GaussianMixture marg = gmm_marginal(mix, process, tau, y);
  const Eigen::Index d = x.size();
  std::vector<double> lp(marg.components());
  std::vector<Vec> g(marg.components());
  std::vector<Mat> P(marg.components());
  for (std::size_t k = 0; k < marg.components(); ++k) {
    Eigen::LDLT<Mat> ldlt(marg.covariances[k]);
    P[k] = ldlt.solve(Mat::Identity(d, d));
    const Vec r = x - marg.means[k];
    g[k] = -P[k] * r;
    const double logdet = ldlt.vectorD().array().log().sum();
    lp[k] = std::log(marg.weights[k]) -
            0.5 * (r.dot(P[k] * r) + logdet +
                   d * std::log(2.0 * std::numbers::pi));
  }
  const double lse = log_sum_exp(lp);
  Vec s = Vec::Zero(d);
  Mat H = Mat::Zero(d, d);
  for (std::size_t k = 0; k < marg.components(); ++k) {
    const double r_k = std::exp(lp[k] - lse);
    s += r_k * g[k];
    H += r_k * (g[k] * g[k].transpose() - P[k]);
  }
  H -= s * s.transpose();
  return H;
}

GmmScoreField::GmmScoreField(GaussianMixture mix, DiffusionProcess process)
    : mix_(std::move(mix)), process_(std::move(process)) {
  mix_.validate();
}

Vec GmmScoreField::evaluate(const Vec& x, double tau, const Vec* cond) const {
  return gmm_score(mix_, process_, x, tau, cond);
}

Vec GmmScoreField::vjp(const Vec& x, double tau, const Vec& v,
                       const Vec* cond) const {
  // The Hessian of log p is symmetric, so J^T v = J v.
  return gmm_score_jacobian(mix_, process_, x, tau, cond) * v;
}

Vec cfg_mix(const Vec& s_cond, const Vec& s_uncond, double w) {
  if (s_cond.size() != s_uncond.size())
    throw std::invalid_argument("guidance mix shape mismatch");
  return w * s_cond + (1.0 - w) * s_uncond;
}

Vec score_vjp(const ScoreField& field, const Vec& x, double tau, const Vec& v,
              const Vec* cond) {
  if (v.size() != x.size()) throw std::invalid_argument("v shape mismatch");
  return field.vjp(x, tau, v, cond);
}

}  // namespace diffrestore
