#include "diffrestore/verify.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace diffrestore {

namespace {

// Substep grid for the forward simulation on [0, tau].
std::vector<double> forward_grid(const DiffusionProcess& process, double tau,
                                 int substeps) {
  std::vector<double> s(substeps + 1);
  if (process.kind() == ProcessKind::BBED) {
    // Geometric in distance to the pin: d_i = T (d_end / T)^(i/N).
    const double T = process.horizon();
    const double d_end = std::max(T - tau, 1e-12);
    for (int i = 0; i <= substeps; ++i) {
      const double d = T * std::pow(d_end / T, double(i) / substeps);
      s[i] = T - d;
    }
    s.front() = 0.0;
    s.back() = tau;
  } else {
    for (int i = 0; i <= substeps; ++i) s[i] = tau * double(i) / substeps;
  }
  return s;
}

}  // namespace

McEstimate mc_forward(const DiffusionProcess& process, const Vec& x0,
                      double tau, int paths, int substeps, std::uint64_t seed,
                      const Vec* y) {
  if (paths < 1000) throw std::invalid_argument("need paths >= 1000");
  if (substeps < 100) throw std::invalid_argument("need substeps >= 100");
  const Eigen::Index d = x0.size();
  const std::vector<double> grid = forward_grid(process, tau, substeps);

  Mat finals(d, paths);
  parallel_for(static_cast<std::size_t>(paths), [&](std::size_t p) {
    RngStream rng(derive_seed(seed, "mc", p));
    Vec x = x0;
    for (int i = 0; i < substeps; ++i) {
      const double s = grid[i];
      const double h = grid[i + 1] - grid[i];
      auto [f, g] = process.drift_diffusion(
          x, std::max(s, 1e-300), y);  // drift at the left endpoint
      x += h * f + g * std::sqrt(h) * rng.normal_vec(d);
    }
    finals.col(static_cast<Eigen::Index>(p)) = x;
  });

  McEstimate est;
  est.paths = paths;
  est.mean = finals.rowwise().mean();
  Vec var(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double m = est.mean[i];
    var[i] = (finals.row(i).array() - m).square().sum() / (paths - 1);
  }
  est.std = var.cwiseSqrt();
  est.std_error = est.std / std::sqrt(double(paths));
  est.std_std_error = est.std / std::sqrt(2.0 * (paths - 1));
  return est;
}

GaussianPosterior exact_linear_gaussian_posterior(const Vec& prior_mean,
                                                  const Mat& prior_cov,
                                                  const Mat& A, double sigma_y,
                                                  const Vec& y) {
  if (!(sigma_y > 0)) throw std::invalid_argument("sigma_y must be > 0");
  const Eigen::Index m = A.rows();
  Mat S = A * prior_cov * A.transpose();
  S.diagonal().array() += sigma_y * sigma_y;
  Eigen::LDLT<Mat> ldlt(S);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("singular measurement system");
  const Mat K = prior_cov * A.transpose() * ldlt.solve(Mat::Identity(m, m));
  GaussianPosterior post;
  post.mean = prior_mean + K * (y - A * prior_mean);
  post.cov = prior_cov - K * A * prior_cov;
  // Symmetrize to keep downstream factorizations happy.
  post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
  return post;
}

Mat probe_matrix(const std::function<Vec(const Vec&)>& apply,
                 Eigen::Index dim) {
  Vec e = Vec::Zero(dim);
  e[0] = 1.0;
  Vec first = apply(e);
  Mat A(first.size(), dim);
  A.col(0) = first;
  for (Eigen::Index j = 1; j < dim; ++j) {
    e.setZero();
    e[j] = 1.0;
    A.col(j) = apply(e);
  }
  return A;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& fn, const Vec& x,
                     double eps) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = eps * std::max(1.0, std::abs(x[i]));
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = fn(xp);
    xp[i] = xi - h;
    const double fm = fn(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace diffrestore
