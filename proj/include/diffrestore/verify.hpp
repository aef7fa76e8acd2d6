#pragma once

#include <cstdint>
#include <functional>

#include "diffrestore/process.hpp"
#include "diffrestore/rng.hpp"

namespace diffrestore {

/// Moment estimates from forward Monte-Carlo simulation.
struct McEstimate {
  Vec mean;
  Vec std;
  Vec std_error;     // standard error of the mean: std / sqrt(paths)
  Vec std_std_error; // standard error of the std estimate itself
  int paths = 0;
};

/// Simulates the forward SDE from x0 to tau with Euler-Maruyama and returns
/// per-dimension moment estimates. Substep spacing is uniform except for
/// BBED, where steps shrink geometrically toward the bridge pin at T (the
/// stiff drift needs h < T - s for stability).
McEstimate mc_forward(const DiffusionProcess& process, const Vec& x0,
                      double tau, int paths, int substeps, std::uint64_t seed,
                      const Vec* y = nullptr);

struct GaussianPosterior {
  Vec mean;
  Mat cov;
};

/// Exact posterior of x given y = A x + n, n ~ N(0, sigma_y^2 I), with prior
/// x ~ N(prior_mean, prior_cov).
GaussianPosterior exact_linear_gaussian_posterior(const Vec& prior_mean,
                                                  const Mat& prior_cov,
                                                  const Mat& A, double sigma_y,
                                                  const Vec& y);

/// Materializes a linear map as a matrix by probing canonical basis vectors.
Mat probe_matrix(const std::function<Vec(const Vec&)>& apply, Eigen::Index dim);

/// Central-difference gradient of a scalar function. eps is relative to the
/// coordinate magnitude (with an absolute floor).
Vec finite_diff_grad(const std::function<double(const Vec&)>& fn, const Vec& x,
                     double eps = 1e-5);

}  // namespace diffrestore
