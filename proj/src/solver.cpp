#include "diffrestore/solver.hpp"

#include <cmath>
#include <stdexcept>

namespace diffrestore {

GridScheme grid_scheme_from_string(const std::string& s) {
  if (s == "uniform") return GridScheme::Uniform;
  if (s == "log") return GridScheme::LogSigma;
  throw std::invalid_argument("unknown grid scheme: " + s);
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "em") return SolverKind::Em;
  if (s == "ode" || s == "ode_euler") return SolverKind::OdeEuler;
  if (s == "heun" || s == "ode_heun") return SolverKind::OdeHeun;
  throw std::invalid_argument("unknown solver: " + s);
}

std::string to_string(SolverKind s) {
  switch (s) {
    case SolverKind::Em: return "em";
    case SolverKind::OdeEuler: return "ode_euler";
    case SolverKind::OdeHeun: return "ode_heun";
  }
  return "?";
}

TimeGrid discretize_uniform(double T, double tau_eps, int steps) {
  if (steps < 1) throw std::invalid_argument("need steps >= 1");
  if (!(T > tau_eps)) throw std::invalid_argument("need T > tau_eps");
  TimeGrid g;
  g.taus.resize(steps + 1);
  for (int i = 0; i <= steps; ++i)
    g.taus[i] = T - (T - tau_eps) * double(i) / steps;
  g.taus.front() = T;
  g.taus.back() = tau_eps;
  return g;
}

namespace {

// Inverts kernel_std by bisection on [lo, hi]; requires monotone growth.
double invert_sigma(const DiffusionProcess& p, double target, double lo,
                    double hi) {
  double flo = p.kernel_std(lo), fhi = p.kernel_std(hi);
  if (!(flo < fhi))
    throw std::invalid_argument(
        "log grid needs a strictly increasing noise schedule on the range");
  if (target <= flo) return lo;
  if (target >= fhi) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (p.kernel_std(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TimeGrid discretize(const DiffusionProcess& process, int steps,
                    GridScheme scheme, double tau_start) {
  if (steps < 1) throw std::invalid_argument("need steps >= 1");
  if (tau_start < 0) tau_start = process.max_sampling_time();
  const double tau_eps = process.tau_eps();
  if (!(tau_start > tau_eps))
    throw std::invalid_argument("tau_start must exceed tau_eps");
  if (scheme == GridScheme::Uniform)
    return discretize_uniform(tau_start, tau_eps, steps);

  // Geometric spacing in sigma, mapped back through the schedule. Guard
  // against non-monotone schedules (the bridge variance past its apex).
  const double s_hi = process.kernel_std(tau_start);
  const double s_lo = process.kernel_std(tau_eps);
  if (!(s_hi > s_lo))
    throw std::invalid_argument(
        "log grid needs a strictly increasing noise schedule on the range");
  TimeGrid g;
  g.taus.resize(steps + 1);
  g.taus.front() = tau_start;
  g.taus.back() = tau_eps;
  for (int i = 1; i < steps; ++i) {
    const double s = s_hi * std::pow(s_lo / s_hi, double(i) / steps);
    g.taus[i] = invert_sigma(process, s, tau_eps, tau_start);
  }
  for (int i = 0; i < steps; ++i)
    if (!(g.taus[i] > g.taus[i + 1]))
      throw std::runtime_error("time grid is not strictly decreasing");
  return g;
}

Vec reverse_step_em(const DiffusionProcess& process, const ScoreFn& score,
                    const Vec& x, double tau, double dtau, RngStream& rng,
                    const Vec* y) {
  if (!(dtau < 0)) throw std::invalid_argument("reverse step needs dtau < 0");
  auto [f, g] = process.drift_diffusion(x, tau, y);
  const Vec s = score(x, tau);
  return x + (f - g * g * s) * dtau +
         g * std::sqrt(-dtau) * rng.normal_vec(x.size());
}

Vec reverse_step_ode(const DiffusionProcess& process, const ScoreFn& score,
                     const Vec& x, double tau, double dtau, int order,
                     const Vec* y) {
  if (!(dtau < 0)) throw std::invalid_argument("reverse step needs dtau < 0");
  if (order != 1 && order != 2)
    throw std::invalid_argument("ode step order must be 1 or 2");
  auto [f, g] = process.drift_diffusion(x, tau, y);
  const Vec slope = f - 0.5 * g * g * score(x, tau);
  Vec x_euler = x + slope * dtau;
  if (order == 1) return x_euler;
  const double tau2 = tau + dtau;
  auto [f2, g2] = process.drift_diffusion(x_euler, tau2, y);
  const Vec slope2 = f2 - 0.5 * g2 * g2 * score(x_euler, tau2);
  return x + 0.5 * (slope + slope2) * dtau;
}

ScoreFn field_score_fn(const ScoreField& field, const Vec* cond, double w) {
  if (cond != nullptr && w != 1.0) {
    if (!field.supports_unconditional())
      throw std::invalid_argument(
          "guidance weight != 1 needs an unconditional branch");
    Vec c = *cond;
    return [&field, c, w](const Vec& x, double tau) {
      return cfg_mix(field.evaluate(x, tau, &c), field.evaluate(x, tau),
                     w);
    };
  }
  if (cond != nullptr) {
    Vec c = *cond;
    return [&field, c](const Vec& x, double tau) {
      return field.evaluate(x, tau, &c);
    };
  }
  return [&field](const Vec& x, double tau) { return field.evaluate(x, tau); };
}

Vec run_reverse(const DiffusionProcess& process, const ScoreFn& score,
                const TimeGrid& grid, SolverKind solver, Vec x, RngStream& rng,
                const Vec* y,
                const std::function<void(int, double, Vec&)>& post_step,
                std::vector<TrajectoryRow>* trajectory) {
  const int N = static_cast<int>(grid.taus.size()) - 1;
  for (int n = 0; n < N; ++n) {
    const double tau = grid.taus[n];
    const double dtau = grid.taus[n + 1] - tau;
    switch (solver) {
      case SolverKind::Em:
        x = reverse_step_em(process, score, x, tau, dtau, rng, y);
        break;
      case SolverKind::OdeEuler:
        x = reverse_step_ode(process, score, x, tau, dtau, 1, y);
        break;
      case SolverKind::OdeHeun:
        x = reverse_step_ode(process, score, x, tau, dtau, 2, y);
        break;
    }
    if (post_step) post_step(n, grid.taus[n + 1], x);
    if (!x.allFinite())
      throw NonFiniteState("non-finite state after step " + std::to_string(n),
                           n);
    if (trajectory)
      trajectory->push_back({n, grid.taus[n + 1],
                             process.kernel_std(grid.taus[n + 1]), x.norm()});
  }
  return x;
}

Vec sample(const DiffusionProcess& process, const ScoreField& field,
           const SamplerConfig& cfg, RngStream& rng, const Vec* y,
           const Vec* cond, std::vector<TrajectoryRow>* trajectory) {
  const TimeGrid grid = discretize(process, cfg.steps, cfg.scheme);
  const Vec* proc_y = process.requires_y() ? y : nullptr;
  if (process.requires_y() && y == nullptr)
    throw std::invalid_argument("task-adapted sampling requires y");
  // Task-adapted fields see the anchor through the conditioning slot.
  const Vec* eff_cond = cond != nullptr ? cond : proc_y;
  Vec x = process.prior_sample(field.dim(), rng, proc_y, grid.taus.front());
  const ScoreFn score = field_score_fn(field, eff_cond, cfg.guidance_weight);
  x = run_reverse(process, score, grid, cfg.solver, std::move(x), rng, proc_y,
                  {}, trajectory);
  if (cfg.final_denoise)
    x = process.denoise_to_x0(x, score(x, process.tau_eps()), process.tau_eps(),
                              proc_y);
  return x;
}

}  // namespace diffrestore
