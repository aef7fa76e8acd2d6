#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffrestore/process.hpp"
#include "diffrestore/score.hpp"

namespace diffrestore {

enum class GridScheme { Uniform, LogSigma };
enum class SolverKind { Em, OdeEuler, OdeHeun };

GridScheme grid_scheme_from_string(const std::string& s);
SolverKind solver_kind_from_string(const std::string& s);
std::string to_string(SolverKind s);

/// Strictly decreasing process times from the sampling start down to tau_eps.
struct TimeGrid {
  std::vector<double> taus;  // size steps + 1
};

struct SamplerConfig {
  int steps = 50;
  GridScheme scheme = GridScheme::Uniform;
  SolverKind solver = SolverKind::Em;
  double guidance_weight = 1.0;
  std::uint64_t seed = 0;
  bool final_denoise = true;
};

/// Builds the reverse-time grid. Uniform spacing, or geometric in the kernel
/// std inverted through the schedule ("log"); the latter requires a schedule
/// that is strictly increasing on the grid range.
TimeGrid discretize(const DiffusionProcess& process, int steps,
                    GridScheme scheme, double tau_start = -1.0);

/// Plain arithmetic grid from T down to tau_eps, independent of any process.
TimeGrid discretize_uniform(double T, double tau_eps, int steps);

/// Score callback used by the step primitives; restore loops substitute a
/// posterior score here.
using ScoreFn = std::function<Vec(const Vec&, double)>;

/// One Euler-Maruyama step of the reverse SDE (dtau < 0):
/// x + [f - g^2 s] dtau + g sqrt(|dtau|) eps.
Vec reverse_step_em(const DiffusionProcess& process, const ScoreFn& score,
                    const Vec& x, double tau, double dtau, RngStream& rng,
                    const Vec* y = nullptr);

/// One step of the probability-flow ODE, dx = [f - 1/2 g^2 s] dtau.
/// order 1 = Euler, order 2 = Heun (trapezoidal correction, two score
/// evaluations).
Vec reverse_step_ode(const DiffusionProcess& process, const ScoreFn& score,
                     const Vec& x, double tau, double dtau, int order,
                     const Vec* y = nullptr);

struct TrajectoryRow {
  int step;
  double tau;
  double sigma;
  double state_norm;
};

class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(const std::string& what, int step)
      : std::runtime_error(what), step_index(step) {}
  int step_index;
};

/// Wraps a ScoreField as a ScoreFn, applying guidance mixing when
/// w != 1 and conditioning is present.
ScoreFn field_score_fn(const ScoreField& field, const Vec* cond, double w);

/// Full generation loop: prior sample, N reverse steps, final one-step
/// denoise at tau_eps. Deterministic per seed (and across seeds for the ODE
/// solvers given the same initial state).
Vec sample(const DiffusionProcess& process, const ScoreField& field,
           const SamplerConfig& cfg, RngStream& rng, const Vec* y = nullptr,
           const Vec* cond = nullptr,
           std::vector<TrajectoryRow>* trajectory = nullptr);

/// Same loop but from a caller-provided initial state and score callback;
/// building block for the posterior samplers.
Vec run_reverse(const DiffusionProcess& process, const ScoreFn& score,
                const TimeGrid& grid, SolverKind solver, Vec x, RngStream& rng,
                const Vec* y = nullptr,
                const std::function<void(int, double, Vec&)>& post_step = {},
                std::vector<TrajectoryRow>* trajectory = nullptr);

}  // namespace diffrestore
