#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace diffrestore {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Deterministic random stream. Every draw consumes a fixed number of engine
/// outputs, so sequences are reproducible bit-for-bit across platforms with
/// the same seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two engine outputs.
  double normal();

  Vec normal_vec(Eigen::Index n);

 private:
  std::mt19937_64 engine_;
};

/// Derives a child seed from a base seed and a named stream. Used to split
/// one experiment seed into independent streams ("train", "sample", "kernel",
/// "mc", ...) so that adding draws to one subsystem does not shift another.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index = 0);

/// Number of worker threads honoring the DIFFRESTORE_THREADS cap.
int thread_budget();

/// Runs body(i) for i in [0, n). Work is split across threads but every
/// result must be written to a caller-owned slot indexed by i, which keeps
/// outputs independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace diffrestore
