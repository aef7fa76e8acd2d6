#pragma once

#include <cstdint>
#include <string>

#include "diffrestore/rng.hpp"

namespace diffrestore {

enum class OperatorKind {
  Identity,
  Mask,
  Fir,
  Rir,
  ParametricLowpass,
  BrickwallLowpass
};

std::string to_string(OperatorKind k);

/// Box bounds with a logit reparameterization, so unconstrained gradient
/// steps can never leave the box.
struct BoundedParams {
  Vec lo, hi;
  Vec to_unconstrained(const Vec& phi) const;
  Vec to_constrained(const Vec& u) const;
  /// d phi / d u, elementwise.
  Vec chain_rule(const Vec& u) const;
};

/// Signal degradation A(.): masking, FIR/RIR convolution, and frequency-
/// domain lowpass filters. All kinds here are linear in the signal; the
/// parametric lowpass additionally exposes gradients in its parameters
/// phi = (cutoff_hz, slope_db_per_octave).
class DegradationOperator {
 public:
  static DegradationOperator identity();
  static DegradationOperator mask(const Vec& m);
  /// Zero-padded linear convolution truncated to the input length.
  static DegradationOperator fir(const Vec& taps);
  static DegradationOperator rir(const Vec& taps);
  /// Ideal lowpass realized as an FFT-bin mask (zero phase).
  static DegradationOperator brickwall_lowpass(double cutoff_hz,
                                               double sample_rate);
  /// Piecewise magnitude response: unit gain up to the cutoff, then a
  /// constant dB-per-octave rolloff, applied multiplicatively in the FFT
  /// domain (zero phase).
  static DegradationOperator parametric_lowpass(double cutoff_hz,
                                                double slope_db_oct,
                                                double sample_rate);

  OperatorKind kind() const { return kind_; }
  bool linear() const { return true; }
  double sample_rate() const { return fs_; }
  double cutoff_hz() const;
  const Vec& mask_vector() const;
  const Vec& taps() const;

  Vec apply(const Vec& x) const;
  /// A^T v; equals apply for the self-adjoint kinds.
  Vec adjoint(const Vec& v) const;
  /// Gradient of <A(x), v> with respect to x.
  Vec grad_x(const Vec& x, const Vec& v) const;
  /// Gradient of <A_phi(x), v> with respect to phi (parametric lowpass only).
  Vec grad_phi(const Vec& x, const Vec& v) const;

  Vec phi() const;
  void set_phi(const Vec& phi);
  const BoundedParams& phi_bounds() const;

 private:
  DegradationOperator() = default;

  OperatorKind kind_ = OperatorKind::Identity;
  Vec mask_;
  Vec taps_;
  double fs_ = 16000.0;
  double cutoff_ = 0.0;
  double slope_ = 0.0;
  BoundedParams bounds_;
};

/// Gain of the parametric lowpass on a frequency grid (linear scale).
Vec parametric_response(const Vec& phi, const Vec& freq_hz);

/// Windowed-sinc lowpass taps (Hamming window), unit DC gain.
Vec design_fir_lowpass(double cutoff_hz, double sample_rate, int n_taps);

/// Exponentially decaying white-noise room response, unit energy.
Vec synthetic_rir(double sample_rate, double t60_s, double duration_s,
                  std::uint64_t seed);

/// Single-column CSV of filter taps.
Vec load_taps_csv(const std::string& path);

}  // namespace diffrestore
