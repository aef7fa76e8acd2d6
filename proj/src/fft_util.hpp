#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "diffrestore/rng.hpp"

namespace diffrestore::fftutil {

using CVec = Eigen::VectorXcd;

inline CVec fft(const Vec& x) {
  Eigen::FFT<double> f;
  std::vector<std::complex<double>> out;
  std::vector<double> in(x.data(), x.data() + x.size());
  f.fwd(out, in);
  return Eigen::Map<const CVec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

inline Vec ifft_real(const CVec& X) {
  Eigen::FFT<double> f;
  std::vector<std::complex<double>> in(X.data(), X.data() + X.size());
  std::vector<double> out;
  f.inv(out, in);
  return Eigen::Map<const Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

/// Frequency in Hz of full-spectrum bin i for an n-point transform.
inline double bin_freq_hz(Eigen::Index i, Eigen::Index n, double fs) {
  const Eigen::Index k = std::min(i, n - i);
  return fs * double(k) / double(n);
}

}  // namespace diffrestore::fftutil
