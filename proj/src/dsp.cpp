#include "leakprobe/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "leakprobe/error.hpp"

namespace leakprobe {

namespace {

// fftw_plan_* is not thread-safe; fftw_execute_dft_r2c on a finished plan
// is, provided the arrays match the plan's alignment assumptions, which
// FFTW_UNALIGNED relaxes.
fftw_plan plan_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  std::vector<double> in(n);
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw Error(ErrorKind::invalid_argument, "cannot plan FFT of length " + std::to_string(n));
  plans.emplace(n, p);
  return p;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> input, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, "FFT length must be positive");
  if (input.size() > n) throw Error(ErrorKind::invalid_argument, "FFT input longer than transform");
  std::vector<double> in(n, 0.0);
  std::copy(input.begin(), input.end(), in.begin());
  std::vector<std::complex<double>> out(n / 2 + 1);
  // std::complex<double> is layout-compatible with fftw_complex.
  fftw_execute_dft_r2c(plan_for(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

}  // namespace leakprobe
