#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

namespace leakprobe {

// Real-to-complex DFT of length n (bins 0..n/2), unnormalized, e^{-i} sign.
// Plans are created once per length; execution is thread-safe.
std::vector<std::complex<double>> rfft(std::span<const double> input, std::size_t n);

// Periodic Hann window: 0.5 - 0.5 cos(2 pi i / n).
std::vector<double> hann_window(std::size_t n);

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace leakprobe
