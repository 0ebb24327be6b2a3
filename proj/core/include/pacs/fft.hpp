#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace pacs::fft {

using cplx = std::complex<double>;

// Multi-channel real transforms over a row-major box of extent `dims`, with
// `channels` interleaved values per point (point-major, channel-minor).
// Output layout has the last axis halved to dims.back()/2+1. Transforms are
// unnormalized. An empty `dims` is a single point (copy).
void r2c(const std::vector<int>& dims, int channels, const double* in, cplx* out);
// `in` is clobbered.
void c2r(const std::vector<int>& dims, int channels, cplx* in, double* out);

std::size_t real_size(const std::vector<int>& dims);
std::size_t half_size(const std::vector<int>& dims);

// Signed wavenumber of FFT index i on an axis with n points.
inline int wavenumber(int i, int n) { return i <= n / 2 ? i : i - n; }
// Same, with the Nyquist mode mapped to zero.
inline double truncated_wavenumber(int i, int n) { return (2 * i == n) ? 0.0 : static_cast<double>(wavenumber(i, n)); }

}  // namespace pacs::fft
