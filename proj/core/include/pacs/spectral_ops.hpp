#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

#include "pacs/grid_field.hpp"

namespace pacs {

// Derivative operator d^counts Lap^lap (counts per axis).
struct DerivOp {
    std::array<int, kMaxDim> counts{};
    int lap = 0;

    int order() const;
    static DerivOp axis(int a, int times = 1);
    static DerivOp laplacian(int times = 1);
    DerivOp operator*(const DerivOp& o) const;
    auto operator<=>(const DerivOp&) const = default;
};

// Half-spectrum of a real multi-channel field. Channel-minor layout.
struct Spectrum {
    Grid grid;
    int channels = 0;
    std::vector<std::complex<double>> data;

    std::size_t num_modes() const { return data.size() / static_cast<std::size_t>(channels); }
};

struct DerivativePlan {
    Grid grid;
    int max_order = 2;
    bool dealias = true;

    DerivativePlan() = default;
    DerivativePlan(const Grid& g, int max_order, bool dealias = true);
};

Spectrum forward(const MatrixField& a);
Spectrum forward(const Grid& g, int channels, const double* data);
MatrixField inverse(const Spectrum& s, int rank);
void inverse(const Spectrum& s, double* out);

// Multiplies every mode by the symbol of `op` using truncated wavenumbers, so
// that Lap equals the sum of second partials exactly on the grid.
void apply(Spectrum& s, const DerivOp& op);
std::complex<double> symbol(const Grid& g, const DerivOp& op, const int* mode_index);

// Zeroes every mode with some |k_a| > N/3.
void truncate_two_thirds(Spectrum& s);

MatrixField derivative(const DerivativePlan& plan, const MatrixField& a, const DerivOp& op);
MatrixField partial(const DerivativePlan& plan, const MatrixField& a, int axis);
MatrixField laplacian(const DerivativePlan& plan, const MatrixField& a);
MatrixField iterated_laplacian(const DerivativePlan& plan, const MatrixField& a, int k);

// Plan-free conveniences (no order limit, no dealiasing).
MatrixField derivative(const MatrixField& a, const DerivOp& op);
MatrixField partial(const MatrixField& a, int axis);
MatrixField laplacian(const MatrixField& a);
MatrixField iterated_laplacian(const MatrixField& a, int k);

// All k-th order partials, one component per sorted multi-index.
struct GradientTensor {
    int order = 0;
    std::vector<std::vector<int>> indices;   // sorted axis lists
    std::vector<int> multiplicity;           // number of orderings of each index
    std::vector<MatrixField> components;

    const MatrixField& operator()(std::vector<int> axes) const;
};
GradientTensor gradient_tensor(const DerivativePlan& plan, const MatrixField& a, int k);

// Pointwise a*b, truncated by the 2/3 rule when plan.dealias is set.
MatrixField product(const DerivativePlan& plan, const MatrixField& a, const MatrixField& b);
MatrixField dealiased(const MatrixField& a);

// Samples the trigonometric interpolant of `a` at offset + j * L / M along
// each axis (source coordinates, M = target.points_per_axis >= N) and stores
// the samples on `target`, whose length only relabels coordinates. Nyquist
// modes are split evenly between +N/2 and -N/2.
MatrixField resample(const MatrixField& a, const Grid& target, const std::vector<double>& offset = {});

// Fourier-side energy sum over modes: integral of |d^op a|^2 via Parseval.
double spectral_norm_sq(const Spectrum& s, const DerivOp& op);

}  // namespace pacs
