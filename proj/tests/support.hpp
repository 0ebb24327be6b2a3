#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "pacs/grid_field.hpp"

namespace pacs::testing {

inline constexpr double kPi = std::numbers::pi;

// Random real trig polynomial matrix field, modes |k_a| <= band.
inline MatrixField random_trig_field(const Grid& g, int rank, int band, unsigned seed, double amp = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    const int n = g.dim;
    const int side = 2 * band + 1;
    int total = 1;
    for (int a = 0; a < n; ++a) total *= side;
    std::vector<std::array<int, kMaxDim>> modes;
    std::vector<Mat> ca, cb;
    for (int m = 0; m < total; ++m) {
        std::array<int, kMaxDim> k{};
        int r = m;
        for (int a = 0; a < n; ++a) {
            k[a] = r % side - band;
            r /= side;
        }
        modes.push_back(k);
        Mat A(rank, rank), B(rank, rank);
        for (int i = 0; i < rank * rank; ++i) {
            A.data()[i] = amp * nd(rng);
            B.data()[i] = amp * nd(rng);
        }
        ca.push_back(A);
        cb.push_back(B);
    }
    return MatrixField::from_function(g, rank, [&](const double* x) {
        Mat v = Mat::Zero(rank, rank);
        for (std::size_t m = 0; m < modes.size(); ++m) {
            double ph = 0.0;
            for (int a = 0; a < n; ++a) ph += modes[m][a] * x[a];
            v += std::cos(ph) * ca[m] + std::sin(ph) * cb[m];
        }
        return v;
    });
}

inline Mat unit(int rank, int i, int j) {
    Mat e = Mat::Zero(rank, rank);
    e(i, j) = 1.0;
    return e;
}

inline double max_diff(const MatrixField& a, const MatrixField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace pacs::testing
