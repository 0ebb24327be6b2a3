#pragma once

#include <iosfwd>
#include <vector>

#include "pacs/acs_core.hpp"
#include "pacs/grid_field.hpp"

namespace pacs {

struct BallSpec {
    std::vector<int> center;  // grid multi-index
    double radius = 1.0;
};

enum class BallQuadrature {
    Indicator,  // sum over grid points within the radius
    Spectral,   // exact integral of the trigonometric interpolant
};

// 1/q_l = 1/2 - (m - l)/n, l = 1..m (entry l - 1).
std::vector<double> q_exponents(int m, int n);
inline double p0_exponent(int m) { return 4.0 * m / 3.0; }

// Pointwise |grad^l u| (Frobenius over all ordered multi-indices).
std::vector<double> gradient_norm(const MatrixField& u, int l);

// Integral of a grid function over a ball.
double ball_integral(const Grid& g, const std::vector<double>& f, const BallSpec& ball, BallQuadrature q);

// sum_l (r^{l q_l - n} int_{B_r} |grad^l u|^{q_l})^{1/q_l}
double normalized_energy(const MatrixField& u, const BallSpec& ball, int m,
                         BallQuadrature q = BallQuadrature::Indicator);
// (r^{p - n} int_{B_r} |grad u|^p)^{1/p}
double morrey_dp(const MatrixField& u, const BallSpec& ball, double p, BallQuadrature q = BallQuadrature::Indicator);

// |E(J_{x0,r0}; 0, 1) - E(J; x0, r0)| / E(J; x0, r0) with J_{x0,r0}(x) = J(x0 + r0 x)
// sampled on a torus of length L / r0. m = 0 means grid dim / 2.
double rescale_check(const AcsField& j, const std::vector<int>& x0, double r0, int m = 0);

struct DecayConfig {
    double eps0 = 0.05;
    double tau = 0.5;
};

struct DecayProfile {
    int m = 1;
    double p0 = 4.0 / 3.0;
    std::vector<int> center;
    std::vector<double> radii;
    std::vector<double> dp0_values;
    std::vector<double> e_values;
    double fitted_alpha = 0.0;  // NaN when undefined
    int alarms = 0;
    std::vector<int> alarm_levels;  // level l: alarm between radii l and l + 1
    bool degraded = false;          // radii below 2h were dropped
};

// Radii r_max theta^j, j = 0..levels-1, keeping those >= 2h.
DecayProfile decay_profile(const MatrixField& j, const std::vector<int>& x0, double r_max, double theta, int levels,
                           int m, const DecayConfig& cfg = {});
// Same ladder at several centers, sharing the derivative work.
std::vector<DecayProfile> decay_profiles(const MatrixField& j, const std::vector<std::vector<int>>& centers,
                                         double r_max, double theta, int levels, int m, const DecayConfig& cfg = {});

// center,radius,E,Dp0,alpha_fit ; center as i0:i1:...
void write_decay_csv(std::ostream& os, const std::vector<DecayProfile>& profiles);

}  // namespace pacs
