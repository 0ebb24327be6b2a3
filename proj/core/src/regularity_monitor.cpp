#include "pacs/regularity_monitor.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "pacs/error.hpp"
#include "pacs/fft.hpp"
#include "pacs/format.hpp"
#include "pacs/parallel.hpp"
#include "pacs/spectral_ops.hpp"

namespace pacs {

namespace {

void check_ball(const Grid& g, const BallSpec& ball) {
    if (static_cast<int>(ball.center.size()) != g.dim) throw DimensionError("ball center has the wrong dimension");
    for (int c : ball.center)
        if (c < 0 || c >= g.points_per_axis) throw ArgumentError("ball center outside the grid");
    if (!(ball.radius > 0.0) || !(ball.radius < 0.5 * g.length))
        throw ArgumentError("ball radius must lie in (0, L/2), got " + std::to_string(ball.radius));
}

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// Fourier transform of the ball indicator at |xi| = rho.
double ball_transform(int n, double rho, double r) {
    const double pi = std::numbers::pi;
    if (rho == 0.0) return std::pow(pi, 0.5 * n) * std::pow(r, n) / std::tgamma(0.5 * n + 1.0);
    return std::pow(2.0 * pi * r / rho, 0.5 * n) * std::cyl_bessel_j(0.5 * n, rho * r);
}

std::vector<double> powered(const std::vector<double>& f, double q) {
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = std::pow(f[i], q);
    return out;
}

double energy_from_norms(const Grid& g, const std::vector<std::vector<double>>& norms, const BallSpec& ball, int m,
                         BallQuadrature q) {
    const std::vector<double> qs = q_exponents(m, g.dim);
    double e = 0.0;
    for (int l = 1; l <= m; ++l) {
        const double ql = qs[l - 1];
        const double integral = ball_integral(g, powered(norms[l - 1], ql), ball, q);
        const double w = std::pow(ball.radius, l * ql - g.dim);
        e += std::pow(std::max(0.0, w * integral), 1.0 / ql);
    }
    return e;
}

double dp_from_norm(const Grid& g, const std::vector<double>& grad, const BallSpec& ball, double p,
                    BallQuadrature q) {
    const double integral = ball_integral(g, powered(grad, p), ball, q);
    return std::pow(std::max(0.0, std::pow(ball.radius, p - g.dim) * integral), 1.0 / p);
}

}  // namespace

std::vector<double> q_exponents(int m, int n) {
    if (m < 1) throw ArgumentError("q_exponents: m must be positive");
    std::vector<double> q;
    for (int l = 1; l <= m; ++l) {
        const double inv = 0.5 - static_cast<double>(m - l) / n;
        if (!(inv > 0.0)) throw ArgumentError("q_exponents: dimension too small for order m");
        q.push_back(1.0 / inv);
    }
    return q;
}

std::vector<double> gradient_norm(const MatrixField& u, int l) {
    if (l < 1) throw ArgumentError("gradient_norm: order must be positive");
    const Grid& g = u.grid();
    const int n = g.dim, e = u.entries();
    const std::size_t np = g.num_points();
    std::vector<DerivOp> ops;
    std::vector<double> mults;
    std::vector<int> idx(l, 0);
    while (true) {
        DerivOp op;
        for (int a : idx) op.counts[a] += 1;
        double mult = factorial(l);
        for (int a = 0; a < n; ++a) mult /= factorial(op.counts[a]);
        ops.push_back(op);
        mults.push_back(mult);
        int p = l - 1;
        while (p >= 0 && idx[p] == n - 1) --p;
        if (p < 0) break;
        ++idx[p];
        for (int q = p + 1; q < l; ++q) idx[q] = idx[p];
    }
    std::vector<double> sq(np, 0.0), chan(np), buf(np);
    for (int c = 0; c < e; ++c) {
        for (std::size_t i = 0; i < np; ++i) chan[i] = u.point(i)[c];
        const Spectrum s = forward(g, 1, chan.data());
        for (std::size_t k = 0; k < ops.size(); ++k) {
            Spectrum d = s;
            apply(d, ops[k]);
            inverse(d, buf.data());
            const double mult = mults[k];
            parallel_for(np, [&](std::size_t b, std::size_t end) {
                for (std::size_t i = b; i < end; ++i) sq[i] += mult * buf[i] * buf[i];
            });
        }
    }
    for (double& v : sq) v = std::sqrt(v);
    return sq;
}

double ball_integral(const Grid& g, const std::vector<double>& f, const BallSpec& ball, BallQuadrature q) {
    check_ball(g, ball);
    if (f.size() != g.num_points()) throw DimensionError("ball_integral: sample count");
    const int n = g.dim, N = g.points_per_axis;
    if (q == BallQuadrature::Indicator) {
        const double r2 = ball.radius * ball.radius;
        double sum = 0.0;
        int ix[kMaxDim];
        for (std::size_t i = 0; i < g.num_points(); ++i) {
            g.unravel(i, ix);
            double d2 = 0.0;
            for (int a = 0; a < n; ++a) {
                int d = std::abs(ix[a] - ball.center[a]);
                d = std::min(d, N - d);
                d2 += (d * g.spacing) * (d * g.spacing);
            }
            if (d2 <= r2) sum += f[i];
        }
        return sum * g.cell_volume;
    }
    const std::vector<int> dims(n, N);
    std::vector<fft::cplx> spec(fft::half_size(dims));
    fft::r2c(dims, 1, f.data(), spec.data());
    const int half = N / 2 + 1;
    const double ws = g.wave_scale();
    double total = 0.0;
    int k[kMaxDim];
    for (std::size_t i = 0; i < spec.size(); ++i) {
        std::size_t r = i;
        k[n - 1] = static_cast<int>(r % half);
        r /= half;
        for (int a = n - 2; a >= 0; --a) {
            k[a] = static_cast<int>(r % N);
            r /= N;
        }
        double rho2 = 0.0, ph = 0.0;
        for (int a = 0; a < n; ++a) {
            const double w = ws * fft::wavenumber(k[a], N);
            rho2 += w * w;
            ph += w * ball.center[a] * g.spacing;
        }
        const double weight = (k[n - 1] == 0 || 2 * k[n - 1] == N) ? 1.0 : 2.0;
        total += weight * (spec[i] * std::polar(1.0, ph)).real() * ball_transform(n, std::sqrt(rho2), ball.radius);
    }
    return total / static_cast<double>(g.num_points());
}

double normalized_energy(const MatrixField& u, const BallSpec& ball, int m, BallQuadrature q) {
    const Grid& g = u.grid();
    check_ball(g, ball);
    if (g.dim < 2 * m) throw ArgumentError("normalized_energy needs grid dim >= 2m");
    std::vector<std::vector<double>> norms;
    for (int l = 1; l <= m; ++l) norms.push_back(gradient_norm(u, l));
    return energy_from_norms(g, norms, ball, m, q);
}

double morrey_dp(const MatrixField& u, const BallSpec& ball, double p, BallQuadrature q) {
    if (!(p > 1.0)) throw ArgumentError("morrey_dp needs p > 1");
    check_ball(u.grid(), ball);
    return dp_from_norm(u.grid(), gradient_norm(u, 1), ball, p, q);
}

double rescale_check(const AcsField& jf, const std::vector<int>& x0, double r0, int m) {
    const MatrixField& j = jf.field();
    const Grid& g = j.grid();
    if (m == 0) m = g.dim / 2;
    if (!(r0 > 0.0) || r0 > 1.0) throw ArgumentError("rescale_check needs r0 in (0, 1]");
    const BallSpec outer{x0, r0};
    check_ball(g, outer);
    const int M = static_cast<int>(std::lround(g.points_per_axis / r0));
    const Grid target(g.dim, M, g.length / r0);
    MatrixField scaled;
    if (M == g.points_per_axis) {
        scaled = MatrixField(target, j.rank());
        int ix[kMaxDim];
        for (std::size_t i = 0; i < g.num_points(); ++i) {
            g.unravel(i, ix);
            for (int a = 0; a < g.dim; ++a) ix[a] = (ix[a] + x0[a]) % g.points_per_axis;
            std::copy_n(j.point(g.ravel(ix)), j.entries(), scaled.point(i));
        }
    } else {
        std::vector<double> offset(g.dim);
        for (int a = 0; a < g.dim; ++a) offset[a] = x0[a] * g.spacing;
        scaled = resample(j, target, offset);
    }
    const double e0 = normalized_energy(j, outer, m, BallQuadrature::Spectral);
    const double e1 =
        normalized_energy(scaled, BallSpec{std::vector<int>(g.dim, 0), 1.0}, m, BallQuadrature::Spectral);
    const double diff = std::abs(e1 - e0);
    return e0 > 0.0 ? diff / e0 : diff;
}

namespace {

DecayProfile ladder(const Grid& g, const std::vector<std::vector<double>>& norms, const std::vector<int>& x0,
                    double r_max, double theta, int levels, int m, const DecayConfig& cfg) {
    check_ball(g, BallSpec{x0, r_max});
    DecayProfile d;
    d.m = m;
    d.p0 = p0_exponent(m);
    d.center = x0;
    double r = r_max;
    for (int lv = 0; lv < levels; ++lv, r *= theta) {
        if (r < 2.0 * g.spacing) {
            d.degraded = true;
            break;
        }
        const BallSpec b{x0, r};
        d.radii.push_back(r);
        d.e_values.push_back(energy_from_norms(g, norms, b, m, BallQuadrature::Indicator));
        d.dp0_values.push_back(dp_from_norm(g, norms[0], b, d.p0, BallQuadrature::Indicator));
    }
    const double bound = std::pow(theta, cfg.tau);
    for (std::size_t l = 0; l + 1 < d.radii.size(); ++l) {
        if (d.e_values[l] <= cfg.eps0 && d.dp0_values[l + 1] > bound * d.dp0_values[l]) {
            ++d.alarms;
            d.alarm_levels.push_back(static_cast<int>(l));
        }
    }
    d.fitted_alpha = std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = d.radii.size();
    if (k >= 3) {
        bool ok = true;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = k - 3; i < k; ++i) {
            if (!(d.dp0_values[i] > 0.0)) ok = false;
            const double x = std::log(d.radii[i]);
            const double y = ok ? std::log(d.dp0_values[i]) : 0.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        if (ok) d.fitted_alpha = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
    }
    return d;
}

}  // namespace

std::vector<DecayProfile> decay_profiles(const MatrixField& j, const std::vector<std::vector<int>>& centers,
                                         double r_max, double theta, int levels, int m, const DecayConfig& cfg) {
    const Grid& g = j.grid();
    if (!(theta > 0.0) || theta > 0.5) throw ArgumentError("decay_profile needs theta in (0, 1/2]");
    if (levels < 3) throw ArgumentError("decay_profile needs at least 3 levels");
    if (m < 1 || 2 * m > g.dim) throw ArgumentError("decay_profile needs 1 <= m <= dim/2");
    for (const auto& c : centers) check_ball(g, BallSpec{c, r_max});
    std::vector<std::vector<double>> norms;
    for (int l = 1; l <= m; ++l) norms.push_back(gradient_norm(j, l));
    std::vector<DecayProfile> out;
    for (const auto& c : centers) out.push_back(ladder(g, norms, c, r_max, theta, levels, m, cfg));
    return out;
}

DecayProfile decay_profile(const MatrixField& j, const std::vector<int>& x0, double r_max, double theta, int levels,
                           int m, const DecayConfig& cfg) {
    return decay_profiles(j, {x0}, r_max, theta, levels, m, cfg).front();
}

void write_decay_csv(std::ostream& os, const std::vector<DecayProfile>& profiles) {
    os << "center,radius,E,Dp0,alpha_fit\n";
    for (const auto& d : profiles) {
        std::string c;
        for (std::size_t a = 0; a < d.center.size(); ++a) c += (a ? ":" : "") + std::to_string(d.center[a]);
        for (std::size_t i = 0; i < d.radii.size(); ++i) {
            os << c << ',' << fmt17(d.radii[i]) << ',' << fmt17(d.e_values[i]) << ',' << fmt17(d.dp0_values[i]) << ','
               << (std::isnan(d.fitted_alpha) ? std::string("nan") : fmt17(d.fitted_alpha)) << '\n';
        }
    }
}

}  // namespace pacs
