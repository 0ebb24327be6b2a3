#include "pacs/acs_core.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "pacs/error.hpp"
#include "pacs/fft.hpp"
#include "pacs/parallel.hpp"

namespace pacs {

AcsField AcsField::trusted(MatrixField f, double tol) {
    AcsField a;
    a.field_ = std::move(f);
    a.constraint_tol_ = tol;
    return a;
}

ConstraintDefects measure_constraints(const MatrixField& a) {
    const int r = a.rank();
    const std::size_t np = a.num_points();
    std::vector<double> sq(np), sk(np);
    parallel_for(np, [&](std::size_t b, std::size_t e) {
        Mat id = Mat::Identity(r, r);
        for (std::size_t i = b; i < e; ++i) {
            auto j = a.at(i);
            sq[i] = (j * j + id).norm();
            sk[i] = (j + j.transpose()).norm();
        }
    });
    ConstraintDefects d;
    double worst = -1.0;
    for (std::size_t i = 0; i < np; ++i) {
        d.max_sq_defect = std::max(d.max_sq_defect, sq[i]);
        d.max_skew_defect = std::max(d.max_skew_defect, sk[i]);
        const double w = std::max(sq[i], sk[i]);
        if (w > worst) {
            worst = w;
            d.worst_index = i;
        }
    }
    return d;
}

AcsField validate_acs(const MatrixField& a, double tol) {
    if (a.rank() % 2 != 0) throw DimensionError("almost complex structures need an even matrix size");
    if (!a.all_finite()) throw ArgumentError("field contains non-finite entries");
    auto d = measure_constraints(a);
    if (d.max_sq_defect > tol || d.max_skew_defect > tol)
        throw ConstraintViolation(d.max_sq_defect, d.max_skew_defect, d.worst_index);
    return AcsField::trusted(a, tol);
}

TangentDefects tangent_defect(const AcsField& j, const MatrixField& s) {
    check_same_shape(j.field(), s, "tangent_defect");
    TangentDefects t;
    t.anticommute = parallel_max(s.num_points(), [&](std::size_t b, std::size_t e) {
        double m = 0.0;
        for (std::size_t i = b; i < e; ++i) m = std::max(m, (s.at(i) * j.field().at(i) + j.field().at(i) * s.at(i)).norm());
        return m;
    });
    t.skew = parallel_max(s.num_points(), [&](std::size_t b, std::size_t e) {
        double m = 0.0;
        for (std::size_t i = b; i < e; ++i) m = std::max(m, (s.at(i) + s.at(i).transpose()).norm());
        return m;
    });
    return t;
}

MatrixField project_tangent(const MatrixField& j, const MatrixField& t) {
    check_same_shape(j, t, "project_tangent");
    MatrixField out(t.grid(), t.rank());
    parallel_for(t.num_points(), [&](std::size_t b, std::size_t e) {
        Mat u;
        for (std::size_t i = b; i < e; ++i) {
            auto ji = j.at(i);
            u = t.at(i) + ji * t.at(i) * ji;
            out.at(i) = 0.25 * (u - u.transpose());
        }
    });
    return out;
}

MatrixField project_tangent(const AcsField& j, const MatrixField& t) { return project_tangent(j.field(), t); }

Mat expm(const Mat& x, int terms) {
    if (terms < 1) throw ArgumentError("expm needs at least one series term");
    const double nrm = x.lpNorm<1>();
    int s = 0;
    if (nrm > 0.5) s = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
    const Mat y = x / std::ldexp(1.0, s);
    const auto n = x.rows();
    Mat result = Mat::Identity(n, n);
    Mat term = Mat::Identity(n, n);
    for (int k = 1; k <= terms; ++k) {
        term = term * y / static_cast<double>(k);
        result += term;
    }
    for (int i = 0; i < s; ++i) result = result * result;
    return result;
}

void renormalize_acs(Mat& j) {
    const auto n = j.rows();
    Mat x = 0.5 * (j - j.transpose());
    const Mat id = Mat::Identity(n, n);
    for (int it = 0; it < 2; ++it) x = 0.5 * x * (3.0 * id - x.transpose() * x);
    j = 0.5 * (x - x.transpose());
}

AcsField retract(const AcsField& j, const TangentField& s, double t, const RetractionParams& params) {
    check_same_shape(j.field(), s, "retract");
    if (t == 0.0) return j;
    const MatrixField& jf = j.field();
    MatrixField out(jf.grid(), jf.rank());
    parallel_for(jf.num_points(), [&](std::size_t b, std::size_t e) {
        Mat y;
        for (std::size_t i = b; i < e; ++i) {
            auto ji = jf.at(i);
            y = ji * expm(t * (s.at(i) * ji), params.exp_terms);
            if (params.renormalize) renormalize_acs(y);
            out.at(i) = y;
        }
    });
    auto d = measure_constraints(out);
    const double drift = std::max(d.max_sq_defect, d.max_skew_defect);
    if (drift > j.constraint_tol()) throw RetractFailure(drift, j.constraint_tol());
    return AcsField::trusted(std::move(out), j.constraint_tol());
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

MatrixField random_skew_field(const Grid& g, int band, double amp, std::uint64_t seed, int rank) {
    if (rank <= 0) rank = g.dim;
    if (band < 0 || 2 * band >= g.points_per_axis) throw ArgumentError("band_limit must satisfy 0 <= band < N/2");
    const int n = g.dim;
    const int npa = g.points_per_axis;
    const int side = 2 * band + 1;
    std::size_t nmodes = 1;
    for (int a = 0; a < n; ++a) nmodes *= static_cast<std::size_t>(side);
    const int npairs = rank * (rank - 1) / 2;
    const double scale = amp / std::sqrt(static_cast<double>(nmodes));

    std::vector<int> dims(n, npa);
    const std::size_t hs = fft::half_size(dims);
    std::vector<std::complex<double>> spec(hs * npairs, 0.0);
    auto half_index = [&](const int* k) {
        std::size_t idx = 0;
        for (int a = 0; a < n - 1; ++a) idx = idx * npa + static_cast<std::size_t>((k[a] + npa) % npa);
        return idx * (npa / 2 + 1) + static_cast<std::size_t>(k[n - 1]);
    };
    int k[kMaxDim], mk[kMaxDim];
    for (std::size_t m = 0; m < nmodes; ++m) {
        std::size_t r = m;
        for (int a = n - 1; a >= 0; --a) {
            k[a] = static_cast<int>(r % side) - band;
            r /= side;
        }
        for (int a = 0; a < n; ++a) mk[a] = -k[a];
        std::mt19937_64 rng(splitmix64(splitmix64(seed) ^ (m * 0x100000001b3ull + 1)));
        std::normal_distribution<double> nd;
        for (int p = 0; p < npairs; ++p) {
            const double ca = nd(rng), cb = nd(rng);
            // a cos(k.x) + b sin(k.x) = Re[(a - i b) e^{ik.x}]
            const std::complex<double> c(0.5 * scale * ca, -0.5 * scale * cb);
            if (k[n - 1] > 0) {
                spec[half_index(k) * npairs + p] += c;
            } else if (k[n - 1] < 0) {
                spec[half_index(mk) * npairs + p] += std::conj(c);
            } else {
                spec[half_index(k) * npairs + p] += c;
                spec[half_index(mk) * npairs + p] += std::conj(c);
            }
        }
    }
    std::vector<double> vals(g.num_points() * npairs);
    fft::c2r(dims, npairs, spec.data(), vals.data());

    MatrixField a(g, rank);
    parallel_for(g.num_points(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double* p = a.point(i);
            int c = 0;
            for (int r0 = 0; r0 < rank; ++r0)
                for (int c0 = r0 + 1; c0 < rank; ++c0, ++c) {
                    p[r0 * rank + c0] = vals[i * npairs + c];
                    p[c0 * rank + r0] = -vals[i * npairs + c];
                }
        }
    });
    return a;
}

AcsField random_acs(const Grid& g, int band, double amp, std::uint64_t seed, int rank) {
    if (rank <= 0) rank = g.dim;
    if (rank % 2 != 0) throw DimensionError("almost complex structures need an even matrix size");
    if (band < 0 || 2 * band >= g.points_per_axis) throw ArgumentError("band_limit must satisfy 0 <= band < N/2");
    const Mat js = j_std(rank);
    if (amp == 0.0) return AcsField::trusted(MatrixField::constant(g, js));
    MatrixField a = random_skew_field(g, band, amp, seed, rank);
    MatrixField out(g, rank);
    parallel_for(g.num_points(), [&](std::size_t b, std::size_t e) {
        Mat r, y;
        for (std::size_t i = b; i < e; ++i) {
            r = expm(a.at(i));
            y = r * js * r.transpose();
            renormalize_acs(y);
            out.at(i) = y;
        }
    });
    return AcsField::trusted(std::move(out));
}

}  // namespace pacs
