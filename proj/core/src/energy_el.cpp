#include "pacs/energy_el.hpp"

#include <map>
#include <random>
#include <tuple>

#include "pacs/error.hpp"
#include "pacs/identity_tables.hpp"
#include "pacs/parallel.hpp"
#include "pacs/spectral_ops.hpp"
#include "pacs/term_eval.hpp"

namespace pacs {

EnergyOrder::EnergyOrder(int order) : m(order) {
    if (order < 1 || order > 3) throw ArgumentError("m must be one of {1,2,3}, got " + std::to_string(order));
}

namespace {

DerivOp axis_op(int a) { return DerivOp::axis(a, 1); }

// Lazily computed derivatives of one field.
class DerivCache {
public:
    explicit DerivCache(const MatrixField& f) : f_(f), spec_(forward(f)) {}

    const MatrixField& get(const DerivOp& op) {
        auto it = cache_.find(op);
        if (it != cache_.end()) return it->second;
        Spectrum s = spec_;
        apply(s, op);
        return cache_.emplace(op, inverse(s, f_.rank())).first->second;
    }

private:
    const MatrixField& f_;
    Spectrum spec_;
    std::map<DerivOp, MatrixField> cache_;
};

// Expansion of an axis sequence applied to a product of `nf` factors:
// (op per factor) -> multiplicity.
using Split = std::map<std::vector<DerivOp>, double>;

Split leibniz(const std::vector<int>& axes, int nf) {
    Split out;
    const std::size_t L = axes.size();
    std::vector<int> who(L, 0);
    while (true) {
        std::vector<DerivOp> ops(nf);
        for (std::size_t i = 0; i < L; ++i) ops[who[i]].counts[axes[i]] += 1;
        out[ops] += 1.0;
        std::size_t p = 0;
        while (p < L && ++who[p] == nf) who[p++] = 0;
        if (p == L) break;
    }
    return out;
}

// Axis sequences of Lap^k (each i repeated) optionally preceded by axis p.
std::vector<std::vector<int>> lap_sequences(int n, int k, int lead_axis) {
    std::vector<std::vector<int>> out;
    std::vector<int> idx(k, 0);
    while (true) {
        std::vector<int> seq;
        if (lead_axis >= 0) seq.push_back(lead_axis);
        for (int i : idx) {
            seq.push_back(i);
            seq.push_back(i);
        }
        out.push_back(seq);
        int p = 0;
        while (p < k && ++idx[p] == n) idx[p++] = 0;
        if (p == k) break;
    }
    return out;
}

Split merged(const std::vector<std::vector<int>>& seqs, int nf) {
    Split all;
    for (const auto& s : seqs)
        for (const auto& [ops, c] : leibniz(s, nf)) all[ops] += c;
    return all;
}

// D = Lap^k (lead_axis < 0) or d_p Lap^{k-1}.
struct TopOp {
    std::vector<std::vector<int>> seqs;
    DerivOp op;
};

TopOp make_top(int n, int k, int lead_axis) {
    TopOp t;
    t.seqs = lap_sequences(n, lead_axis >= 0 ? k - 1 : k, lead_axis);
    t.op = lead_axis >= 0 ? DerivOp::axis(lead_axis) * DerivOp::laplacian(k - 1) : DerivOp::laplacian(k);
    return t;
}

// D(J T J) - J D(T) J via the Leibniz expansion
MatrixField r1(DerivCache& cj, DerivCache& ct, const TopOp& top, const Grid& g, int rank) {
    MatrixField acc(g, rank);
    const Split sp = merged(top.seqs, 3);
    for (const auto& [ops, c] : sp) {
        if (ops[0].order() == 0 && ops[2].order() == 0) continue;
        acc.axpy(c, multiply(multiply(cj.get(ops[0]), ct.get(ops[1])), cj.get(ops[2])));
    }
    return acc;
}

// D(J J) - D(J) J - J D(J)
MatrixField r2(DerivCache& cj, const TopOp& top, const Grid& g, int rank) {
    MatrixField acc(g, rank);
    const Split sp = merged(top.seqs, 2);
    for (const auto& [ops, c] : sp) {
        if (ops[0].order() == 0 || ops[1].order() == 0) continue;
        acc.axpy(c, multiply(cj.get(ops[0]), cj.get(ops[1])));
    }
    return acc;
}

// D [J, T] - [D J, T] - [J, D T]
MatrixField commutator_cross(DerivCache& cj, DerivCache& ct, const TopOp& top, const Grid& g, int rank) {
    MatrixField acc(g, rank);
    const Split sp = merged(top.seqs, 2);
    for (const auto& [ops, c] : sp) {
        if (ops[0].order() == 0 || ops[1].order() == 0) continue;
        acc.axpy(c, commutator(cj.get(ops[0]), ct.get(ops[1])));
    }
    return acc;
}

void check_pair(const MatrixField& j, const MatrixField& t) { check_same_shape(j, t, "energy_el"); }

}  // namespace

double energy(const MatrixField& j, EnergyOrder m) {
    Spectrum s = forward(j);
    if (m.even()) return spectral_norm_sq(s, DerivOp::laplacian(m.k()));
    double e = 0.0;
    for (int a = 0; a < j.grid().dim; ++a) e += spectral_norm_sq(s, axis_op(a) * DerivOp::laplacian(m.k() - 1));
    return e;
}

MatrixField polyharmonic(const MatrixField& j, EnergyOrder m) { return iterated_laplacian(j, m.m); }

double first_variation(const MatrixField& j, const MatrixField& s, EnergyOrder m) {
    check_pair(j, s);
    const double sign = (m.m % 2 == 0) ? 1.0 : -1.0;
    return sign * 2.0 * field_inner_product(polyharmonic(j, m), s);
}

TangentField riemannian_gradient(const AcsField& j, EnergyOrder m) {
    const double sign = (m.m % 2 == 0) ? 1.0 : -1.0;
    MatrixField g = project_tangent(j, polyharmonic(j.field(), m));
    g *= 2.0 * sign;
    return g;
}

MatrixField el_residual(const MatrixField& j, EnergyOrder m) { return commutator(polyharmonic(j, m), j); }

MatrixField el_residual_tangential(const MatrixField& j, EnergyOrder m) {
    MatrixField l = polyharmonic(j, m);
    return l + multiply(multiply(j, l), j);
}

MatrixField q_m(const MatrixField& j, EnergyOrder m) {
    MatrixField l = polyharmonic(j, m);
    MatrixField q = multiply(l, j) + multiply(j, l);
    q *= -1.0;
    return q;
}

MatrixField q_m_expanded(const MatrixField& j, EnergyOrder m) {
    return terms::evaluate(tables::q_expanded(m.m), j, Mat::Zero(j.rank(), j.rank()));
}

MatrixField t_m(const MatrixField& j, EnergyOrder m) {
    MatrixField q = q_m(j, m);
    return multiply(j, q) + multiply(q, j);
}

MatrixField t1_double_commutator(const MatrixField& j) {
    MatrixField acc(j.grid(), j.rank());
    for (int a = 0; a < j.grid().dim; ++a) {
        MatrixField d = partial(j, a);
        acc += commutator(d, commutator(d, j));
    }
    return acc;
}

WeakFormSample weak_form_residual(const AcsField& jf, EnergyOrder m, const MatrixField& t) {
    const MatrixField& j = jf.field();
    check_pair(j, t);
    const Grid& g = j.grid();
    const int n = g.dim, r = j.rank(), k = m.k();
    DerivCache cj(j), ct(t);
    WeakFormSample out;
    out.test_field = t;
    double lead = 0.0, lower = 0.0;
    if (m.even()) {
        const TopOp top = make_top(n, k, -1);
        const MatrixField& x = cj.get(top.op);
        lead = field_inner_product(x, ct.get(top.op));
        lower += field_inner_product(x, r1(cj, ct, top, g, r));
        MatrixField r2j = multiply(r2(cj, top, g, r), j);
        for (int p = 0; p < n; ++p)
            lower += field_inner_product(partial(r2j, p), ct.get(axis_op(p) * DerivOp::laplacian(k - 1)));
    } else {
        for (int p = 0; p < n; ++p) {
            const TopOp top = make_top(n, k, p);
            const MatrixField& x = cj.get(top.op);
            lead += field_inner_product(x, ct.get(top.op));
            lower += field_inner_product(x, r1(cj, ct, top, g, r));
            MatrixField r2j = multiply(r2(cj, top, g, r), j);
            lower += field_inner_product(partial(r2j, p), ct.get(DerivOp::laplacian(k - 1)));
        }
    }
    out.lhs_value = lead;
    out.residual = lead + 0.5 * lower;
    return out;
}

WeakFormSample commutator_weak_residual(const AcsField& jf, EnergyOrder m, const MatrixField& t) {
    const MatrixField& j = jf.field();
    check_pair(j, t);
    const Grid& g = j.grid();
    const int n = g.dim, r = j.rank(), k = m.k();
    DerivCache cj(j), ct(t);
    WeakFormSample out;
    out.test_field = t;
    double lead = 0.0, cross = 0.0;
    auto one = [&](const TopOp& top) {
        const MatrixField& x = cj.get(top.op);
        lead += field_inner_product(x, commutator(j, ct.get(top.op)));
        cross += field_inner_product(x, commutator_cross(cj, ct, top, g, r));
    };
    if (m.even()) one(make_top(n, k, -1));
    else
        for (int p = 0; p < n; ++p) one(make_top(n, k, p));
    out.lhs_value = lead;
    out.residual = lead + cross;
    return out;
}

double commutator_cancellation(const MatrixField& j, EnergyOrder m, const MatrixField& t) {
    check_pair(j, t);
    const int n = j.grid().dim, k = m.k();
    DerivCache cj(j);
    if (m.even()) {
        const MatrixField& x = cj.get(DerivOp::laplacian(k));
        return field_inner_product(x, commutator(x, t));
    }
    double s = 0.0;
    for (int p = 0; p < n; ++p) {
        const MatrixField& x = cj.get(axis_op(p) * DerivOp::laplacian(k - 1));
        s += field_inner_product(x, commutator(x, t));
    }
    return s;
}

double cm_proxy_norm(const MatrixField& t, int m) {
    if (m < 0) throw ArgumentError("cm_proxy_norm: negative order");
    DerivCache c(t);
    const Grid& g = t.grid();
    const int n = g.dim;
    double total = linf_matrix_norm(t);
    for (int l = 1; l <= m; ++l) {
        // all sorted multi-indices of length l, weighted by their orderings
        std::vector<double> sq(g.num_points(), 0.0);
        std::vector<int> idx(l, 0);
        while (true) {
            DerivOp op;
            double mult = 1.0;
            for (int a : idx) op.counts[a] += 1;
            {
                double f = 1.0;
                for (int i = 2; i <= l; ++i) f *= i;
                for (int a = 0; a < n; ++a)
                    for (int i = 2; i <= op.counts[a]; ++i) f /= i;
                mult = f;
            }
            const MatrixField& d = c.get(op);
            parallel_for(g.num_points(), [&](std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) sq[i] += mult * ConstMatMap(d.point(i), t.rank(), t.rank()).squaredNorm();
            });
            // next non-decreasing index tuple
            int p = l - 1;
            while (p >= 0 && idx[p] == n - 1) --p;
            if (p < 0) break;
            ++idx[p];
            for (int q = p + 1; q < l; ++q) idx[q] = idx[p];
        }
        double mx = 0.0;
        for (double v : sq) mx = std::max(mx, v);
        total += std::sqrt(mx);
    }
    return total;
}

MatrixField random_test_field(const Grid& g, int rank, int band, std::uint64_t seed, int m) {
    if (band < 1 || 4 * band > g.points_per_axis) throw ArgumentError("test field band must lie in [1, N/4]");
    MatrixField t = random_skew_field(g, band, 1.0, seed, rank);
    // add a symmetric part so T is a general (1,1) tensor
    MatrixField s = random_skew_field(g, band, 1.0, seed ^ 0x5bd1e995u, rank);
    t += multiply(s, s);
    t *= 1.0 / cm_proxy_norm(t, m);
    return t;
}

}  // namespace pacs
