#include "pacs/identity_suite.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include "pacs/error.hpp"
#include "pacs/format.hpp"
#include "pacs/identity_tables.hpp"

namespace pacs {

std::string identity_name(IdentityId id) {
    switch (id) {
        case IdentityId::T1_DOUBLE_COMMUTATOR: return "T1_DOUBLE_COMMUTATOR";
        case IdentityId::PROP82_M1: return "PROP82_M1";
        case IdentityId::PROP82_M2: return "PROP82_M2";
        case IdentityId::PROP82_M3: return "PROP82_M3";
        case IdentityId::LEMMA83_TERMS: return "LEMMA83_TERMS";
        case IdentityId::Q_ROUTE_AGREEMENT: return "Q_ROUTE_AGREEMENT";
    }
    return "UNKNOWN";
}

IdentityId prop82_id(int m) {
    switch (EnergyOrder(m).m) {
        case 1: return IdentityId::PROP82_M1;
        case 2: return IdentityId::PROP82_M2;
        default: return IdentityId::PROP82_M3;
    }
}

double IdentityReport::relative_linf() const {
    return reference_linf > 0.0 ? residual_linf / reference_linf : residual_linf;
}

double IdentityReport::relative_l2() const { return reference_l2 > 0.0 ? residual_l2 / reference_l2 : residual_l2; }

Mat default_lambda(const MatrixField& j) { return j.mean(); }

namespace {

struct Norms {
    double res_inf = 0.0, res_sq = 0.0, ref_inf = 0.0, ref_sq = 0.0;
};

// Streams `residual` and the pointwise `reference`, accumulating both norms.
Norms stream_norms(const terms::Expr& residual, const terms::Expr& reference, const MatrixField& j, const Mat& lambda,
                   const terms::StreamOptions& opts) {
    Norms nm;
    const int e = j.entries();
    terms::evaluate_streaming(
        residual, {reference}, j, lambda,
        [&](std::size_t, std::size_t count, const double* v, const std::vector<const double*>& ex) {
            const double* r = ex[0];
            for (std::size_t i = 0; i < count; ++i) {
                double a = 0.0, b = 0.0;
                for (int c = 0; c < e; ++c) {
                    a += v[i * e + c] * v[i * e + c];
                    b += r[i * e + c] * r[i * e + c];
                }
                nm.res_sq += a;
                nm.ref_sq += b;
                nm.res_inf = std::max(nm.res_inf, std::sqrt(a));
                nm.ref_inf = std::max(nm.ref_inf, std::sqrt(b));
            }
        },
        opts);
    const double w = j.grid().cell_volume;
    nm.res_sq *= w;
    nm.ref_sq *= w;
    return nm;
}

IdentityReport make_report(IdentityId id, int m, const MatrixField& j, const Norms& nm) {
    IdentityReport r;
    r.identity_id = id;
    r.m = m;
    r.dim = j.grid().dim;
    r.grid_N = j.grid().points_per_axis;
    r.residual_linf = nm.res_inf;
    r.residual_l2 = std::sqrt(nm.res_sq);
    r.reference_linf = nm.ref_inf;
    r.reference_l2 = std::sqrt(nm.ref_sq);
    return r;
}

terms::Expr difference(const terms::Expr& a, const terms::Expr& b) {
    return terms::simplify(terms::add({a, terms::scale(-1, b)}));
}

// Pointwise reference, with outer derivatives allowed (the lemma raw terms).
Norms norms_with_field_reference(const terms::Expr& residual, const terms::Expr& reference, const MatrixField& j,
                                 const Mat& lambda, const terms::StreamOptions& opts) {
    MatrixField ref = terms::evaluate(reference, j, lambda, opts);
    Norms nm;
    const int e = j.entries();
    terms::evaluate_streaming(
        residual, {}, j, lambda,
        [&](std::size_t first, std::size_t count, const double* v, const std::vector<const double*>&) {
            for (std::size_t i = 0; i < count; ++i) {
                const double* r = ref.point(first + i);
                double a = 0.0, b = 0.0;
                for (int c = 0; c < e; ++c) {
                    a += v[i * e + c] * v[i * e + c];
                    b += r[c] * r[c];
                }
                nm.res_sq += a;
                nm.ref_sq += b;
                nm.res_inf = std::max(nm.res_inf, std::sqrt(a));
                nm.ref_inf = std::max(nm.ref_inf, std::sqrt(b));
            }
        },
        opts);
    nm.res_sq *= j.grid().cell_volume;
    nm.ref_sq *= j.grid().cell_volume;
    return nm;
}

bool has_outer(const terms::Expr& e) {
    for (const auto& t : e)
        if (!t.outer.empty() || t.outer_lap > 0) return true;
    return false;
}

}  // namespace

MatrixField t_lambda(const AcsField& j, EnergyOrder m, const Mat& lambda0, const terms::StreamOptions& opts) {
    return terms::evaluate(tables::t_lambda(m.m), j, lambda0, opts);
}

IdentityReport check_prop82(const AcsField& j, EnergyOrder m, const Mat& lambda0, const terms::StreamOptions& opts) {
    Norms nm = stream_norms(tables::prop82_residual(m.m), tables::t_m(m.m), j, lambda0, opts);
    return make_report(prop82_id(m.m), m.m, j, nm);
}

std::vector<IdentityReport> check_lemma83_terms(const AcsField& j, const Mat& lambda0,
                                                const terms::StreamOptions& opts) {
    std::vector<IdentityReport> out;
    for (int w = 0; w < tables::kLemmaTerms; ++w) {
        const terms::Expr raw = tables::lemma_raw(w);
        const terms::Expr res = difference(raw, tables::lemma_rewritten(w));
        Norms nm = has_outer(raw) ? norms_with_field_reference(res, raw, j, lambda0, opts)
                                  : stream_norms(res, raw, j, lambda0, opts);
        IdentityReport r = make_report(IdentityId::LEMMA83_TERMS, 3, j, nm);
        r.term = w;
        out.push_back(r);
    }
    return out;
}

IdentityReport check_q_route(const AcsField& j, EnergyOrder m, const terms::StreamOptions& opts) {
    const terms::Expr res = difference(tables::q_compact(m.m), tables::q_expanded(m.m));
    const Mat zero = Mat::Zero(j.rank(), j.rank());
    Norms nm = stream_norms(res, tables::q_compact(m.m), j, zero, opts);
    return make_report(IdentityId::Q_ROUTE_AGREEMENT, m.m, j, nm);
}

IdentityReport check_t1(const AcsField& j, const terms::StreamOptions& opts) {
    const terms::Expr res = difference(tables::t_m(1), tables::t1_double_commutator());
    const Mat zero = Mat::Zero(j.rank(), j.rank());
    Norms nm = stream_norms(res, tables::t_m(1), j, zero, opts);
    return make_report(IdentityId::T1_DOUBLE_COMMUTATOR, 1, j, nm);
}

std::optional<double> fit_rate(const std::vector<IdentityReport>& reports) {
    if (reports.size() < 3) return std::nullopt;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) {
        const double x = std::log(static_cast<double>(r.grid_N));
        const double y = std::log(std::max(r.relative_l2(), std::numeric_limits<double>::min()));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return std::nullopt;
    return -(n * sxy - sx * sy) / den;
}

void assign_rates(std::vector<IdentityReport>& reports) {
    std::map<std::tuple<int, int, int, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        groups[{static_cast<int>(r.identity_id), r.m, r.dim, r.term}].push_back(i);
    }
    for (const auto& [key, idx] : groups) {
        std::vector<IdentityReport> sub;
        for (std::size_t i : idx) sub.push_back(reports[i]);
        const std::optional<double> rate = fit_rate(sub);
        for (std::size_t i : idx) reports[i].convergence_rate = rate;
    }
}

std::vector<IdentityReport> run_refinement(const RefinementCase& c) {
    if (c.grids.empty()) throw ArgumentError("refinement needs at least one grid");
    std::vector<IdentityReport> out;
    for (int n : c.grids) {
        Grid g(c.dim, n);
        AcsField j = random_acs(g, c.band_limit, c.amplitude, c.seed, c.rank);
        const Mat lambda = default_lambda(j);
        std::vector<IdentityReport> rs;
        switch (c.identity) {
            case IdentityId::T1_DOUBLE_COMMUTATOR: rs.push_back(check_t1(j, c.stream)); break;
            case IdentityId::PROP82_M1: rs.push_back(check_prop82(j, EnergyOrder(1), lambda, c.stream)); break;
            case IdentityId::PROP82_M2: rs.push_back(check_prop82(j, EnergyOrder(2), lambda, c.stream)); break;
            case IdentityId::PROP82_M3: rs.push_back(check_prop82(j, EnergyOrder(3), lambda, c.stream)); break;
            case IdentityId::LEMMA83_TERMS: rs = check_lemma83_terms(j, lambda, c.stream); break;
            case IdentityId::Q_ROUTE_AGREEMENT: rs.push_back(check_q_route(j, EnergyOrder(c.m), c.stream)); break;
        }
        for (auto& r : rs) {
            r.band_limit = c.band_limit;
            out.push_back(r);
        }
    }
    assign_rates(out);
    return out;
}

void write_identities_csv(std::ostream& os, const std::vector<IdentityReport>& reports) {
    os << "identity_id,N,band_limit,residual_linf,residual_l2,rate\n";
    for (const auto& r : reports) {
        std::string id = identity_name(r.identity_id);
        if (r.term >= 0) id += "_" + std::to_string(r.term + 1);
        if (r.identity_id == IdentityId::Q_ROUTE_AGREEMENT) id += "_M" + std::to_string(r.m);
        os << id << ',' << r.grid_N << ',' << r.band_limit << ',' << fmt17(r.residual_linf) << ','
           << fmt17(r.residual_l2) << ',';
        if (r.convergence_rate) os << fmt17(*r.convergence_rate);
        os << '\n';
    }
}

}  // namespace pacs
