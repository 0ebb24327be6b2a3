#include "pacs/optimizer.hpp"

#include <cmath>
#include <ostream>

#include "pacs/error.hpp"
#include "pacs/fft.hpp"
#include "pacs/format.hpp"
#include "pacs/parallel.hpp"
#include "pacs/spectral_ops.hpp"

namespace pacs {

std::string status_name(RunStatus s) {
    switch (s) {
        case RunStatus::CONVERGED: return "CONVERGED";
        case RunStatus::MAX_ITERS: return "MAX_ITERS";
        case RunStatus::LINE_SEARCH_FAILED: return "LINE_SEARCH_FAILED";
    }
    return "UNKNOWN";
}

void OptimizerConfig::validate() const {
    EnergyOrder check(m);
    if (max_iters < 0) throw ArgumentError("max_iters must be non-negative");
    if (!(grad_tol > 0.0)) throw ArgumentError("grad_tol must be positive");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ArgumentError("armijo_c must lie in (0, 1)");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) throw ArgumentError("backtrack_factor must lie in (0, 1)");
    if (!(initial_step > 0.0)) throw ArgumentError("initial_step must be positive");
    if (renormalize_every < 1) throw ArgumentError("renormalize_every must be positive");
    if (log_every < 1) throw ArgumentError("log_every must be positive");
    if (!(min_step > 0.0)) throw ArgumentError("min_step must be positive");
}

TangentField descent_direction(const AcsField& j, EnergyOrder m) {
    TangentField s = riemannian_gradient(j, m);
    s *= -1.0;
    return s;
}

TangentField preconditioned_direction(const AcsField& j, const TangentField& grad, EnergyOrder m,
                                      Preconditioner p) {
    if (p == Preconditioner::None) {
        TangentField s = grad;
        s *= -1.0;
        return s;
    }
    const Grid& g = grad.grid();
    Spectrum s = forward(grad);
    const int n = g.dim, N = g.points_per_axis, half = N / 2 + 1, ch = s.channels;
    const double ws = g.wave_scale();
    parallel_for(s.num_modes(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            std::size_t r = i;
            double k2 = 0.0;
            const double kl = ws * fft::truncated_wavenumber(static_cast<int>(r % half), N);
            k2 += kl * kl;
            r /= half;
            for (int a = 0; a < n - 1; ++a) {
                const double ka = ws * fft::truncated_wavenumber(static_cast<int>(r % N), N);
                k2 += ka * ka;
                r /= N;
            }
            const double f = 0.5 / (1.0 + std::pow(k2, m.m));
            for (int c = 0; c < ch; ++c) s.data[i * ch + c] *= f;
        }
    });
    TangentField d = project_tangent(j, inverse(s, grad.rank()));
    d *= -1.0;
    return d;
}

namespace {

double drift(const MatrixField& j) {
    const ConstraintDefects d = measure_constraints(j);
    return std::max(d.max_sq_defect, d.max_skew_defect);
}

}  // namespace

std::pair<AcsField, RunReport> minimize(const AcsField& j0, const OptimizerConfig& cfg, const IterateSink& sink) {
    cfg.validate();
    const EnergyOrder m(cfg.m);
    AcsField j = j0;
    RunReport rep;
    double e = energy(j, m);
    TangentField grad = riemannian_gradient(j, m);
    double gn = l2_norm(grad);
    double el = l2_norm(el_residual(j, m));
    rep.initial_energy = e;
    rep.initial_el_residual = el;

    auto log = [&](int it, double step, bool force) {
        if (!force && it % cfg.log_every != 0) return;
        IterateRecord r{it, e, gn, el, drift(j), step};
        rep.iterates.push_back(r);
        if (sink) sink(r);
    };
    log(0, 0.0, true);

    double prev = cfg.initial_step;
    int it = 0;
    rep.status = RunStatus::MAX_ITERS;
    while (true) {
        if (gn <= cfg.grad_tol) {
            rep.status = RunStatus::CONVERGED;
            break;
        }
        if (it >= cfg.max_iters) break;
        ++it;
        const TangentField dir = preconditioned_direction(j, grad, m, cfg.preconditioner);
        const double slope = field_inner_product(grad, dir);
        if (!(slope < 0.0)) {
            rep.status = RunStatus::LINE_SEARCH_FAILED;
            break;
        }
        RetractionParams rp;
        rp.renormalize = it % cfg.renormalize_every == 0;
        double t = std::min(cfg.initial_step, 2.0 * prev);
        bool accepted = false;
        AcsField next;
        double en = 0.0;
        while (t >= cfg.min_step) {
            next = retract(j, dir, t, rp);
            en = energy(next, m);
            if (en <= e + cfg.armijo_c * t * slope && en < e) {
                accepted = true;
                break;
            }
            t *= cfg.backtrack_factor;
        }
        if (!accepted) {
            rep.status = RunStatus::LINE_SEARCH_FAILED;
            --it;
            break;
        }
        j = std::move(next);
        e = en;
        prev = t;
        grad = riemannian_gradient(j, m);
        gn = l2_norm(grad);
        el = l2_norm(el_residual(j, m));
        log(it, t, gn <= cfg.grad_tol || it == cfg.max_iters);
    }
    if (rep.iterates.back().iter != it) log(it, prev, true);
    rep.iterations = it;
    rep.final_energy = e;
    rep.final_grad_norm = gn;
    rep.final_el_residual = el;
    return {std::move(j), std::move(rep)};
}

void write_run_csv_header(std::ostream& os) { os << "iter,energy,grad_norm,el_residual,constraint_drift,step\n"; }

void write_run_csv_row(std::ostream& os, const IterateRecord& r) {
    os << r.iter << ',' << fmt17(r.energy) << ',' << fmt17(r.grad_norm) << ',' << fmt17(r.el_residual) << ','
       << fmt17(r.constraint_drift) << ',' << fmt17(r.step) << '\n';
}

}  // namespace pacs
