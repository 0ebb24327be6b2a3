#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pacs/acs_core.hpp"
#include "pacs/energy_el.hpp"

namespace pacs {

enum class RunStatus { CONVERGED, MAX_ITERS, LINE_SEARCH_FAILED };
std::string status_name(RunStatus s);

enum class Preconditioner {
    None,     // S = -G
    Sobolev,  // S = -Phi_J((2 + 2 (-Lap)^m)^{-1} G)
};

struct OptimizerConfig {
    int m = 2;
    int max_iters = 5000;
    double grad_tol = 1e-7;
    double armijo_c = 1e-4;
    double backtrack_factor = 0.5;
    double initial_step = 1.0;
    int renormalize_every = 1;
    int log_every = 1;
    double min_step = 1e-14;
    Preconditioner preconditioner = Preconditioner::None;

    void validate() const;
};

struct IterateRecord {
    int iter = 0;
    double energy = 0.0;
    double grad_norm = 0.0;
    double el_residual = 0.0;
    double constraint_drift = 0.0;
    double step = 0.0;
};

struct RunReport {
    std::vector<IterateRecord> iterates;
    RunStatus status = RunStatus::MAX_ITERS;
    int iterations = 0;
    double initial_energy = 0.0;
    double final_energy = 0.0;
    double initial_el_residual = 0.0;
    double final_grad_norm = 0.0;
    double final_el_residual = 0.0;
};

// Called for every logged iterate, in order.
using IterateSink = std::function<void(const IterateRecord&)>;

// -riemannian_gradient
TangentField descent_direction(const AcsField& j, EnergyOrder m);

// Preconditioned direction for the given gradient.
TangentField preconditioned_direction(const AcsField& j, const TangentField& grad, EnergyOrder m,
                                      Preconditioner p);

std::pair<AcsField, RunReport> minimize(const AcsField& j0, const OptimizerConfig& cfg, const IterateSink& sink = {});

// iter,energy,grad_norm,el_residual,constraint_drift,step
void write_run_csv_header(std::ostream& os);
void write_run_csv_row(std::ostream& os, const IterateRecord& r);

}  // namespace pacs
