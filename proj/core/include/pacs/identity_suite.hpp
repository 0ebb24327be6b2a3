#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pacs/acs_core.hpp"
#include "pacs/energy_el.hpp"
#include "pacs/term_eval.hpp"

namespace pacs {

enum class IdentityId { T1_DOUBLE_COMMUTATOR, PROP82_M1, PROP82_M2, PROP82_M3, LEMMA83_TERMS, Q_ROUTE_AGREEMENT };

std::string identity_name(IdentityId id);
IdentityId prop82_id(int m);

struct IdentityReport {
    IdentityId identity_id = IdentityId::T1_DOUBLE_COMMUTATOR;
    int m = 1;
    int dim = 2;
    int grid_N = 0;
    int band_limit = 0;
    int term = -1;  // lemma term index, -1 otherwise
    double residual_linf = 0.0;
    double residual_l2 = 0.0;
    // norms of the quantity the residual is measured against
    double reference_linf = 0.0;
    double reference_l2 = 0.0;
    // observed order from fit_rate, set with >= 3 resolutions
    std::optional<double> convergence_rate;

    double relative_linf() const;
    double relative_l2() const;
};

// Discrete mean of J.
Mat default_lambda(const MatrixField& j);

// T_lambda assembled from the divergence tables.
MatrixField t_lambda(const AcsField& j, EnergyOrder m, const Mat& lambda0, const terms::StreamOptions& opts = {});

// T_m - T_lambda + [J - lambda0, [Lap^m J, J]] against T_m.
IdentityReport check_prop82(const AcsField& j, EnergyOrder m, const Mat& lambda0,
                            const terms::StreamOptions& opts = {});
// raw - rewritten for each lemma term shape, against raw.
std::vector<IdentityReport> check_lemma83_terms(const AcsField& j, const Mat& lambda0,
                                                const terms::StreamOptions& opts = {});
// compact - expanded Q_m, against compact.
IdentityReport check_q_route(const AcsField& j, EnergyOrder m, const terms::StreamOptions& opts = {});
// T_1 - sum_p [d_p J, [d_p J, J]], against T_1.
IdentityReport check_t1(const AcsField& j, const terms::StreamOptions& opts = {});

// Observed order: minus the least squares slope of log(relative l2) against
// log N. Residuals 1e-4, 1e-7, 1e-10 on N = 8, 16, 32 give about 10.
// nullopt below 3 points.
std::optional<double> fit_rate(const std::vector<IdentityReport>& reports);
// Fills convergence_rate for every (identity, m, term) group with >= 3 grids.
void assign_rates(std::vector<IdentityReport>& reports);

struct RefinementCase {
    IdentityId identity = IdentityId::PROP82_M1;
    int m = 2;  // order for Q_ROUTE_AGREEMENT
    int dim = 2;
    int rank = 0;
    std::vector<int> grids;
    int band_limit = 2;
    double amplitude = 0.3;
    std::uint64_t seed = 1;
    terms::StreamOptions stream;
};

// One report per grid (per lemma term for LEMMA83_TERMS), rates assigned.
std::vector<IdentityReport> run_refinement(const RefinementCase& c);

// identity_id,N,band_limit,residual_linf,residual_l2,rate
void write_identities_csv(std::ostream& os, const std::vector<IdentityReport>& reports);

}  // namespace pacs
