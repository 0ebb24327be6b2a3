#pragma once

#include <cstdint>

#include "pacs/grid_field.hpp"

namespace pacs {

inline constexpr double kDefaultConstraintTol = 1e-10;

// A matrix field with J^2 = -I and J^T = -J at every point (within tol).
class AcsField {
public:
    AcsField() = default;

    const MatrixField& field() const { return field_; }
    operator const MatrixField&() const { return field_; }
    const Grid& grid() const { return field_.grid(); }
    int rank() const { return field_.rank(); }
    double constraint_tol() const { return constraint_tol_; }

    // Wraps without checking. For producers that enforce the constraints by
    // construction.
    static AcsField trusted(MatrixField f, double tol = kDefaultConstraintTol);

private:
    MatrixField field_;
    double constraint_tol_ = kDefaultConstraintTol;
};

// Tangent vectors are plain fields; tangency is checked by tangent_defect.
using TangentField = MatrixField;

struct ConstraintDefects {
    double max_sq_defect = 0.0;    // max |J^2 + I|_F
    double max_skew_defect = 0.0;  // max |J + J^T|_F
    std::size_t worst_index = 0;   // first point attaining the larger defect
};

ConstraintDefects measure_constraints(const MatrixField& a);
AcsField validate_acs(const MatrixField& a, double tol = kDefaultConstraintTol);

// max over points of |SJ + JS|_F and |S + S^T|_F.
struct TangentDefects {
    double anticommute = 0.0;
    double skew = 0.0;
};
TangentDefects tangent_defect(const AcsField& j, const MatrixField& s);

// Phi_J(T) = ((T + JTJ) - (T + JTJ)^T) / 4
MatrixField project_tangent(const AcsField& j, const MatrixField& t);
MatrixField project_tangent(const MatrixField& j, const MatrixField& t);

struct RetractionParams {
    int exp_terms = 18;
    bool renormalize = true;
};

// exp(X) by scaling and squaring with a truncated Taylor series.
Mat expm(const Mat& x, int terms = 18);
// Nearest compatible structure to an approximately compatible J.
void renormalize_acs(Mat& j);

// J exp(t S J) pointwise.
AcsField retract(const AcsField& j, const TangentField& s, double t, const RetractionParams& params = {});

// R(x) J_std R(x)^T with R = exp(A), A a random skew trig polynomial field of
// degree <= band_limit per axis. Every entry of A has pointwise RMS close to
// `amplitude`. rank 0 means grid.dim.
AcsField random_acs(const Grid& g, int band_limit, double amplitude, std::uint64_t seed, int rank = 0);

// The skew generator field A used by random_acs.
MatrixField random_skew_field(const Grid& g, int band_limit, double amplitude, std::uint64_t seed, int rank);

}  // namespace pacs
