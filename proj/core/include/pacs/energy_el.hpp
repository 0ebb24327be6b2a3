#pragma once

#include <cstdint>

#include "pacs/acs_core.hpp"
#include "pacs/grid_field.hpp"

namespace pacs {

// m in {1, 2, 3}; m = 2k or m = 2k - 1.
struct EnergyOrder {
    int m = 1;

    explicit EnergyOrder(int order);
    bool even() const { return m % 2 == 0; }
    int k() const { return (m + 1) / 2; }
};

// m even: int |Lap^k J|^2, m odd: int |grad Lap^{k-1} J|^2.
double energy(const MatrixField& j, EnergyOrder m);

// Lap^m J
MatrixField polyharmonic(const MatrixField& j, EnergyOrder m);

// (-1)^m 2 int <Lap^m J, S>
double first_variation(const MatrixField& j, const MatrixField& s, EnergyOrder m);

// (-1)^m 2 Phi_J(Lap^m J)
TangentField riemannian_gradient(const AcsField& j, EnergyOrder m);

// [Lap^m J, J]
MatrixField el_residual(const MatrixField& j, EnergyOrder m);
// Lap^m J + J Lap^m J J, which vanishes exactly when el_residual does.
MatrixField el_residual_tangential(const MatrixField& j, EnergyOrder m);

// Q_m = -(Lap^m J J + J Lap^m J), using Lap^m (J^2) = 0.
MatrixField q_m(const MatrixField& j, EnergyOrder m);
// Q_m from its product-rule expansion.
MatrixField q_m_expanded(const MatrixField& j, EnergyOrder m);
// J Q_m + Q_m J
MatrixField t_m(const MatrixField& j, EnergyOrder m);
// sum_p [d_p J, [d_p J, J]]
MatrixField t1_double_commutator(const MatrixField& j);

struct WeakFormSample {
    MatrixField test_field;
    double lhs_value = 0.0;  // leading pairing of the top-order derivatives
    double residual = 0.0;   // full left-hand side
};

// Divergence weak form with the lower order terms from the Leibniz expansion
// of Lap^k (J T J) and Lap^k (J J).
WeakFormSample weak_form_residual(const AcsField& j, EnergyOrder m, const MatrixField& t);
// Commutator weak form: int <Lap^k J, [J, Lap^k T]> + cross terms.
WeakFormSample commutator_weak_residual(const AcsField& j, EnergyOrder m, const MatrixField& t);
// int <Lap^k J, [Lap^k J, T]> (odd m: sum_p <X_p, [X_p, T]> with X_p = d_p Lap^{k-1} J)
double commutator_cancellation(const MatrixField& j, EnergyOrder m, const MatrixField& t);

// sum_{l <= m} max_x |grad^l T|, all ordered multi-indices.
double cm_proxy_norm(const MatrixField& t, int m);
// Random band-limited field with unit C^m proxy norm.
MatrixField random_test_field(const Grid& g, int rank, int band, std::uint64_t seed, int m);

}  // namespace pacs
