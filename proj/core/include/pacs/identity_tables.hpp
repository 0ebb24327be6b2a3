#pragma once

#include <array>
#include <string>

#include "pacs/term_algebra.hpp"

namespace pacs::tables {

// Divergence-form expansion T_lambda for m = 1, 2, 3, assembled from the
// transcribed derivation lines.
terms::Expr t_lambda(int m);
// T_m = J Q_m + Q_m J with Q_m = -(Lap^m J J + J Lap^m J).
terms::Expr t_m(int m);
// T_m + [K, [Lap^m J, J]] - T_lambda
terms::Expr prop82_residual(int m);
// Q_m from the product-rule expansion (m = 1, 2, 3).
terms::Expr q_expanded(int m);
// -(Lap^m J J + J Lap^m J)
terms::Expr q_compact(int m);
// T_1 written as the double commutator sum_p [d_p J, [d_p J, J]].
terms::Expr t1_double_commutator();

// The four m = 3 term shapes that admit a lambda rewrite, as concrete
// representatives.
inline constexpr int kLemmaTerms = 4;
terms::Expr lemma_raw(int which);
terms::Expr lemma_rewritten(int which);
std::string lemma_label(int which);

// Source lines, exposed for auditing.
const std::string& t_lambda_source(int m);

}  // namespace pacs::tables
