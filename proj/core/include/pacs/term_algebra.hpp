#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pacs::terms {

// Factor bases: J itself (with derivatives), K = J - lambda and the constant
// lambda. K with any derivative is a J derivative; lambda with any derivative
// vanishes.
enum class Base : std::uint8_t { J, K, Lam };

struct Factor {
    Base base = Base::J;
    std::vector<int> labels;  // sorted; each label is a partial derivative
    int lap = 0;              // extra Laplacians

    int order() const { return static_cast<int>(labels.size()) + 2 * lap; }
    auto operator<=>(const Factor&) const = default;
};

// coeff * d_{outer} Lap^{outer_lap} (f_1 f_2 ... f_k). A label occurring
// twice in a term is summed over.
struct Term {
    std::int64_t coeff = 1;
    std::vector<int> outer;
    int outer_lap = 0;
    std::vector<Factor> factors;
};

using Expr = std::vector<Term>;

Expr factor(Base b, std::vector<int> labels = {}, int lap = 0);
Expr add(const std::vector<Expr>& es);
Expr scale(std::int64_t c, const Expr& e);
Expr mul(const std::vector<Expr>& es);
Expr comm(const Expr& a, const Expr& b);
Expr d(const std::vector<int>& labels, int lap, const Expr& e);

// Rewrites every term without a K/lambda factor into outer derivatives of
// products that carry one, by writing a first-order factor d_x J as d_x K and
// moving the derivative outside; no factor of order > m survives.
Expr lift(const Expr& e, int m);

// Distributes outer derivatives over factors.
Expr expand(const Expr& e);
// Canonical relabelling and merging of equal terms.
Expr simplify(const Expr& e);

// Parses the table language:
//   J K l              bases (l is the constant lambda)
//   d[pq] X            partial derivatives with labels p, q (a..z)
//   D X, D2 X          Laplacian, squared Laplacian
//   [A, B]             commutator
//   A * B              product
//   lift(X)            lift with the parser's m
//   integer coefficients, + and -, parentheses, and $NAME macro references
Expr parse(const std::string& text, int m = 0, const std::map<std::string, std::string>& macros = {});

std::string to_string(const Term& t);
std::string to_string(const Expr& e);

// Maximum factor order, maximum outer order and maximum factor count.
struct ExprStats {
    int max_factor_order = 0;
    int max_outer_order = 0;
    int max_factors = 0;
};
ExprStats stats(const Expr& e);

}  // namespace pacs::terms
