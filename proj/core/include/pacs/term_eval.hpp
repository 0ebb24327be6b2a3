#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pacs/grid_field.hpp"
#include "pacs/term_algebra.hpp"

namespace pacs::terms {

// Direct evaluation with whole-grid fields. Simple and memory hungry; meant
// for small grids and for cross-checking the streaming evaluator.
MatrixField evaluate_naive(const Expr& e, const MatrixField& j, const Mat& lambda);

struct StreamOptions {
    // Working-set target for the slab buffers, in bytes. The input field and
    // the output accumulator are not counted.
    std::size_t memory_budget = std::size_t{1} << 30;
    // Number of leading axes summed explicitly per slab. 0 chooses the
    // smallest count that fits the budget.
    int peel = 0;
    std::size_t tile = 32;
};

struct StreamStats {
    int peel = 0;
    std::size_t buckets = 0;
    std::size_t factors = 0;
    std::size_t pair_products = 0;
    std::size_t group_products = 0;
    double seconds_pass1 = 0.0;
    double seconds_pass2 = 0.0;
    // pass 1 breakdown: factor synthesis, tile products, and the rest
    // (moment stack traversal and accumulation)
    double seconds_synthesis = 0.0;
    double seconds_products = 0.0;
    double seconds_walk = 0.0;
};

// Receives consecutive point ranges [first, first + count) of the result in
// storage order. `value` holds count * rank^2 doubles for the main
// expression; `extras[i]` the same for the i-th extra expression.
using SlabCallback =
    std::function<void(std::size_t first, std::size_t count, const double* value, const std::vector<const double*>& extras)>;

// Evaluates `main` slab by slab. `extras` must be free of outer derivatives;
// they are evaluated pointwise in the final pass at no transform cost.
StreamStats evaluate_streaming(const Expr& main, const std::vector<Expr>& extras, const MatrixField& j,
                               const Mat& lambda, const SlabCallback& cb, const StreamOptions& opts = {});

// Convenience: the whole result as a field.
MatrixField evaluate(const Expr& e, const MatrixField& j, const Mat& lambda, const StreamOptions& opts = {},
                     StreamStats* stats = nullptr);

}  // namespace pacs::terms
