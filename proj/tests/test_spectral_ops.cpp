#include "doctest.h"
#include "pacs/error.hpp"
#include "pacs/spectral_ops.hpp"
#include "support.hpp"

using namespace pacs;
using namespace pacs::testing;

TEST_CASE("partial of constant and of sin(3 x1) E12") {
    Grid g(4, 16);
    DerivativePlan plan(g, 4);
    CHECK(max_abs_entry(partial(plan, j_std_field(g), 0)) < 1e-14);
    auto a = MatrixField::from_function(g, 4, [](const double* x) { return Mat(std::sin(3 * x[0]) * unit(4, 0, 1)); });
    auto want = MatrixField::from_function(g, 4, [](const double* x) { return Mat(3 * std::cos(3 * x[0]) * unit(4, 0, 1)); });
    CHECK(max_diff(partial(plan, a, 0), want) < 1e-12);
    CHECK(max_abs_entry(partial(plan, a, 1)) < 1e-12);
}

TEST_CASE("product rule after dealiasing") {
    Grid g(2, 32);
    DerivativePlan plan(g, 2, true);
    auto a = random_trig_field(g, 2, 4, 11);
    auto b = random_trig_field(g, 2, 4, 12);
    for (int ax = 0; ax < 2; ++ax) {
        auto lhs = partial(plan, product(plan, a, b), ax);
        auto rhs = product(plan, partial(plan, a, ax), b) + product(plan, a, partial(plan, b, ax));
        CHECK(max_diff(lhs, rhs) < 1e-10 * (1 + max_abs_entry(lhs)));
    }
}

TEST_CASE("laplacian eigenfunction and constraint identity") {
    Grid g(4, 8);
    DerivativePlan plan(g, 4);
    auto f = MatrixField::from_function(g, 4, [](const double* x) { return Mat(std::sin(x[0]) * std::sin(x[1]) * unit(4, 0, 1)); });
    CHECK(max_diff(laplacian(plan, f), -2.0 * f) < 1e-12);
    CHECK(max_abs_entry(laplacian(plan, j_std_field(g))) < 1e-14);
}

TEST_CASE("iterated laplacian") {
    Grid g(2, 16);
    DerivativePlan plan(g, 4);
    auto f = MatrixField::from_function(g, 2, [](const double* x) { return Mat(std::sin(x[0]) * unit(2, 0, 1)); });
    CHECK(max_diff(iterated_laplacian(plan, f, 0), f) == 0.0);
    CHECK(max_diff(iterated_laplacian(plan, f, 2), f) < 1e-12);
    auto r = random_trig_field(g, 2, 5, 3);
    auto l2 = iterated_laplacian(plan, r, 2);
    CHECK(max_diff(l2, laplacian(plan, laplacian(plan, r))) < 1e-10 * max_abs_entry(l2));
    CHECK_THROWS_AS(iterated_laplacian(plan, r, -1), ArgumentError);
    CHECK_THROWS_AS(iterated_laplacian(plan, r, 3), ArgumentError);
}

TEST_CASE("laplacian equals the sum of second partials including the Nyquist mode") {
    Grid g(2, 8);
    DerivativePlan plan(g, 2, false);
    auto r = random_trig_field(g, 2, 4, 21);  // band 4 reaches the Nyquist mode
    auto sum = derivative(plan, r, DerivOp::axis(0, 2)) + derivative(plan, r, DerivOp::axis(1, 2));
    CHECK(max_diff(laplacian(plan, r), sum) < 1e-12 * (1 + max_abs_entry(sum)));
    auto pp = partial(plan, partial(plan, r, 0), 0);
    CHECK(max_diff(pp, derivative(plan, r, DerivOp::axis(0, 2))) < 1e-12 * (1 + max_abs_entry(pp)));
}

TEST_CASE("gradient tensor") {
    Grid g(4, 8);
    DerivativePlan plan(g, 3);
    auto c = gradient_tensor(plan, j_std_field(g), 1);
    CHECK(c.components.size() == 4);
    for (const auto& comp : c.components) CHECK(max_abs_entry(comp) < 1e-14);
    auto r = random_trig_field(Grid(2, 16), 2, 3, 5);
    DerivativePlan p2(r.grid(), 3);
    auto t2 = gradient_tensor(p2, r, 2);
    CHECK(t2.components.size() == 3);
    CHECK(t2.multiplicity == std::vector<int>{1, 2, 1});
    CHECK(max_diff(t2({0, 1}), t2({1, 0})) == 0.0);
    CHECK(max_diff(t2({0, 1}), partial(p2, partial(p2, r, 1), 0)) < 1e-11);
    // Parseval: sum over ordered indices of |d_ij r|^2 equals the |k|^4 spectral sum
    double phys = 0.0;
    for (std::size_t i = 0; i < t2.components.size(); ++i)
        phys += t2.multiplicity[i] * field_inner_product(t2.components[i], t2.components[i]);
    double spec = spectral_norm_sq(forward(r), DerivOp::laplacian(1));
    CHECK(phys == doctest::Approx(spec).epsilon(1e-9));
    auto t3 = gradient_tensor(p2, r, 3);
    CHECK(t3.components.size() == 4);
    CHECK_THROWS_AS(gradient_tensor(p2, r, 4), ArgumentError);
}

TEST_CASE("Parseval and integration by parts") {
    Grid g(2, 16);
    auto a = random_trig_field(g, 2, 5, 31);
    auto b = random_trig_field(g, 2, 5, 32);
    auto da = partial(a, 0);
    double phys = field_inner_product(da, da);
    CHECK(phys == doctest::Approx(spectral_norm_sq(forward(a), DerivOp::axis(0))).epsilon(1e-9));
    double lhs = field_inner_product(partial(a, 0), partial(b, 0)) + field_inner_product(partial(a, 1), partial(b, 1));
    double rhs = -field_inner_product(a, laplacian(b));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("spectral convergence on an analytic field") {
    std::vector<double> errs;
    for (int n : {8, 16, 32}) {
        Grid g(2, n);
        auto f = MatrixField::from_function(g, 2, [](const double* x) {
            return Mat(std::exp(std::sin(x[0]) + 0.5 * std::cos(x[1])) * unit(2, 1, 0));
        });
        auto want = MatrixField::from_function(g, 2, [](const double* x) {
            return Mat(std::cos(x[0]) * std::exp(std::sin(x[0]) + 0.5 * std::cos(x[1])) * unit(2, 1, 0));
        });
        errs.push_back(max_diff(partial(f, 0), want));
    }
    CHECK(errs[1] < errs[0] * 1e-3);
    CHECK(errs[2] < 1e-12);
}

TEST_CASE("resample evaluates the interpolant of a band-limited field") {
    Grid g(2, 16);
    auto f = [](const double* x) {
        Mat v(2, 2);
        v << std::sin(x[0]) + 0.5 * std::cos(3 * x[1]), std::cos(x[0] + 2 * x[1]), 0.25, std::sin(5 * x[0] - x[1]);
        return v;
    };
    auto a = MatrixField::from_function(g, 2, f);
    SUBCASE("same grid without offset is the identity") {
        CHECK(max_diff(resample(a, g), a) < 1e-14);
    }
    SUBCASE("finer grid with offset") {
        const std::vector<double> off{0.3, -1.1};
        Grid fine(2, 40);
        auto r = resample(a, fine, off);
        auto want = MatrixField::from_function(fine, 2, [&](const double* x) {
            const double y[2] = {x[0] + off[0], x[1] + off[1]};
            return f(y);
        });
        CHECK(max_diff(r, want) < 1e-13);
    }
    SUBCASE("target length only relabels coordinates") {
        Grid fine(2, 32, 4.0 * kPi);
        auto r = resample(a, fine);
        auto want = MatrixField::from_function(Grid(2, 32), 2, f);
        CHECK(max_diff(r, want) < 1e-13);
    }
}

TEST_CASE("resample keeps the Nyquist cosine real and symmetric") {
    Grid g(2, 8);
    auto a = MatrixField::from_function(g, 1, [](const double* x) { return Mat::Constant(1, 1, std::cos(4 * x[0]) + std::cos(4 * x[1])); });
    Grid fine(2, 16);
    auto r = resample(a, fine);
    auto want = MatrixField::from_function(fine, 1, [](const double* x) { return Mat::Constant(1, 1, std::cos(4 * x[0]) + std::cos(4 * x[1])); });
    CHECK(max_diff(r, want) < 1e-13);
    CHECK_THROWS(resample(a, Grid(2, 4)));
}
