#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "pacs/error.hpp"
#include "pacs/optimizer.hpp"
#include "support.hpp"

using namespace pacs;
using namespace pacs::testing;

namespace {

// Naive m = 1 gradient descent on T^2: dense Fourier differentiation matrix,
// central differences of the discrete energy, Eigen's matrix exponential.
struct DenseReference {
    int N, r;
    double h;
    Eigen::MatrixXd D;

    DenseReference(int N_, int r_) : N(N_), r(r_), h(2 * kPi / N_), D(N_, N_) {
        for (int j = 0; j < N; ++j)
            for (int l = 0; l < N; ++l)
                D(j, l) = j == l ? 0.0 : 0.5 * ((j - l) % 2 ? -1.0 : 1.0) / std::tan((j - l) * h / 2);
    }

    // derivative of channel c along both axes
    void derivs(const std::vector<double>& u, int c, Eigen::MatrixXd& v0, Eigen::MatrixXd& v1) const {
        Eigen::MatrixXd f(N, N);
        for (int i0 = 0; i0 < N; ++i0)
            for (int i1 = 0; i1 < N; ++i1) f(i0, i1) = u[(i0 * N + i1) * r * r + c];
        v0 = D * f;
        v1 = f * D.transpose();
    }

    double energy(const std::vector<double>& u) const {
        double e = 0.0;
        Eigen::MatrixXd v0, v1;
        for (int c = 0; c < r * r; ++c) {
            derivs(u, c, v0, v1);
            e += v0.squaredNorm() + v1.squaredNorm();
        }
        return e * h * h;
    }

    std::vector<double> euclidean_gradient(const std::vector<double>& u, double eps) const {
        std::vector<double> g(u.size());
        Eigen::MatrixXd v0, v1;
        for (int c = 0; c < r * r; ++c) {
            derivs(u, c, v0, v1);
            for (int i0 = 0; i0 < N; ++i0)
                for (int i1 = 0; i1 < N; ++i1) {
                    double plus = 0.0, minus = 0.0;
                    for (int j = 0; j < N; ++j) {
                        const double a = v0(j, i1), da = eps * D(j, i0);
                        const double b = v1(i0, j), db = eps * D(j, i1);
                        plus += (a + da) * (a + da) - a * a + (b + db) * (b + db) - b * b;
                        minus += (a - da) * (a - da) - a * a + (b - db) * (b - db) - b * b;
                    }
                    g[(i0 * N + i1) * r * r + c] = (plus - minus) / (2 * eps);
                }
        }
        return g;
    }

    Eigen::MatrixXd at(const std::vector<double>& u, int p) const {
        Eigen::MatrixXd m(r, r);
        for (int i = 0; i < r; ++i)
            for (int k = 0; k < r; ++k) m(i, k) = u[p * r * r + i * r + k];
        return m;
    }

    void put(std::vector<double>& u, int p, const Eigen::MatrixXd& m) const {
        for (int i = 0; i < r; ++i)
            for (int k = 0; k < r; ++k) u[p * r * r + i * r + k] = m(i, k);
    }

    struct Step {
        double energy, grad_norm, step;
    };

    std::vector<Step> run(std::vector<double> u, int iters) const {
        std::vector<Step> out;
        double e = energy(u), prev = 1.0;
        for (int it = 0; it < iters; ++it) {
            const auto eg = euclidean_gradient(u, 1e-4);
            std::vector<double> s(u.size());
            double gg = 0.0;
            for (int p = 0; p < N * N; ++p) {
                const Eigen::MatrixXd J = at(u, p), T = at(eg, p);
                const Eigen::MatrixXd A = T + J * T * J;
                const Eigen::MatrixXd G = 0.25 * (A - A.transpose());
                put(s, p, -G);
                gg += G.squaredNorm();
            }
            gg *= h * h;
            const double slope = -gg;
            double t = std::min(1.0, 2 * prev);
            std::vector<double> next(u.size());
            double en = 0.0;
            for (;;) {
                for (int p = 0; p < N * N; ++p) {
                    const Eigen::MatrixXd J = at(u, p);
                    const Eigen::MatrixXd X = (t * at(s, p) * J).eval();
                    put(next, p, J * X.exp());
                }
                en = energy(next);
                if (en <= e + 1e-4 * t * slope && en < e) break;
                t *= 0.5;
                REQUIRE(t >= 1e-14);
            }
            u = next;
            e = en;
            prev = t;
            out.push_back({e, 0.0, t});
            if (it > 0) out[it - 1].grad_norm = std::sqrt(gg);
        }
        return out;
    }
};

}  // namespace

TEST_CASE("optimizer config validation") {
    OptimizerConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto f) {
        OptimizerConfig c;
        f(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](auto& c) { c.m = 4; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.grad_tol = 0; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.armijo_c = 1.0; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.backtrack_factor = 1.0; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.initial_step = -1; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.renormalize_every = 0; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.log_every = 0; }).validate(), ArgumentError);
    CHECK_THROWS_AS(bad([](auto& c) { c.max_iters = -1; }).validate(), ArgumentError);
}

TEST_CASE("constant structure is already converged") {
    for (int m : {1, 2}) {
        Grid g(4, 8);
        auto j = AcsField::trusted(j_std_field(g));
        OptimizerConfig c;
        c.m = m;
        auto [jf, rep] = minimize(j, c);
        CHECK(rep.status == RunStatus::CONVERGED);
        CHECK(rep.iterations == 0);
        REQUIRE(rep.iterates.size() == 1);
        CHECK(rep.iterates[0].iter == 0);
        CHECK(rep.final_energy == 0.0);
        CHECK(max_diff(jf.field(), j.field()) == 0.0);
        CHECK(max_abs_entry(descent_direction(j, EnergyOrder(m))) == 0.0);
    }
}

TEST_CASE("descent direction pairs to minus the squared gradient") {
    auto check = [](const AcsField& j, int m) {
        const EnergyOrder order(m);
        const TangentField s = descent_direction(j, order);
        const TangentField grad = riemannian_gradient(j, order);
        const double gg = field_inner_product(grad, grad);
        REQUIRE(gg > 0.0);
        CHECK(field_inner_product(s, grad) < 0.0);
        CHECK(std::abs(first_variation(j, s, order) + gg) <= 1e-9 * gg);
        const auto d = tangent_defect(j, s);
        CHECK(d.anticommute <= 1e-10 * (1 + max_abs_entry(s)));
        CHECK(d.skew <= 1e-12 * (1 + max_abs_entry(s)));
        for (auto p : {Preconditioner::None, Preconditioner::Sobolev}) {
            const TangentField q = preconditioned_direction(j, grad, order, p);
            CHECK(field_inner_product(q, grad) < 0.0);
            CHECK(tangent_defect(j, q).anticommute <= 1e-10 * (1 + max_abs_entry(q)));
        }
    };
    check(random_acs(Grid(2, 32), 2, 0.3, 7, 4), 1);
    check(random_acs(Grid(4, 8), 2, 0.3, 7), 2);
    check(random_acs(Grid(2, 16), 2, 0.3, 3, 4), 3);
}

TEST_CASE("m = 1 trace matches a dense finite-difference reference") {
    const Grid g(2, 32);
    const AcsField j0 = random_acs(g, 2, 0.3, 7, 4);
    DenseReference ref(32, 4);
    CHECK(std::abs(ref.energy(j0.field().data()) - energy(j0, EnergyOrder(1))) <= 1e-12 * energy(j0, EnergyOrder(1)));

    OptimizerConfig c;
    c.m = 1;
    c.max_iters = 10;
    auto [jf, rep] = minimize(j0, c);
    REQUIRE(rep.iterates.size() == 11);
    const auto want = ref.run(j0.field().data(), 10);
    for (int it = 1; it <= 10; ++it) {
        const auto& got = rep.iterates[it];
        CHECK(got.iter == it);
        CHECK(got.step == want[it - 1].step);
        CHECK(got.energy == doctest::Approx(want[it - 1].energy).epsilon(1e-6));
        if (it < 10) CHECK(got.grad_norm == doctest::Approx(want[it - 1].grad_norm).epsilon(1e-6));
    }
    for (std::size_t i = 1; i < rep.iterates.size(); ++i) {
        CHECK(rep.iterates[i].energy < rep.iterates[i - 1].energy);
        CHECK(rep.iterates[i].constraint_drift <= 1e-10);
    }
    CHECK(rep.status == RunStatus::MAX_ITERS);
}

TEST_CASE("m = 2 preconditioned descent converges on T^4") {
    const Grid g(4, 8);
    const AcsField j0 = random_acs(g, 2, 0.3, 7);
    OptimizerConfig c;
    c.m = 2;
    c.max_iters = 2000;
    c.preconditioner = Preconditioner::Sobolev;
    auto [jf, rep] = minimize(j0, c);
    CHECK(rep.status == RunStatus::CONVERGED);
    CHECK(rep.final_grad_norm <= c.grad_tol);
    CHECK(rep.final_el_residual <= 1e-5 * rep.initial_el_residual);
    CHECK(rep.final_el_residual <= 2 * std::sqrt(4.0) * c.grad_tol);
    CHECK(rep.final_energy <= rep.initial_energy);
    for (std::size_t i = 1; i < rep.iterates.size(); ++i) {
        CHECK(rep.iterates[i].energy < rep.iterates[i - 1].energy);
        CHECK(rep.iterates[i].constraint_drift <= 1e-10);
    }
    const auto d = measure_constraints(jf.field());
    CHECK(d.max_sq_defect <= 1e-10);
    CHECK(d.max_skew_defect <= 1e-10);
}

TEST_CASE("runs are bit-identical") {
    const AcsField j0 = random_acs(Grid(2, 16), 2, 0.3, 11, 4);
    OptimizerConfig c;
    c.m = 1;
    c.max_iters = 25;
    auto a = minimize(j0, c);
    auto b = minimize(j0, c);
    REQUIRE(a.second.iterates.size() == b.second.iterates.size());
    for (std::size_t i = 0; i < a.second.iterates.size(); ++i) {
        const auto &x = a.second.iterates[i], &y = b.second.iterates[i];
        CHECK(x.energy == y.energy);
        CHECK(x.grad_norm == y.grad_norm);
        CHECK(x.el_residual == y.el_residual);
        CHECK(x.step == y.step);
    }
    CHECK(a.first.field().data() == b.first.field().data());
}

TEST_CASE("line search failure is reported") {
    const AcsField j0 = random_acs(Grid(2, 32), 2, 0.3, 7, 4);
    OptimizerConfig c;
    c.m = 1;
    c.min_step = 0.9;
    auto [jf, rep] = minimize(j0, c);
    CHECK(rep.status == RunStatus::LINE_SEARCH_FAILED);
    CHECK(rep.iterations == 0);
    CHECK(jf.field().data() == j0.field().data());
}

TEST_CASE("logging cadence and sink") {
    const AcsField j0 = random_acs(Grid(2, 16), 2, 0.3, 11, 4);
    OptimizerConfig c;
    c.m = 1;
    c.max_iters = 12;
    c.log_every = 5;
    std::vector<int> seen;
    auto [jf, rep] = minimize(j0, c, [&](const IterateRecord& r) { seen.push_back(r.iter); });
    CHECK(seen == std::vector<int>{0, 5, 10, 12});
    REQUIRE(rep.iterates.size() == 4);
    CHECK(rep.iterations == 12);
}

TEST_CASE("run csv") {
    std::ostringstream os;
    write_run_csv_header(os);
    write_run_csv_row(os, IterateRecord{3, 0.1, 2.0, 1e-20, 0.0, 0.125});
    CHECK(os.str() == "iter,energy,grad_norm,el_residual,constraint_drift,step\n"
                      "3,0.10000000000000001,2,9.9999999999999995e-21,0,0.125\n");
}
