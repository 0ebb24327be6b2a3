#include <doctest.h>

#include <sstream>

#include "pacs/error.hpp"
#include "pacs/identity_suite.hpp"
#include "pacs/spectral_ops.hpp"
#include "support.hpp"

using namespace pacs;

namespace {

Mat skew_matrix(int r, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Mat l(r, r);
    for (int i = 0; i < r * r; ++i) l.data()[i] = nd(rng);
    return l - l.transpose();
}

}  // namespace

TEST_CASE("identity names and orders") {
    CHECK(identity_name(IdentityId::PROP82_M2) == "PROP82_M2");
    CHECK(identity_name(IdentityId::Q_ROUTE_AGREEMENT) == "Q_ROUTE_AGREEMENT");
    CHECK(prop82_id(3) == IdentityId::PROP82_M3);
    CHECK_THROWS_AS(prop82_id(4), ArgumentError);
}

TEST_CASE("constant structure with lambda = J gives zero T_lambda") {
    Grid g(2, 8);
    AcsField j = AcsField::trusted(j_std_field(g, 4));
    const Mat l = j_std(4);
    for (int m = 1; m <= 3; ++m) {
        CHECK(max_abs_entry(t_lambda(j, EnergyOrder(m), l)) < 1e-14);
        IdentityReport r = check_prop82(j, EnergyOrder(m), l);
        CHECK(r.residual_linf < 1e-14);
        CHECK(r.reference_l2 < 1e-14);
    }
    for (const auto& r : check_lemma83_terms(j, l)) CHECK(r.residual_linf < 1e-14);
}

TEST_CASE("m = 1 with lambda = 0 is the classical divergence form") {
    Grid g(2, 48);
    AcsField j = random_acs(g, 2, 0.1, 3, 4);
    const Mat zero = Mat::Zero(4, 4);
    MatrixField tl = t_lambda(j, EnergyOrder(1), zero);
    MatrixField want(g, 4);
    for (int p = 0; p < 2; ++p) want += partial(commutator(j, commutator(partial(j, p), j)), p);
    CHECK(testing::max_diff(tl, want) < 1e-11 * max_abs_entry(want));
    // T_1 = T_lambda - [J, [Lap J, J]]
    MatrixField lhs = t_m(j, EnergyOrder(1));
    MatrixField rhs = tl - commutator(j, el_residual(j, EnergyOrder(1)));
    CHECK(testing::max_diff(lhs, rhs) < 1e-6 * max_abs_entry(lhs));
}

TEST_CASE("T_m identity, m = 1 refinement oracle") {
    RefinementCase c;
    c.identity = IdentityId::PROP82_M1;
    c.dim = 2;
    c.rank = 4;
    c.grids = {16, 32};
    c.band_limit = 3;
    c.amplitude = 0.3;
    c.seed = 5;
    std::vector<IdentityReport> rs = run_refinement(c);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].residual_linf >= 1e3 * rs[1].residual_linf);
    CHECK(rs[1].residual_linf <= 1e-8);
    CHECK(!rs[0].convergence_rate.has_value());
}

TEST_CASE("T_m identity, m = 2 decays spectrally") {
    RefinementCase c;
    c.identity = IdentityId::PROP82_M2;
    c.dim = 2;
    c.rank = 4;
    c.grids = {16, 24, 32};
    c.band_limit = 2;
    c.amplitude = 0.3;
    c.seed = 6;
    std::vector<IdentityReport> rs = run_refinement(c);
    REQUIRE(rs.size() == 3);
    CHECK(rs[1].relative_l2() < rs[0].relative_l2());
    CHECK(rs[2].relative_l2() < rs[1].relative_l2());
    REQUIRE(rs[2].convergence_rate.has_value());
    CHECK(*rs[2].convergence_rate > 4.0);
    // faster than N^-4 between the outer grids
    CHECK(rs[2].relative_l2() < rs[0].relative_l2() * std::pow(16.0 / 32.0, 4.0));
}

TEST_CASE("T_m identity holds for any constant lambda") {
    Grid g(2, 48);
    AcsField j = random_acs(g, 2, 0.1, 7, 4);
    for (int m = 1; m <= 3; ++m) {
        for (const Mat& l : {Mat(Mat::Zero(4, 4)), default_lambda(j), skew_matrix(4, 8), Mat(Mat::Random(4, 4))}) {
            IdentityReport r = check_prop82(j, EnergyOrder(m), l);
            CHECK(r.relative_l2() < (m == 3 ? 1e-4 : 1e-6));
        }
    }
}

TEST_CASE("lemma term rewrites agree") {
    Grid g(2, 48);
    AcsField j = random_acs(g, 2, 0.1, 9, 4);
    std::vector<IdentityReport> rs = check_lemma83_terms(j, default_lambda(j));
    REQUIRE(rs.size() == 4);
    for (const auto& r : rs) {
        CHECK(r.reference_l2 > 0.0);
        CHECK(r.relative_l2() < 1e-6);
    }
}

TEST_CASE("Q route and T_1 reports match the field level computation") {
    Grid g(2, 16);
    AcsField j = random_acs(g, 2, 0.3, 10, 4);
    IdentityReport q = check_q_route(j, EnergyOrder(2));
    MatrixField d = q_m(j, EnergyOrder(2)) - q_m_expanded(j, EnergyOrder(2));
    CHECK(q.residual_l2 == doctest::Approx(l2_norm(d)).epsilon(1e-8));
    CHECK(q.reference_l2 == doctest::Approx(l2_norm(q_m(j, EnergyOrder(2)))).epsilon(1e-10));
    IdentityReport t = check_t1(j);
    MatrixField e = t_m(j, EnergyOrder(1)) - t1_double_commutator(j);
    CHECK(t.residual_linf == doctest::Approx(std::sqrt(0.0 + [&] {
              double mx = 0.0;
              for (std::size_t i = 0; i < g.num_points(); ++i) mx = std::max(mx, e.at(i).squaredNorm());
              return mx;
          }())).epsilon(1e-8));
}

TEST_CASE("rate fit") {
    std::vector<IdentityReport> rs;
    for (auto [n, res] : {std::pair{8, 1e-4}, std::pair{16, 1e-7}, std::pair{32, 1e-10}}) {
        IdentityReport r;
        r.grid_N = n;
        r.reference_l2 = 2.0;
        r.residual_l2 = 2.0 * res;
        rs.push_back(r);
    }
    CHECK(*fit_rate(rs) == doctest::Approx(3.0 * std::log2(10.0)).epsilon(1e-12));
    rs.pop_back();
    CHECK(!fit_rate(rs).has_value());
}

TEST_CASE("identities csv") {
    std::vector<IdentityReport> rs(3);
    for (int i = 0; i < 3; ++i) {
        rs[i].identity_id = IdentityId::PROP82_M1;
        rs[i].grid_N = 8 << i;
        rs[i].band_limit = 2;
        rs[i].residual_linf = 0.1 / (i + 1);
        rs[i].residual_l2 = 0.2 / (i + 1);
        rs[i].reference_l2 = 1.0;
    }
    std::ostringstream a;
    write_identities_csv(a, rs);
    CHECK(a.str().rfind("identity_id,N,band_limit,residual_linf,residual_l2,rate\nPROP82_M1,8,2,0.10000000000000001,0.20000000000000001,\n", 0) == 0);
    assign_rates(rs);
    std::ostringstream b;
    write_identities_csv(b, rs);
    std::string line;
    std::istringstream in(b.str());
    int rows = 0;
    std::getline(in, line);
    while (std::getline(in, line)) {
        ++rows;
        CHECK(line.back() != ',');
    }
    CHECK(rows == 3);
}
