#include <sstream>

#include "doctest.h"
#include "pacs/error.hpp"
#include "pacs/grid_field.hpp"
#include "support.hpp"

using namespace pacs;
using namespace pacs::testing;

TEST_CASE("grid geometry") {
    Grid g(4, 8);
    CHECK(g.num_points() == 4096);
    CHECK(g.spacing * g.points_per_axis == doctest::Approx(2 * kPi).epsilon(1e-15));
    CHECK(g.cell_volume == doctest::Approx(std::pow(2 * kPi / 8, 4)));
    CHECK_THROWS_AS(Grid(4, 7), DimensionError);
    CHECK_THROWS_AS(Grid(4, 2), DimensionError);
    CHECK_THROWS_AS(Grid(7, 8), DimensionError);
    int ix[kMaxDim];
    g.unravel(1234, ix);
    CHECK(g.ravel(ix) == 1234);
}

TEST_CASE("inner product of constant J_std on T^4") {
    Grid g(4, 8);
    auto j = j_std_field(g);
    CHECK(field_inner_product(j, j) == doctest::Approx(4 * std::pow(2 * kPi, 4)).epsilon(1e-13));
    MatrixField zero(g);
    CHECK(field_inner_product(zero, j) == 0.0);
}

TEST_CASE("inner product of sin(x1) E12 is exact") {
    Grid g(4, 16);
    auto a = MatrixField::from_function(g, 4, [](const double* x) { return Mat(std::sin(x[0]) * unit(4, 0, 1)); });
    CHECK(field_inner_product(a, a) == doctest::Approx(std::pow(2 * kPi, 4) / 2).epsilon(1e-13));
}

TEST_CASE("inner product is symmetric, bilinear, positive and translation invariant") {
    Grid g(2, 8);
    auto a = random_trig_field(g, 2, 3, 1);
    auto b = random_trig_field(g, 2, 3, 2);
    auto c = random_trig_field(g, 2, 3, 3);
    CHECK(field_inner_product(a, b) == doctest::Approx(field_inner_product(b, a)).epsilon(1e-14));
    CHECK(field_inner_product(2.0 * a + c, b) ==
          doctest::Approx(2 * field_inner_product(a, b) + field_inner_product(c, b)).epsilon(1e-12));
    CHECK(field_inner_product(a, a) > 0.0);
    // cyclic shift by (3, 5)
    auto shift = [&](const MatrixField& f) {
        MatrixField out(g, f.rank());
        int ix[kMaxDim];
        for (std::size_t i = 0; i < g.num_points(); ++i) {
            g.unravel(i, ix);
            ix[0] += 3;
            ix[1] += 5;
            out.at(g.ravel(ix)) = f.at(i);
        }
        return out;
    };
    CHECK(field_inner_product(shift(a), shift(b)) == doctest::Approx(field_inner_product(a, b)).epsilon(1e-12));
    CHECK_THROWS_AS(field_inner_product(a, MatrixField(Grid(2, 10), 2)), DimensionError);
}

TEST_CASE("pointwise_map") {
    Grid g(4, 4);
    auto j = j_std_field(g);
    auto jt = pointwise_map(j, [](const Mat& m) { return Mat(m.transpose()); });
    CHECK(max_diff(jt, -1.0 * j) == 0.0);
    auto sq = pointwise_map(j, [](const Mat& m) { return Mat(m * m); });
    CHECK(max_diff(sq, MatrixField::constant(g, -Mat::Identity(4, 4))) == 0.0);
    auto r = random_trig_field(Grid(2, 8), 3, 2, 9);
    auto r2 = pointwise_map(r, [](const Mat& m) { return Mat(m * m); });
    for (std::size_t i = 0; i < r.num_points(); ++i) {
        Mat want = r.at(i) * r.at(i);
        CHECK((r2.at(i) - want).norm() <= 1e-14 * (1 + want.norm()));
    }
}

TEST_CASE("linf norm") {
    CHECK(linf_matrix_norm(j_std_field(Grid(4, 4))) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(linf_matrix_norm(j_std_field(Grid(6, 4))) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-14));
    CHECK(linf_matrix_norm(MatrixField(Grid(4, 4))) == 0.0);
}

TEST_CASE("snapshot round trip is bit exact") {
    Grid g(2, 8);
    auto a = random_trig_field(g, 2, 2, 4);
    std::stringstream ss;
    write_snapshot(ss, a);
    const std::string bytes = ss.str();
    CHECK(bytes.size() == 20 + a.data().size() * 8);
    CHECK(bytes.substr(0, 4) == "PACS");
    auto b = read_snapshot(ss);
    CHECK(b.data() == a.data());
    CHECK(b.grid() == a.grid());
    auto c4 = random_trig_field(g, 4, 1, 5);
    std::stringstream s4;
    write_snapshot(s4, c4);
    auto d4 = read_snapshot(s4);
    CHECK(d4.rank() == 4);
    CHECK(d4.data() == c4.data());
}

TEST_CASE("version 1 snapshots remain readable") {
    Grid g(2, 4);
    auto a = random_trig_field(g, 2, 1, 6);
    std::stringstream ss;
    write_snapshot(ss, a);
    std::string bytes = ss.str();
    bytes[4] = 1;
    bytes.erase(16, 4);
    std::stringstream v1(bytes);
    auto b = read_snapshot(v1);
    CHECK(b.rank() == 2);
    CHECK(b.data() == a.data());
}

TEST_CASE("snapshot errors") {
    Grid g(2, 8);
    auto a = random_trig_field(g, 2, 1, 4);
    std::stringstream ss;
    write_snapshot(ss, a);
    std::string bytes = ss.str();
    {
        std::stringstream bad(bytes.substr(0, 100));
        CHECK_THROWS_AS(read_snapshot(bad), FormatError);
    }
    {
        std::string b = bytes;
        b[0] = 'X';
        std::stringstream bad(b);
        CHECK_THROWS_AS(read_snapshot(bad), FormatError);
    }
    {
        std::string b = bytes;
        b[4] = 3;
        std::stringstream bad(b);
        CHECK_THROWS_AS(read_snapshot(bad), UnsupportedVersion);
    }
    {
        std::stringstream bad(bytes.substr(0, 100));
        try {
            read_snapshot(bad);
        } catch (const FormatError& e) {
            CHECK(e.offset == 100);
        }
    }
    std::stringstream out;
    CHECK_THROWS_AS(write_snapshot(out, MatrixField(Grid(2, 8, 1.0), 2)), ArgumentError);
}
