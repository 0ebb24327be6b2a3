#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pacs {

inline constexpr int kMaxDim = 6;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

// Uniform periodic lattice on the torus [0, length)^dim.
struct Grid {
    int dim = 4;
    int points_per_axis = 8;
    double spacing = 2.0 * std::numbers::pi / 8;
    double cell_volume = std::pow(2.0 * std::numbers::pi / 8, 4);
    double length = 2.0 * std::numbers::pi;

    Grid() = default;
    Grid(int dim, int n, double length = 2.0 * std::numbers::pi);

    std::size_t num_points() const;
    double volume() const { return std::pow(length, dim); }
    // 2*pi/length: converts integer wavenumbers into physical ones.
    double wave_scale() const { return 2.0 * std::numbers::pi / length; }
    double coord(int i) const { return spacing * i; }
    void unravel(std::size_t idx, int* out) const;
    std::size_t ravel(const int* ix) const;

    friend bool operator==(const Grid& a, const Grid& b);
};

// One rank x rank real matrix per grid point. Storage is row-major over the
// grid multi-index, then row-major over matrix entries. rank defaults to
// grid.dim.
class MatrixField {
public:
    MatrixField() = default;
    explicit MatrixField(const Grid& g, int rank = 0);
    MatrixField(const Grid& g, int rank, std::vector<double> data);

    static MatrixField constant(const Grid& g, const Mat& value);
    static MatrixField from_function(const Grid& g, int rank,
                                     const std::function<Mat(const double* x)>& f);

    const Grid& grid() const { return grid_; }
    int rank() const { return rank_; }
    int entries() const { return rank_ * rank_; }
    std::size_t num_points() const { return grid_.num_points(); }

    double* point(std::size_t i) { return data_.data() + i * entries(); }
    const double* point(std::size_t i) const { return data_.data() + i * entries(); }
    MatMap at(std::size_t i) { return MatMap(point(i), rank_, rank_); }
    ConstMatMap at(std::size_t i) const { return ConstMatMap(point(i), rank_, rank_); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    MatrixField& operator+=(const MatrixField& o);
    MatrixField& operator-=(const MatrixField& o);
    MatrixField& operator*=(double s);
    // this += s * o
    MatrixField& axpy(double s, const MatrixField& o);

    bool all_finite() const;
    Mat mean() const;

private:
    Grid grid_;
    int rank_ = 0;
    std::vector<double> data_;
};

MatrixField operator+(MatrixField a, const MatrixField& b);
MatrixField operator-(MatrixField a, const MatrixField& b);
MatrixField operator*(double s, MatrixField a);

// Pointwise products and commutator.
MatrixField multiply(const MatrixField& a, const MatrixField& b);
MatrixField commutator(const MatrixField& a, const MatrixField& b);
MatrixField transpose(const MatrixField& a);

void check_same_shape(const MatrixField& a, const MatrixField& b, const char* where);

double field_inner_product(const MatrixField& a, const MatrixField& b);
double l2_norm(const MatrixField& a);
MatrixField pointwise_map(const MatrixField& a, const std::function<Mat(const Mat&)>& f);
double linf_matrix_norm(const MatrixField& a);
// Largest absolute entry over the whole field.
double max_abs_entry(const MatrixField& a);

// Block diagonal [[0,-1],[1,0]] blocks.
Mat j_std(int rank);
MatrixField j_std_field(const Grid& g, int rank = 0);

// Snapshot format: "PACS", version u32, dim u32, N u32, rank u32, then
// little endian f64 entries in storage order. Version 1 files (no rank
// field, rank == dim) are still readable.
inline constexpr std::uint32_t kSnapshotVersion = 2;
void write_snapshot(std::ostream& os, const MatrixField& f);
MatrixField read_snapshot(std::istream& is);
void save_snapshot(const std::string& path, const MatrixField& f);
MatrixField load_snapshot(const std::string& path);

}  // namespace pacs
