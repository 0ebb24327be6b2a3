#include "pacs/grid_field.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pacs/error.hpp"
#include "pacs/parallel.hpp"

namespace pacs {

Grid::Grid(int d, int n, double len) : dim(d), points_per_axis(n), length(len) {
    if (d < 1 || d > kMaxDim) throw DimensionError("grid dimension must be in 1.." + std::to_string(kMaxDim));
    if (n < 4 || n % 2 != 0) throw DimensionError("points per axis must be even and >= 4, got " + std::to_string(n));
    if (!(len > 0.0)) throw ArgumentError("grid length must be positive");
    spacing = len / n;
    cell_volume = std::pow(spacing, d);
}

std::size_t Grid::num_points() const {
    std::size_t p = 1;
    for (int i = 0; i < dim; ++i) p *= static_cast<std::size_t>(points_per_axis);
    return p;
}

void Grid::unravel(std::size_t idx, int* out) const {
    for (int a = dim - 1; a >= 0; --a) {
        out[a] = static_cast<int>(idx % points_per_axis);
        idx /= points_per_axis;
    }
}

std::size_t Grid::ravel(const int* ix) const {
    std::size_t idx = 0;
    for (int a = 0; a < dim; ++a) {
        int v = ix[a] % points_per_axis;
        if (v < 0) v += points_per_axis;
        idx = idx * points_per_axis + static_cast<std::size_t>(v);
    }
    return idx;
}

bool operator==(const Grid& a, const Grid& b) {
    return a.dim == b.dim && a.points_per_axis == b.points_per_axis && a.length == b.length;
}

MatrixField::MatrixField(const Grid& g, int rank) : grid_(g), rank_(rank > 0 ? rank : g.dim) {
    data_.assign(g.num_points() * entries(), 0.0);
}

MatrixField::MatrixField(const Grid& g, int rank, std::vector<double> data)
    : grid_(g), rank_(rank > 0 ? rank : g.dim), data_(std::move(data)) {
    if (data_.size() != g.num_points() * entries()) throw DimensionError("field data size does not match grid");
}

MatrixField MatrixField::constant(const Grid& g, const Mat& value) {
    if (value.rows() != value.cols()) throw DimensionError("constant field needs a square matrix");
    MatrixField f(g, static_cast<int>(value.rows()));
    const int e = f.entries();
    parallel_for(f.num_points(), [&](std::size_t b, std::size_t end) {
        for (std::size_t i = b; i < end; ++i) std::copy_n(value.data(), e, f.point(i));
    });
    return f;
}

MatrixField MatrixField::from_function(const Grid& g, int rank, const std::function<Mat(const double*)>& fn) {
    MatrixField f(g, rank);
    parallel_for(f.num_points(), [&](std::size_t b, std::size_t end) {
        int ix[kMaxDim];
        double x[kMaxDim];
        for (std::size_t i = b; i < end; ++i) {
            g.unravel(i, ix);
            for (int a = 0; a < g.dim; ++a) x[a] = g.coord(ix[a]);
            Mat m = fn(x);
            if (m.rows() != f.rank() || m.cols() != f.rank()) throw DimensionError("from_function: wrong matrix size");
            std::copy_n(m.data(), f.entries(), f.point(i));
        }
    });
    return f;
}

void check_same_shape(const MatrixField& a, const MatrixField& b, const char* where) {
    if (!(a.grid() == b.grid()) || a.rank() != b.rank())
        throw DimensionError(std::string(where) + ": grid or matrix size mismatch");
}

MatrixField& MatrixField::operator+=(const MatrixField& o) { return axpy(1.0, o); }
MatrixField& MatrixField::operator-=(const MatrixField& o) { return axpy(-1.0, o); }

MatrixField& MatrixField::operator*=(double s) {
    parallel_for(data_.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) data_[i] *= s;
    });
    return *this;
}

MatrixField& MatrixField::axpy(double s, const MatrixField& o) {
    check_same_shape(*this, o, "axpy");
    const double* src = o.data_.data();
    parallel_for(data_.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) data_[i] += s * src[i];
    });
    return *this;
}

bool MatrixField::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Mat MatrixField::mean() const {
    const int e = entries();
    Mat m(rank_, rank_);
    for (int c = 0; c < e; ++c) {
        double s = parallel_sum(num_points(), [&](std::size_t b, std::size_t end) {
            double acc = 0.0;
            for (std::size_t i = b; i < end; ++i) acc += data_[i * e + c];
            return acc;
        });
        m.data()[c] = s / static_cast<double>(num_points());
    }
    return m;
}

MatrixField operator+(MatrixField a, const MatrixField& b) { return a += b; }
MatrixField operator-(MatrixField a, const MatrixField& b) { return a -= b; }
MatrixField operator*(double s, MatrixField a) { return a *= s; }

MatrixField multiply(const MatrixField& a, const MatrixField& b) {
    check_same_shape(a, b, "multiply");
    MatrixField out(a.grid(), a.rank());
    parallel_for(a.num_points(), [&](std::size_t s, std::size_t e) {
        for (std::size_t i = s; i < e; ++i) out.at(i).noalias() = a.at(i) * b.at(i);
    });
    return out;
}

MatrixField commutator(const MatrixField& a, const MatrixField& b) {
    check_same_shape(a, b, "commutator");
    MatrixField out(a.grid(), a.rank());
    parallel_for(a.num_points(), [&](std::size_t s, std::size_t e) {
        for (std::size_t i = s; i < e; ++i) out.at(i).noalias() = a.at(i) * b.at(i) - b.at(i) * a.at(i);
    });
    return out;
}

MatrixField transpose(const MatrixField& a) {
    MatrixField out(a.grid(), a.rank());
    parallel_for(a.num_points(), [&](std::size_t s, std::size_t e) {
        for (std::size_t i = s; i < e; ++i) out.at(i) = a.at(i).transpose();
    });
    return out;
}

double field_inner_product(const MatrixField& a, const MatrixField& b) {
    check_same_shape(a, b, "field_inner_product");
    const double* x = a.data().data();
    const double* y = b.data().data();
    const std::size_t e = static_cast<std::size_t>(a.entries());
    double s = parallel_sum(a.num_points(), [&](std::size_t b0, std::size_t b1) {
        double acc = 0.0;
        for (std::size_t i = b0 * e; i < b1 * e; ++i) acc += x[i] * y[i];
        return acc;
    });
    return s * a.grid().cell_volume;
}

double l2_norm(const MatrixField& a) { return std::sqrt(std::max(0.0, field_inner_product(a, a))); }

MatrixField pointwise_map(const MatrixField& a, const std::function<Mat(const Mat&)>& f) {
    MatrixField out(a.grid(), a.rank());
    parallel_for(a.num_points(), [&](std::size_t s, std::size_t e) {
        Mat m;
        for (std::size_t i = s; i < e; ++i) {
            m = a.at(i);
            Mat r = f(m);
            if (r.rows() != a.rank() || r.cols() != a.rank()) throw DimensionError("pointwise_map: wrong result size");
            out.at(i) = r;
        }
    });
    return out;
}

double linf_matrix_norm(const MatrixField& a) {
    const int e = a.entries();
    return parallel_max(a.num_points(), [&](std::size_t s, std::size_t end) {
        double mx = 0.0;
        for (std::size_t i = s; i < end; ++i) {
            const double* p = a.point(i);
            double acc = 0.0;
            for (int c = 0; c < e; ++c) acc += p[c] * p[c];
            mx = std::max(mx, acc);
        }
        return std::sqrt(mx);
    });
}

double max_abs_entry(const MatrixField& a) {
    const double* x = a.data().data();
    return parallel_max(a.data().size(), [&](std::size_t s, std::size_t e) {
        double mx = 0.0;
        for (std::size_t i = s; i < e; ++i) mx = std::max(mx, std::abs(x[i]));
        return mx;
    });
}

Mat j_std(int rank) {
    if (rank < 2 || rank % 2 != 0) throw DimensionError("J_std needs an even matrix size");
    Mat j = Mat::Zero(rank, rank);
    for (int i = 0; i < rank; i += 2) {
        j(i, i + 1) = -1.0;
        j(i + 1, i) = 1.0;
    }
    return j;
}

MatrixField j_std_field(const Grid& g, int rank) { return MatrixField::constant(g, j_std(rank > 0 ? rank : g.dim)); }

// ------------------------------------------------------------------ snapshots

namespace {

constexpr char kMagic[4] = {'P', 'A', 'C', 'S'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
    auto v = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
    std::istream& is;
    std::size_t offset = 0;

    void read(unsigned char* dst, std::size_t n, const char* what) {
        is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        auto got = static_cast<std::size_t>(is.gcount());
        if (got != n) throw FormatError(std::string("truncated snapshot while reading ") + what, offset + got);
        offset += n;
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        read(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
};

}  // namespace

void write_snapshot(std::ostream& os, const MatrixField& f) {
    if (f.grid().length != 2.0 * std::numbers::pi)
        throw ArgumentError("snapshots store only fields on the standard 2*pi torus");
    os.write(kMagic, 4);
    put_u32(os, kSnapshotVersion);
    put_u32(os, static_cast<std::uint32_t>(f.grid().dim));
    put_u32(os, static_cast<std::uint32_t>(f.grid().points_per_axis));
    put_u32(os, static_cast<std::uint32_t>(f.rank()));
    for (double v : f.data()) put_f64(os, v);
    if (!os) throw Error("failed to write snapshot");
}

MatrixField read_snapshot(std::istream& is) {
    Reader r{is};
    unsigned char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad snapshot magic", 0);
    const std::uint32_t version = r.u32("version");
    if (version != 1 && version != kSnapshotVersion) throw UnsupportedVersion(version);
    const std::uint32_t dim = r.u32("dim");
    const std::uint32_t n = r.u32("N");
    if (dim < 1 || dim > static_cast<std::uint32_t>(kMaxDim)) throw FormatError("invalid dimension in snapshot", 8);
    if (n < 4 || n % 2 != 0 || n > 4096) throw FormatError("invalid points per axis in snapshot", 12);
    const std::uint32_t rank = version == 1 ? dim : r.u32("rank");
    if (rank < 1 || rank > 64) throw FormatError("invalid matrix size in snapshot", 16);
    Grid g(static_cast<int>(dim), static_cast<int>(n));
    std::vector<double> data(g.num_points() * rank * rank);
    std::vector<unsigned char> buf(data.size() * 8);
    r.read(buf.data(), buf.size(), "field data");
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint64_t v = 0;
        for (int b = 7; b >= 0; --b) v = (v << 8) | buf[i * 8 + b];
        data[i] = std::bit_cast<double>(v);
        if (!std::isfinite(data[i])) throw FormatError("non-finite value in snapshot", r.offset - buf.size() + i * 8);
    }
    return MatrixField(g, static_cast<int>(rank), std::move(data));
}

void save_snapshot(const std::string& path, const MatrixField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_snapshot(os, f);
}

MatrixField load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    return read_snapshot(is);
}

}  // namespace pacs
