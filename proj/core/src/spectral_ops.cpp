#include "pacs/spectral_ops.hpp"

#include <algorithm>
#include <cmath>

#include "pacs/error.hpp"
#include "pacs/fft.hpp"
#include "pacs/parallel.hpp"

namespace pacs {

using cplx = std::complex<double>;

int DerivOp::order() const {
    int o = 2 * lap;
    for (int c : counts) o += c;
    return o;
}

DerivOp DerivOp::axis(int a, int times) {
    DerivOp d;
    d.counts.at(static_cast<std::size_t>(a)) = times;
    return d;
}

DerivOp DerivOp::laplacian(int times) {
    DerivOp d;
    d.lap = times;
    return d;
}

DerivOp DerivOp::operator*(const DerivOp& o) const {
    DerivOp d = *this;
    for (int a = 0; a < kMaxDim; ++a) d.counts[a] += o.counts[a];
    d.lap += o.lap;
    return d;
}

DerivativePlan::DerivativePlan(const Grid& g, int mo, bool dl) : grid(g), max_order(mo), dealias(dl) {
    if (mo < 1) throw ArgumentError("derivative plan needs max_order >= 1");
}

namespace {

std::vector<int> real_dims(const Grid& g) { return std::vector<int>(g.dim, g.points_per_axis); }

// Mode multi-index for a half-spectrum linear index.
void unravel_mode(const Grid& g, std::size_t idx, int* k) {
    const int n = g.points_per_axis;
    k[g.dim - 1] = static_cast<int>(idx % (n / 2 + 1));
    idx /= (n / 2 + 1);
    for (int a = g.dim - 2; a >= 0; --a) {
        k[a] = static_cast<int>(idx % n);
        idx /= n;
    }
}

cplx ipow(cplx z, int p) {
    cplx r = 1.0;
    for (int i = 0; i < p; ++i) r *= z;
    return r;
}

}  // namespace

cplx symbol(const Grid& g, const DerivOp& op, const int* k) {
    const double s = g.wave_scale();
    const int n = g.points_per_axis;
    cplx v = 1.0;
    double k2 = 0.0;
    for (int a = 0; a < g.dim; ++a) {
        const double kt = s * fft::truncated_wavenumber(k[a], n);
        k2 += kt * kt;
        if (op.counts[a]) v *= ipow(cplx(0.0, kt), op.counts[a]);
    }
    for (int i = 0; i < op.lap; ++i) v *= -k2;
    return v;
}

Spectrum forward(const Grid& g, int channels, const double* data) {
    Spectrum s{g, channels, {}};
    const auto dims = real_dims(g);
    s.data.resize(fft::half_size(dims) * channels);
    fft::r2c(dims, channels, data, s.data.data());
    return s;
}

Spectrum forward(const MatrixField& a) { return forward(a.grid(), a.entries(), a.data().data()); }

void inverse(const Spectrum& s, double* out) {
    std::vector<cplx> tmp = s.data;
    fft::c2r(real_dims(s.grid), s.channels, tmp.data(), out);
    const double scale = 1.0 / static_cast<double>(s.grid.num_points());
    const std::size_t total = s.grid.num_points() * s.channels;
    parallel_for(total, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] *= scale;
    });
}

MatrixField inverse(const Spectrum& s, int rank) {
    if (rank * rank != s.channels) throw DimensionError("inverse: channel count does not match matrix size");
    MatrixField f(s.grid, rank);
    inverse(s, f.data().data());
    return f;
}

void apply(Spectrum& s, const DerivOp& op) {
    if (op.order() == 0) return;
    const Grid& g = s.grid;
    const int ch = s.channels;
    parallel_for(s.num_modes(), [&](std::size_t b, std::size_t e) {
        int k[kMaxDim];
        for (std::size_t i = b; i < e; ++i) {
            unravel_mode(g, i, k);
            const cplx v = symbol(g, op, k);
            cplx* p = s.data.data() + i * ch;
            for (int c = 0; c < ch; ++c) p[c] *= v;
        }
    });
}

void truncate_two_thirds(Spectrum& s) {
    const Grid& g = s.grid;
    const int n = g.points_per_axis;
    const int ch = s.channels;
    parallel_for(s.num_modes(), [&](std::size_t b, std::size_t e) {
        int k[kMaxDim];
        for (std::size_t i = b; i < e; ++i) {
            unravel_mode(g, i, k);
            bool drop = false;
            for (int a = 0; a < g.dim && !drop; ++a) drop = 3 * std::abs(fft::wavenumber(k[a], n)) > n;
            if (drop) std::fill_n(s.data.data() + i * ch, ch, cplx(0.0));
        }
    });
}

double spectral_norm_sq(const Spectrum& s, const DerivOp& op) {
    const Grid& g = s.grid;
    const int n = g.points_per_axis;
    const int ch = s.channels;
    const double np = static_cast<double>(g.num_points());
    // Parseval on the half spectrum: interior modes of the last axis stand
    // for a conjugate pair.
    double sum = parallel_sum(s.num_modes(), [&](std::size_t b, std::size_t e) {
        int k[kMaxDim];
        double acc = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            unravel_mode(g, i, k);
            const double w = (k[g.dim - 1] == 0 || 2 * k[g.dim - 1] == n) ? 1.0 : 2.0;
            const double sym = std::norm(symbol(g, op, k));
            if (sym == 0.0) continue;
            const cplx* p = s.data.data() + i * ch;
            double m2 = 0.0;
            for (int c = 0; c < ch; ++c) m2 += std::norm(p[c]);
            acc += w * sym * m2;
        }
        return acc;
    });
    return sum * g.volume() / (np * np);
}

MatrixField derivative(const DerivativePlan& plan, const MatrixField& a, const DerivOp& op) {
    if (!(plan.grid == a.grid())) throw DimensionError("derivative: plan grid differs from field grid");
    if (op.order() > plan.max_order)
        throw ArgumentError("derivative order " + std::to_string(op.order()) + " exceeds plan max_order " +
                            std::to_string(plan.max_order));
    return derivative(a, op);
}

MatrixField derivative(const MatrixField& a, const DerivOp& op) {
    for (int x = a.grid().dim; x < kMaxDim; ++x)
        if (op.counts[x] != 0) throw ArgumentError("derivative along an axis beyond the grid dimension");
    if (op.lap < 0) throw ArgumentError("negative Laplacian power");
    if (op.order() == 0) return a;
    Spectrum s = forward(a);
    apply(s, op);
    return inverse(s, a.rank());
}

MatrixField partial(const DerivativePlan& plan, const MatrixField& a, int axis) {
    if (axis < 0 || axis >= a.grid().dim) throw ArgumentError("partial: axis out of range");
    return derivative(plan, a, DerivOp::axis(axis));
}

MatrixField laplacian(const DerivativePlan& plan, const MatrixField& a) {
    return derivative(plan, a, DerivOp::laplacian(1));
}

MatrixField iterated_laplacian(const DerivativePlan& plan, const MatrixField& a, int k) {
    if (k < 0) throw ArgumentError("iterated_laplacian: k must be non-negative");
    return derivative(plan, a, DerivOp::laplacian(k));
}

MatrixField partial(const MatrixField& a, int axis) {
    if (axis < 0 || axis >= a.grid().dim) throw ArgumentError("partial: axis out of range");
    return derivative(a, DerivOp::axis(axis));
}

MatrixField laplacian(const MatrixField& a) { return derivative(a, DerivOp::laplacian(1)); }

MatrixField iterated_laplacian(const MatrixField& a, int k) {
    if (k < 0) throw ArgumentError("iterated_laplacian: k must be non-negative");
    return derivative(a, DerivOp::laplacian(k));
}

const MatrixField& GradientTensor::operator()(std::vector<int> axes) const {
    std::sort(axes.begin(), axes.end());
    auto it = std::find(indices.begin(), indices.end(), axes);
    if (it == indices.end()) throw ArgumentError("gradient tensor index not present");
    return components[static_cast<std::size_t>(it - indices.begin())];
}

GradientTensor gradient_tensor(const DerivativePlan& plan, const MatrixField& a, int k) {
    if (k < 0) throw ArgumentError("gradient_tensor: k must be non-negative");
    if (k > plan.max_order) throw ArgumentError("gradient_tensor: order exceeds plan max_order");
    if (!(plan.grid == a.grid())) throw DimensionError("gradient_tensor: plan grid differs from field grid");
    const int n = a.grid().dim;
    GradientTensor t;
    t.order = k;
    Spectrum base = forward(a);
    std::vector<int> idx(k, 0);
    auto factorial = [](int x) {
        long r = 1;
        for (int i = 2; i <= x; ++i) r *= i;
        return r;
    };
    while (true) {
        DerivOp op;
        for (int v : idx) op.counts[v] += 1;
        long mult = factorial(k);
        for (int ax = 0; ax < n; ++ax) mult /= factorial(op.counts[ax]);
        Spectrum s = base;
        apply(s, op);
        t.indices.push_back(idx);
        t.multiplicity.push_back(static_cast<int>(mult));
        t.components.push_back(inverse(s, a.rank()));
        // next non-decreasing sequence
        int p = k - 1;
        while (p >= 0 && idx[p] == n - 1) --p;
        if (p < 0) break;
        ++idx[p];
        for (int q = p + 1; q < k; ++q) idx[q] = idx[p];
    }
    return t;
}

MatrixField dealiased(const MatrixField& a) {
    Spectrum s = forward(a);
    truncate_two_thirds(s);
    return inverse(s, a.rank());
}

MatrixField product(const DerivativePlan& plan, const MatrixField& a, const MatrixField& b) {
    MatrixField p = multiply(a, b);
    return plan.dealias ? dealiased(p) : p;
}

}  // namespace pacs

namespace pacs {

MatrixField resample(const MatrixField& a, const Grid& target, const std::vector<double>& offset) {
    const Grid& g = a.grid();
    const int n = g.dim, N = g.points_per_axis, M = target.points_per_axis;
    if (target.dim != n) throw DimensionError("resample: dimension mismatch");
    if (M < N) throw ArgumentError("resample: target grid must not be coarser than the source");
    if (!offset.empty() && static_cast<int>(offset.size()) != n) throw DimensionError("resample: offset size");
    const int ch = a.entries();
    Spectrum s = forward(a);
    const std::vector<int> tdims(n, M);
    std::vector<cplx> t(fft::half_size(tdims) * ch, cplx(0.0));
    const double inv = 1.0 / static_cast<double>(g.num_points());
    const double ws = g.wave_scale();
    const int th = M / 2 + 1;
    for (std::size_t i = 0; i < s.num_modes(); ++i) {
        int k[kMaxDim];
        unravel_mode(g, i, k);
        int w[kMaxDim];
        std::vector<int> nyq;
        for (int d = 0; d < n; ++d) {
            w[d] = fft::wavenumber(k[d], N);
            if (d < n - 1 && 2 * k[d] == N) nyq.push_back(d);
        }
        double weight = inv;
        if (2 * k[n - 1] == N && M > N) weight *= 0.5;
        const int combos = 1 << nyq.size();
        for (int c = 0; c < combos; ++c) {
            int ww[kMaxDim];
            std::copy(w, w + n, ww);
            for (std::size_t q = 0; q < nyq.size(); ++q)
                if (c & (1 << q)) ww[nyq[q]] = -ww[nyq[q]];
            double ph = 0.0;
            if (!offset.empty())
                for (int d = 0; d < n; ++d) ph += ws * ww[d] * offset[d];
            const cplx f = std::polar(weight / combos, ph);
            std::size_t idx = 0;
            for (int d = 0; d < n - 1; ++d) idx = idx * M + static_cast<std::size_t>((ww[d] + M) % M);
            idx = idx * th + static_cast<std::size_t>(ww[n - 1]);
            const cplx* src = s.data.data() + i * ch;
            cplx* dst = t.data() + idx * ch;
            for (int e = 0; e < ch; ++e) dst[e] += f * src[e];
        }
    }
    MatrixField out(target, a.rank());
    fft::c2r(tdims, ch, t.data(), out.data().data());
    return out;
}

}  // namespace pacs
