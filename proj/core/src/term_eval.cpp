#include "pacs/term_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <set>

#include "pacs/error.hpp"
#include "pacs/fft.hpp"
#include "pacs/parallel.hpp"
#include "pacs/spectral_ops.hpp"

namespace pacs::terms {

using cplx = std::complex<double>;

namespace {

// ------------------------------------------------------------ compilation

struct FKey {
    Base base = Base::J;
    DerivOp op;
    auto operator<=>(const FKey&) const = default;
};

struct Compiled {
    std::vector<FKey> factors;
    std::map<FKey, int> ids;
    // outer operator -> (factor id sequence -> coefficient)
    std::map<DerivOp, std::map<std::vector<int>, double>> buckets;

    int id(const FKey& k) {
        auto [it, ins] = ids.emplace(k, static_cast<int>(factors.size()));
        if (ins) factors.push_back(k);
        return it->second;
    }
};

void compile_into(Compiled& c, const Expr& e, int n) {
    for (const auto& t : e) {
        std::vector<int> labs = t.outer;
        for (const auto& f : t.factors) labs.insert(labs.end(), f.labels.begin(), f.labels.end());
        std::sort(labs.begin(), labs.end());
        labs.erase(std::unique(labs.begin(), labs.end()), labs.end());
        const std::size_t L = labs.size();
        std::vector<int> val(L, 0);
        auto axis_of = [&](int label) {
            return val[static_cast<std::size_t>(std::lower_bound(labs.begin(), labs.end(), label) - labs.begin())];
        };
        while (true) {
            DerivOp outer;
            outer.lap = t.outer_lap;
            for (int l : t.outer) outer.counts[axis_of(l)] += 1;
            std::vector<int> seq;
            for (const auto& f : t.factors) {
                FKey k{f.base, {}};
                k.op.lap = f.lap;
                for (int l : f.labels) k.op.counts[axis_of(l)] += 1;
                seq.push_back(c.id(k));
            }
            c.buckets[outer][seq] += static_cast<double>(t.coeff);
            std::size_t p = 0;
            while (p < L && ++val[p] == n) val[p++] = 0;
            if (p == L) break;
        }
    }
    for (auto& [op, prods] : c.buckets)
        for (auto it = prods.begin(); it != prods.end();)
            it = (it->second == 0.0) ? prods.erase(it) : std::next(it);
}

// Product schedule for one bucket. Parts >= 0 are factors, < 0 encode
// pair products as -1 - memo.
struct Group {
    bool left = true;
    int key = 0;
    std::vector<std::pair<double, int>> items;
};

struct BucketPlan {
    DerivOp op;
    std::vector<std::pair<double, int>> singles;
    std::vector<Group> groups;
};

struct Schedule {
    std::vector<std::pair<int, int>> memos;
    std::vector<int> transpose_of;  // -1, or an earlier memo whose transpose this is
    std::vector<BucketPlan> buckets;
    std::set<int> used_factors;
    std::size_t group_products = 0;
};

class ScheduleBuilder {
public:
    // `skew`: every factor is exactly skew, so (b a) = (a b)^T.
    ScheduleBuilder(const Compiled& c, bool skew) : c_(c), skew_(skew) {}

    Schedule build(const std::vector<DerivOp>& ops) {
        for (const auto& op : ops) {
            auto it = c_.buckets.find(op);
            if (it == c_.buckets.end() || it->second.empty()) continue;
            BucketPlan bp;
            bp.op = op;
            std::map<std::pair<bool, int>, std::size_t> gidx;
            auto group = [&](bool left, int key) -> Group& {
                auto [g, ins] = gidx.emplace(std::make_pair(left, key), bp.groups.size());
                if (ins) bp.groups.push_back(Group{left, key, {}});
                return bp.groups[g->second];
            };
            for (const auto& [seq, coef] : it->second) {
                for (int f : seq) s_.used_factors.insert(f);
                const std::size_t k = seq.size();
                if (k == 1) {
                    bp.singles.emplace_back(coef, seq[0]);
                } else if (k == 2) {
                    group(true, seq[0]).items.emplace_back(coef, seq[1]);
                } else if (k == 3) {
                    int pos = 3;
                    for (int i = 0; i < 3; ++i)
                        if (c_.factors[seq[i]].base != Base::J) {
                            pos = i;
                            break;
                        }
                    if (pos == 1) group(true, memo(seq[0], seq[1])).items.emplace_back(coef, seq[2]);
                    else if (pos == 2) group(false, seq[2]).items.emplace_back(coef, memo(seq[0], seq[1]));
                    else group(true, seq[0]).items.emplace_back(coef, memo(seq[1], seq[2]));
                } else if (k == 4) {
                    group(true, memo(seq[0], seq[1])).items.emplace_back(coef, memo(seq[2], seq[3]));
                } else {
                    throw ArgumentError("term evaluator supports products of at most four factors");
                }
            }
            s_.group_products += bp.groups.size();
            s_.buckets.push_back(std::move(bp));
        }
        return std::move(s_);
    }

private:
    int memo(int a, int b) {
        auto [it, ins] = memo_ids_.emplace(std::make_pair(a, b), static_cast<int>(s_.memos.size()));
        if (ins) {
            s_.memos.emplace_back(a, b);
            auto rev = memo_ids_.find(std::make_pair(b, a));
            s_.transpose_of.push_back(skew_ && a != b && rev != memo_ids_.end() ? rev->second : -1);
        }
        return -1 - it->second;
    }

    const Compiled& c_;
    bool skew_ = false;
    Schedule s_;
    std::map<std::pair<int, int>, int> memo_ids_;
};

// ------------------------------------------------------------ peeled levels

// Splits the symbol of `op` into (peeled exponents, tail key, coefficient)
// pieces: prod_a (i k_a)^{c_a} (-|k|^2)^lap with |k|^2 split over the
// peeled axes and the tail.
struct TailKey {
    std::array<int, kMaxDim> counts{};
    int lap = 0;
    auto operator<=>(const TailKey&) const = default;
};

struct Piece {
    std::vector<int> peeled;
    TailKey tail;
    double coef = 1.0;
};

std::vector<Piece> split_symbol(const DerivOp& op, int n, int P) {
    std::vector<Piece> out;
    std::vector<int> e(P + 1, 0);
    // enumerate compositions of op.lap into P + 1 parts
    std::function<void(int, int)> rec = [&](int i, int left) {
        if (i == P) {
            e[P] = left;
            double coef = 1.0;
            // multinomial lap! / prod e_i!
            auto fact = [](int x) {
                double r = 1.0;
                for (int j = 2; j <= x; ++j) r *= j;
                return r;
            };
            coef = fact(op.lap);
            for (int v : e) coef /= fact(v);
            Piece p;
            p.peeled.resize(P);
            for (int a = 0; a < P; ++a) p.peeled[a] = op.counts[a] + 2 * e[a];
            for (int a = P; a < n; ++a) p.tail.counts[a] = op.counts[a];
            p.tail.lap = e[P];
            p.coef = coef;
            out.push_back(std::move(p));
            return;
        }
        for (int v = 0; v <= left; ++v) {
            e[i] = v;
            rec(i + 1, left - v);
        }
    };
    rec(0, op.lap);
    return out;
}

struct Levels {
    int P = 0;
    std::vector<std::map<std::vector<int>, int>> index;  // per level
    std::vector<std::vector<std::vector<int>>> tuples;
    std::vector<std::vector<int>> parent;  // level l >= 1: parent index at l - 1
    std::vector<std::vector<int>> expo;    // level l >= 1: exponent on axis l - 1

    explicit Levels(int p) : P(p), index(p + 1), tuples(p + 1), parent(p + 1), expo(p + 1) {
        index[0][{}] = 0;
        tuples[0].push_back({});
        parent[0].push_back(-1);
        expo[0].push_back(0);
    }

    int add(const std::vector<int>& full) {
        int par = 0;
        for (int l = 1; l <= P; ++l) {
            std::vector<int> pre(full.begin(), full.begin() + l);
            auto [it, ins] = index[l].emplace(pre, static_cast<int>(tuples[l].size()));
            if (ins) {
                tuples[l].push_back(pre);
                parent[l].push_back(par);
                expo[l].push_back(pre.back());
            }
            par = it->second;
        }
        return par;
    }
    std::size_t count(int l) const { return tuples[l].size(); }
};

struct Geometry {
    int n = 0, N = 0, P = 0;
    double kappa = 1.0;
    std::vector<int> tail_dims;
    std::size_t tail_modes = 0, tail_pts = 0;
    std::size_t rest(int level) const {  // modes per tuple array at `level`
        std::size_t r = tail_modes;
        for (int l = level; l < P; ++l) r *= static_cast<std::size_t>(N);
        return r;
    }
};

// Tail multipliers, one array of tail_modes values per key.
class TailTable {
public:
    explicit TailTable(const Geometry& g) : g_(g) {}

    const std::vector<cplx>& get(const TailKey& k) {
        auto it = cache_.find(k);
        if (it != cache_.end()) return it->second;
        std::vector<cplx> v(g_.tail_modes);
        const int nt = g_.n - g_.P;
        std::vector<int> dims(nt);
        for (int i = 0; i < nt; ++i) dims[i] = (i == nt - 1) ? g_.N / 2 + 1 : g_.N;
        std::vector<int> ix(nt, 0);
        for (std::size_t m = 0; m < g_.tail_modes; ++m) {
            cplx s = 1.0;
            double k2 = 0.0;
            for (int i = 0; i < nt; ++i) {
                const double kt = g_.kappa * fft::truncated_wavenumber(ix[i], g_.N);
                k2 += kt * kt;
                for (int c = 0; c < k.counts[g_.P + i]; ++c) s *= cplx(0.0, kt);
            }
            for (int c = 0; c < k.lap; ++c) s *= -k2;
            v[m] = s;
            for (int i = nt - 1; i >= 0; --i) {
                if (++ix[i] < dims[i]) break;
                ix[i] = 0;
            }
        }
        return cache_.emplace(k, std::move(v)).first->second;
    }

private:
    const Geometry& g_;
    std::map<TailKey, std::vector<cplx>> cache_;
};

// d += w x without the inf/nan recovery of operator*
inline void cfma(cplx& d, cplx w, cplx x) {
    d = cplx(d.real() + w.real() * x.real() - w.imag() * x.imag(), d.imag() + w.real() * x.imag() + w.imag() * x.real());
}

// (i k kappa)^a e^{sign 2 pi i k x / N}
cplx axis_weight(const Geometry& g, int kidx, int a, int x, int sign) {
    const double kt = g.kappa * fft::truncated_wavenumber(kidx, g.N);
    cplx w = 1.0;
    for (int i = 0; i < a; ++i) w *= cplx(0.0, kt);
    if (w == cplx(0.0)) return w;
    const double ph = sign * 2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(kidx) * x) % g.N) / g.N;
    return w * cplx(std::cos(ph), std::sin(ph));
}

// Spectral data pushed down (synthesis) or folded up (accumulation) through
// the peeled axes.
struct Stack {
    Levels levels;
    int channels = 0;
    std::vector<std::vector<std::vector<cplx>>> arrays;  // [level][tuple] ; level 0 external
    cplx* level0 = nullptr;
    // [level] -> (parent at level - 1, children)
    std::vector<std::vector<std::pair<int, std::vector<int>>>> families;

    static constexpr std::size_t kChunk = 256;

    Stack(int P, int ch) : levels(P), channels(ch) {}

    void allocate(const Geometry& g) {
        arrays.assign(levels.P + 1, {});
        families.assign(levels.P + 1, {});
        for (int l = 1; l <= levels.P; ++l) {
            arrays[l].resize(levels.count(l));
            for (auto& a : arrays[l]) a.assign(g.rest(l) * channels, cplx(0.0));
            std::map<int, std::vector<int>> fam;
            for (std::size_t u = 0; u < levels.count(l); ++u) fam[levels.parent[l][u]].push_back(static_cast<int>(u));
            for (auto& [p, kids] : fam) families[l].emplace_back(p, std::move(kids));
        }
    }
    cplx* data(int l, int t) { return l == 0 ? level0 : arrays[l][t].data(); }

    std::size_t bytes(const Geometry& g) const {
        std::size_t b = 0;
        for (int l = 1; l <= levels.P; ++l) b += levels.count(l) * g.rest(l) * channels * sizeof(cplx);
        return b;
    }

    std::vector<cplx> weights(const Geometry& g, int l, int x, int sign) const {
        std::vector<cplx> w(levels.count(l + 1) * g.N);
        for (std::size_t u = 0; u < levels.count(l + 1); ++u)
            for (int k = 0; k < g.N; ++k) w[u * g.N + k] = axis_weight(g, k, levels.expo[l + 1][u], x, sign);
        return w;
    }

    // level l -> l + 1 at coordinate x on axis l
    void push(const Geometry& g, int l, int x) {
        const std::size_t rest = g.rest(l + 1) * channels;
        const std::vector<cplx> w = weights(g, l, x, +1);
        parallel_for(rest, [&](std::size_t b, std::size_t e) {
            for (std::size_t c0 = b; c0 < e; c0 += kChunk) {
                const std::size_t c1 = std::min(e, c0 + kChunk);
                for (const auto& [p, kids] : families[l + 1]) {
                    const cplx* src = data(l, p);
                    for (int u : kids) std::fill(arrays[l + 1][u].data() + c0, arrays[l + 1][u].data() + c1, cplx(0.0));
                    for (int k = 0; k < g.N; ++k) {
                        const cplx* s = src + static_cast<std::size_t>(k) * rest;
                        for (int u : kids) {
                            const cplx wk = w[static_cast<std::size_t>(u) * g.N + k];
                            if (wk == cplx(0.0)) continue;
                            cplx* d = arrays[l + 1][u].data();
                            for (std::size_t i = c0; i < c1; ++i) cfma(d[i], wk, s[i]);
                        }
                    }
                }
            }
        }, 1 << 12);
    }

    // level l + 1 -> l at coordinate x on axis l
    void fold(const Geometry& g, int l, int x) {
        const std::size_t rest = g.rest(l + 1) * channels;
        const std::vector<cplx> w = weights(g, l, x, -1);
        parallel_for(rest, [&](std::size_t b, std::size_t e) {
            for (std::size_t c0 = b; c0 < e; c0 += kChunk) {
                const std::size_t c1 = std::min(e, c0 + kChunk);
                for (const auto& [p, kids] : families[l + 1]) {
                    cplx* dst = data(l, p);
                    for (int k = 0; k < g.N; ++k) {
                        cplx* d = dst + static_cast<std::size_t>(k) * rest;
                        for (int u : kids) {
                            const cplx wk = w[static_cast<std::size_t>(u) * g.N + k];
                            if (wk == cplx(0.0)) continue;
                            const cplx* s = arrays[l + 1][u].data();
                            for (std::size_t i = c0; i < c1; ++i) cfma(d[i], wk, s[i]);
                        }
                    }
                }
            }
        }, 1 << 12);
    }

    void zero_level(int l) {
        for (auto& a : arrays[l]) std::fill(a.begin(), a.end(), cplx(0.0));
    }
};

// ------------------------------------------------------------ tile kernels

// Tiles hold kLanes points in entry-major order: value (e, t) at e * kLanes + t.
constexpr int kLanes = 8;

template <int R>
void tile_mul(const double* __restrict a, const double* __restrict b, double* __restrict c, int r, bool add) {
    if constexpr (R > 0 && R % 2 == 0) {
        for (int i = 0; i < R; i += 2) {
            double acc[2][R][kLanes];
            for (int q = 0; q < 2; ++q)
                for (int j = 0; j < R; ++j)
                    for (int t = 0; t < kLanes; ++t) acc[q][j][t] = add ? c[((i + q) * R + j) * kLanes + t] : 0.0;
            for (int k = 0; k < R; ++k)
                for (int j = 0; j < R; ++j) {
                    const double* y = b + (k * R + j) * kLanes;
                    for (int q = 0; q < 2; ++q) {
                        const double* x = a + ((i + q) * R + k) * kLanes;
                        for (int t = 0; t < kLanes; ++t) acc[q][j][t] += x[t] * y[t];
                    }
                }
            for (int q = 0; q < 2; ++q)
                for (int j = 0; j < R; ++j)
                    for (int t = 0; t < kLanes; ++t) c[((i + q) * R + j) * kLanes + t] = acc[q][j][t];
        }
    } else {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                double acc[kLanes];
                for (int t = 0; t < kLanes; ++t) acc[t] = add ? c[(i * r + j) * kLanes + t] : 0.0;
                for (int k = 0; k < r; ++k) {
                    const double* x = a + (i * r + k) * kLanes;
                    const double* y = b + (k * r + j) * kLanes;
                    for (int t = 0; t < kLanes; ++t) acc[t] += x[t] * y[t];
                }
                for (int t = 0; t < kLanes; ++t) c[(i * r + j) * kLanes + t] = acc[t];
            }
    }
}

struct TileBuffers {
    std::vector<double> fac, memo, sum, out;
    std::vector<char> have;
};

// Evaluates all buckets of `s` on points [p0, p0 + valid) of the slab.
// `factor_phys[f]` is the physical slab of factor f (nullptr for lambda).
template <int R>
void eval_tile(const Schedule& s, const Compiled& c, int r, bool packed, const Mat& lambda,
               const std::vector<const double*>& factor_phys, int in_channels, std::size_t p0, std::size_t valid,
               const std::vector<double*>& outs, TileBuffers& tb) {
    const int E = r * r;
    const std::size_t block = static_cast<std::size_t>(E) * kLanes;
    tb.fac.resize(c.factors.size() * block);
    tb.memo.resize(s.memos.size() * block);
    tb.sum.resize(block);
    tb.out.resize(block);
    for (int f : s.used_factors) {
        double* dst = tb.fac.data() + static_cast<std::size_t>(f) * block;
        const FKey& k = c.factors[f];
        if (k.base == Base::Lam) {
            for (int e = 0; e < E; ++e) std::fill_n(dst + e * kLanes, kLanes, lambda.data()[e]);
            continue;
        }
        for (int t = 0; t < kLanes; ++t) {
            const std::size_t pt = p0 + std::min<std::size_t>(t, valid - 1);
            const double* p = factor_phys[f] + pt * in_channels;
            if (packed) {
                int ch = 0;
                for (int i = 0; i < r; ++i) {
                    dst[(i * r + i) * kLanes + t] = 0.0;
                    for (int j = i + 1; j < r; ++j, ++ch) {
                        dst[(i * r + j) * kLanes + t] = p[ch];
                        dst[(j * r + i) * kLanes + t] = -p[ch];
                    }
                }
            } else {
                for (int e = 0; e < E; ++e) dst[e * kLanes + t] = p[e];
            }
        }
        if (k.base == Base::K)
            for (int e = 0; e < E; ++e)
                for (int t = 0; t < kLanes; ++t) dst[e * kLanes + t] -= lambda.data()[e];
    }
    tb.have.assign(s.memos.size(), 0);
    std::function<const double*(int)> part = [&](int id) -> const double* {
        if (id >= 0) return tb.fac.data() + static_cast<std::size_t>(id) * block;
        const std::size_t mi = static_cast<std::size_t>(-1 - id);
        double* dst = tb.memo.data() + mi * block;
        if (tb.have[mi]) return dst;
        tb.have[mi] = 1;
        if (const int src = s.transpose_of[mi]; src >= 0) {
            const double* from = part(-1 - src);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j) std::copy_n(from + (j * r + i) * kLanes, kLanes, dst + (i * r + j) * kLanes);
            return dst;
        }
        const auto [a, b] = s.memos[mi];
        tile_mul<R>(part(a), part(b), dst, r, false);
        return dst;
    };
    auto axpy = [block](double coef, const double* x, double* y) {
        for (std::size_t i = 0; i < block; ++i) y[i] += coef * x[i];
    };
    double* out = tb.out.data();
    for (std::size_t bi = 0; bi < s.buckets.size(); ++bi) {
        const BucketPlan& bp = s.buckets[bi];
        std::fill_n(out, block, 0.0);
        for (const auto& [coef, f] : bp.singles) axpy(coef, part(f), out);
        for (const Group& g : bp.groups) {
            const double* sum = nullptr;
            if (g.items.size() == 1 && g.items[0].first == 1.0) {
                sum = part(g.items[0].second);
            } else {
                double* acc = tb.sum.data();
                {
                    const auto [coef, id] = g.items[0];
                    const double* x = part(id);
                    for (std::size_t i = 0; i < block; ++i) acc[i] = coef * x[i];
                }
                for (std::size_t q = 1; q < g.items.size(); ++q) axpy(g.items[q].first, part(g.items[q].second), acc);
                sum = acc;
            }
            if (g.left) tile_mul<R>(part(g.key), sum, out, r, true);
            else tile_mul<R>(sum, part(g.key), out, r, true);
        }
        double* dst = outs[bi] + p0 * E;
        for (std::size_t t = 0; t < valid; ++t)
            for (int e = 0; e < E; ++e) dst[t * E + e] = out[e * kLanes + t];
    }
}

using TileFn = void (*)(const Schedule&, const Compiled&, int, bool, const Mat&, const std::vector<const double*>&, int,
                        std::size_t, std::size_t, const std::vector<double*>&, TileBuffers&);

TileFn tile_fn(int r) {
    switch (r) {
        case 2: return &eval_tile<2>;
        case 4: return &eval_tile<4>;
        case 6: return &eval_tile<6>;
        case 8: return &eval_tile<8>;
        default: return &eval_tile<0>;
    }
}

void run_schedule(const Schedule& s, const Compiled& c, int r, bool packed, const Mat& lambda,
                  const std::vector<const double*>& phys, int in_ch, std::size_t npts, std::size_t tile,
                  const std::vector<double*>& outs) {
    if (s.buckets.empty()) return;
    const TileFn fn = tile_fn(r);
    const std::size_t nblocks = (npts + kLanes - 1) / kLanes;
    parallel_for(nblocks, [&](std::size_t b, std::size_t e) {
        thread_local TileBuffers tb;
        for (std::size_t bi = b; bi < e; ++bi) {
            const std::size_t p0 = bi * kLanes;
            fn(s, c, r, packed, lambda, phys, in_ch, p0, std::min<std::size_t>(kLanes, npts - p0), outs, tb);
        }
    }, std::max<std::size_t>(1, tile / kLanes));
}

bool exactly_skew(const MatrixField& j) {
    const int r = j.rank();
    for (std::size_t i = 0; i < j.num_points(); ++i) {
        const double* p = j.point(i);
        for (int a = 0; a < r; ++a) {
            if (p[a * r + a] != 0.0) return false;
            for (int b = a + 1; b < r; ++b)
                if (p[a * r + b] != -p[b * r + a]) return false;
        }
    }
    return true;
}

bool exactly_skew_matrix(const Mat& m) {
    for (int a = 0; a < m.rows(); ++a)
        for (int b = a; b < m.cols(); ++b)
            if (m(a, b) != -m(b, a)) return false;
    return true;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Physical synthesis of one factor operator on the current slab.
struct SynthOp {
    DerivOp op;
    std::vector<std::pair<int, Piece>> pieces;  // (tuple index at level P, piece)
};

}  // namespace

// ------------------------------------------------------------ public API

MatrixField evaluate_naive(const Expr& e, const MatrixField& j, const Mat& lambda) {
    const Grid& g = j.grid();
    const int n = g.dim;
    Compiled c;
    compile_into(c, e, n);
    Spectrum jh = forward(j);
    std::map<int, MatrixField> cache;
    auto get = [&](int f) -> const MatrixField& {
        auto it = cache.find(f);
        if (it != cache.end()) return it->second;
        const FKey& k = c.factors[f];
        MatrixField v(g, j.rank());
        if (k.base == Base::Lam) {
            v = MatrixField::constant(g, lambda);
        } else {
            Spectrum s = jh;
            apply(s, k.op);
            v = inverse(s, j.rank());
            if (k.base == Base::K) v -= MatrixField::constant(g, lambda);
        }
        return cache.emplace(f, std::move(v)).first->second;
    };
    MatrixField total(g, j.rank());
    for (const auto& [op, prods] : c.buckets) {
        MatrixField acc(g, j.rank());
        for (const auto& [seq, coef] : prods) {
            MatrixField p = get(seq[0]);
            for (std::size_t i = 1; i < seq.size(); ++i) p = multiply(p, get(seq[i]));
            acc.axpy(coef, p);
        }
        if (op.order() == 0) total += acc;
        else total += derivative(acc, op);
    }
    return total;
}

StreamStats evaluate_streaming(const Expr& main, const std::vector<Expr>& extras, const MatrixField& j,
                               const Mat& lambda, const SlabCallback& cb, const StreamOptions& opts) {
    const Grid& grid = j.grid();
    const int n = grid.dim;
    const int r = j.rank();
    const int E = r * r;
    if (n < 2) throw DimensionError("streaming evaluation needs a grid of dimension >= 2");
    if (lambda.rows() != r || lambda.cols() != r) throw DimensionError("lambda has the wrong size");

    Compiled c;
    compile_into(c, main, n);
    std::vector<Compiled> cx(extras.size());
    for (std::size_t i = 0; i < extras.size(); ++i) {
        // extras share the factor table with main so synthesis is shared
        cx[i].factors = c.factors;
        cx[i].ids = c.ids;
        compile_into(cx[i], extras[i], n);
        for (const auto& [op, prods] : cx[i].buckets)
            if (op.order() != 0 && !prods.empty()) throw ArgumentError("extra expressions must be free of outer derivatives");
        c.factors = cx[i].factors;
        c.ids = cx[i].ids;
    }
    for (auto& x : cx) {
        x.factors = c.factors;
        x.ids = c.ids;
    }

    std::vector<DerivOp> div_ops;
    for (const auto& [op, prods] : c.buckets)
        if (op.order() != 0 && !prods.empty()) div_ops.push_back(op);
    const bool packed = exactly_skew(j);
    const bool skew = packed && exactly_skew_matrix(lambda);
    Schedule s1 = ScheduleBuilder(c, skew).build(div_ops);
    Schedule s2 = ScheduleBuilder(c, skew).build({DerivOp{}});
    std::vector<Schedule> sx;
    for (auto& x : cx) sx.push_back(ScheduleBuilder(x, skew).build({DerivOp{}}));

    const int in_ch = packed ? r * (r - 1) / 2 : E;

    Geometry g;
    g.n = n;
    g.N = grid.points_per_axis;
    g.kappa = grid.wave_scale();

    // synthesis operators per pass
    auto synth_ops_for = [&](const std::vector<const Schedule*>& ss) {
        std::set<DerivOp> ops;
        for (const Schedule* s : ss)
            for (int f : s->used_factors)
                if (c.factors[f].base != Base::Lam) ops.insert(c.factors[f].op);
        return std::vector<DerivOp>(ops.begin(), ops.end());
    };
    const std::vector<DerivOp> ops1 = synth_ops_for({&s1});
    std::vector<const Schedule*> p2s{&s2};
    for (auto& s : sx) p2s.push_back(&s);
    const std::vector<DerivOp> ops2 = synth_ops_for(p2s);

    auto estimate = [&](int P) {
        Geometry gg = g;
        gg.P = P;
        gg.tail_dims.assign(n - P, g.N);
        gg.tail_modes = fft::half_size(gg.tail_dims);
        gg.tail_pts = fft::real_size(gg.tail_dims);
        Stack sj(P, in_ch), sa(P, E);
        for (const auto& op : ops1)
            for (const auto& pc : split_symbol(op, n, P)) sj.levels.add(pc.peeled);
        for (const auto& bp : s1.buckets)
            for (const auto& pc : split_symbol(bp.op, n, P)) sa.levels.add(pc.peeled);
        std::size_t b = sj.bytes(gg) + sa.bytes(gg);
        b += ops1.size() * gg.tail_pts * in_ch * sizeof(double);
        b += s1.buckets.size() * gg.tail_pts * E * sizeof(double);
        return b;
    };
    int P = opts.peel;
    if (P <= 0) {
        P = n - 1;
        for (int cand = 1; cand < n; ++cand)
            if (estimate(cand) <= opts.memory_budget) {
                P = cand;
                break;
            }
    }
    P = std::clamp(P, 1, n - 1);
    g.P = P;
    g.tail_dims.assign(n - P, g.N);
    g.tail_modes = fft::half_size(g.tail_dims);
    g.tail_pts = fft::real_size(g.tail_dims);

    StreamStats st;
    st.peel = P;
    st.buckets = s1.buckets.size() + s2.buckets.size();
    st.factors = c.factors.size();
    st.pair_products = s1.memos.size() + s2.memos.size();
    st.group_products = s1.group_products + s2.group_products;

    TailTable tails(g);
    const double inv_np = 1.0 / static_cast<double>(grid.num_points());

    // normalized spectrum of J, packed when exactly skew
    std::vector<cplx> jhat;
    {
        std::vector<double> src;
        const double* in = j.data().data();
        if (packed) {
            src.resize(grid.num_points() * in_ch);
            parallel_for(grid.num_points(), [&](std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) {
                    const double* p = j.point(i);
                    int ch = 0;
                    for (int a = 0; a < r; ++a)
                        for (int bb = a + 1; bb < r; ++bb, ++ch) src[i * in_ch + ch] = p[a * r + bb];
                }
            });
            in = src.data();
        }
        std::vector<int> dims(n, g.N);
        jhat.resize(fft::half_size(dims) * in_ch);
        fft::r2c(dims, in_ch, in, jhat.data());
        for (auto& v : jhat) v *= inv_np;
    }

    auto make_synth = [&](Stack& stack, const std::vector<DerivOp>& ops) {
        std::vector<SynthOp> out;
        for (const auto& op : ops) {
            SynthOp so{op, {}};
            for (const auto& pc : split_symbol(op, n, P)) so.pieces.emplace_back(stack.levels.add(pc.peeled), pc);
            out.push_back(std::move(so));
        }
        return out;
    };

    // Synthesizes every op into physical slab arrays.
    auto synthesize = [&](Stack& stack, const std::vector<SynthOp>& sops, int ch, std::vector<std::vector<double>>& phys,
                          std::vector<cplx>& spec) {
        phys.resize(sops.size());
        spec.resize(g.tail_modes * ch);
        for (std::size_t i = 0; i < sops.size(); ++i) {
            std::fill(spec.begin(), spec.end(), cplx(0.0));
            for (const auto& [tuple, pc] : sops[i].pieces) {
                const std::vector<cplx>& tau = tails.get(pc.tail);
                const cplx* m = stack.data(P, tuple);
                for (std::size_t q = 0; q < g.tail_modes; ++q) {
                    const cplx w = pc.coef * tau[q];
                    if (w == cplx(0.0)) continue;
                    for (int cc = 0; cc < ch; ++cc) cfma(spec[q * ch + cc], w, m[q * ch + cc]);
                }
            }
            phys[i].resize(g.tail_pts * ch);
            fft::c2r(g.tail_dims, ch, spec.data(), phys[i].data());
        }
    };

    auto factor_pointers = [&](const std::vector<SynthOp>& sops, const std::vector<std::vector<double>>& phys) {
        std::vector<const double*> ptr(c.factors.size(), nullptr);
        for (std::size_t f = 0; f < c.factors.size(); ++f) {
            if (c.factors[f].base == Base::Lam) continue;
            for (std::size_t i = 0; i < sops.size(); ++i)
                if (sops[i].op == c.factors[f].op) ptr[f] = phys[i].data();
        }
        return ptr;
    };

    // Walks all slabs: push synthesis stacks down, run leaf, fold targets up.
    auto walk = [&](std::vector<Stack*> pushes, std::vector<Stack*> folds, const std::function<void(std::size_t)>& leaf) {
        std::function<void(int, std::size_t)> rec = [&](int l, std::size_t prefix) {
            if (l == P) {
                leaf(prefix);
                return;
            }
            for (int x = 0; x < g.N; ++x) {
                for (Stack* s : pushes) s->push(g, l, x);
                for (Stack* s : folds) s->zero_level(l + 1);
                rec(l + 1, prefix * g.N + x);
                for (Stack* s : folds) s->fold(g, l, x);
            }
        };
        rec(0, 0);
    };

    std::vector<int> full_dims(n, g.N);
    std::vector<cplx> acc_hat;  // forward transform of the divergence part

    // pass 1: divergence buckets
    auto t1 = std::chrono::steady_clock::now();
    if (!s1.buckets.empty()) {
        acc_hat.assign(fft::half_size(full_dims) * E, cplx(0.0));
        Stack sj(P, in_ch), sa(P, E);
        sj.level0 = jhat.data();
        sa.level0 = acc_hat.data();
        std::vector<SynthOp> sops = make_synth(sj, ops1);
        std::vector<std::vector<std::pair<int, Piece>>> bpieces;
        for (const auto& bp : s1.buckets) {
            std::vector<std::pair<int, Piece>> v;
            for (const auto& pc : split_symbol(bp.op, n, P)) v.emplace_back(sa.levels.add(pc.peeled), pc);
            bpieces.push_back(std::move(v));
        }
        sj.allocate(g);
        sa.allocate(g);
        std::vector<std::vector<double>> phys;
        std::vector<cplx> spec;
        std::vector<std::vector<double>> bucket_out(s1.buckets.size(), std::vector<double>(g.tail_pts * E));
        std::vector<double*> outs;
        for (auto& b : bucket_out) outs.push_back(b.data());
        std::vector<cplx> bspec(g.tail_modes * E);
        walk({&sj}, {&sa}, [&](std::size_t) {
            auto ta = std::chrono::steady_clock::now();
            synthesize(sj, sops, in_ch, phys, spec);
            auto tb = std::chrono::steady_clock::now();
            st.seconds_synthesis += std::chrono::duration<double>(tb - ta).count();
            run_schedule(s1, c, r, packed, lambda, factor_pointers(sops, phys), in_ch, g.tail_pts, opts.tile, outs);
            st.seconds_products += seconds_since(tb);
            for (std::size_t bi = 0; bi < s1.buckets.size(); ++bi) {
                fft::r2c(g.tail_dims, E, bucket_out[bi].data(), bspec.data());
                for (const auto& [tuple, pc] : bpieces[bi]) {
                    const std::vector<cplx>& tau = tails.get(pc.tail);
                    cplx* a = sa.data(P, tuple);
                    for (std::size_t q = 0; q < g.tail_modes; ++q) {
                        const cplx w = pc.coef * tau[q];
                        if (w == cplx(0.0)) continue;
                        for (int cc = 0; cc < E; ++cc) cfma(a[q * E + cc], w, bspec[q * E + cc]);
                    }
                }
            }
        });
        for (auto& v : acc_hat) v *= inv_np;
    }
    st.seconds_pass1 = seconds_since(t1);
    st.seconds_walk = st.seconds_pass1 - st.seconds_synthesis - st.seconds_products;

    // pass 2: divergence part back to physical space, local products, extras
    auto t2 = std::chrono::steady_clock::now();
    {
        Stack sj(P, in_ch), sa(P, E);
        sj.level0 = jhat.data();
        std::vector<SynthOp> sops = make_synth(sj, ops2);
        std::vector<SynthOp> aops;
        if (!acc_hat.empty()) {
            sa.level0 = acc_hat.data();
            aops = make_synth(sa, {DerivOp{}});
        }
        sj.allocate(g);
        sa.allocate(g);
        std::vector<Stack*> pushes;
        if (!sops.empty()) pushes.push_back(&sj);
        if (!aops.empty()) pushes.push_back(&sa);
        std::vector<std::vector<double>> phys, aphys;
        std::vector<cplx> spec, aspec;
        std::vector<double> local(g.tail_pts * E), value(g.tail_pts * E);
        std::vector<std::vector<double>> xout(extras.size(), std::vector<double>(g.tail_pts * E));
        walk(pushes, {}, [&](std::size_t prefix) {
            std::fill(value.begin(), value.end(), 0.0);
            if (!aops.empty()) {
                synthesize(sa, aops, E, aphys, aspec);
                value = aphys[0];
            }
            if (!sops.empty()) synthesize(sj, sops, in_ch, phys, spec);
            auto ptr = factor_pointers(sops, phys);
            if (!s2.buckets.empty()) {
                run_schedule(s2, c, r, packed, lambda, ptr, in_ch, g.tail_pts, opts.tile, {local.data()});
                for (std::size_t i = 0; i < value.size(); ++i) value[i] += local[i];
            }
            std::vector<const double*> xp;
            for (std::size_t i = 0; i < extras.size(); ++i) {
                if (!sx[i].buckets.empty()) run_schedule(sx[i], cx[i], r, packed, lambda, ptr, in_ch, g.tail_pts, opts.tile, {xout[i].data()});
                else std::fill(xout[i].begin(), xout[i].end(), 0.0);
                xp.push_back(xout[i].data());
            }
            cb(prefix * g.tail_pts, g.tail_pts, value.data(), xp);
        });
    }
    st.seconds_pass2 = seconds_since(t2);
    return st;
}

MatrixField evaluate(const Expr& e, const MatrixField& j, const Mat& lambda, const StreamOptions& opts,
                     StreamStats* stats) {
    MatrixField out(j.grid(), j.rank());
    const int E = j.entries();
    auto st = evaluate_streaming(e, {}, j, lambda,
                                 [&](std::size_t first, std::size_t count, const double* v, const std::vector<const double*>&) {
                                     std::copy_n(v, count * E, out.data().data() + first * E);
                                 },
                                 opts);
    if (stats) *stats = st;
    return out;
}

}  // namespace pacs::terms
