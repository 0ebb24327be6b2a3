#include <benchmark/benchmark.h>

#include "pacs/acs_core.hpp"
#include "pacs/energy_el.hpp"
#include "pacs/identity_suite.hpp"
#include "pacs/optimizer.hpp"
#include "pacs/regularity_monitor.hpp"
#include "pacs/spectral_ops.hpp"

using namespace pacs;

namespace {

AcsField field(int dim, int n) { return random_acs(Grid(dim, n), 2, 0.3, 7, dim == 2 ? 4 : dim); }

void BM_ForwardInverse(benchmark::State& st) {
    const AcsField j = field(4, static_cast<int>(st.range(0)));
    for (auto _ : st) {
        Spectrum s = forward(j.field());
        benchmark::DoNotOptimize(inverse(s, j.rank()));
    }
    st.SetItemsProcessed(st.iterations() * static_cast<long>(j.grid().num_points()));
}
BENCHMARK(BM_ForwardInverse)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Energy(benchmark::State& st) {
    const AcsField j = field(4, static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(energy(j, EnergyOrder(2)));
}
BENCHMARK(BM_Energy)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RiemannianGradient(benchmark::State& st) {
    const AcsField j = field(4, static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(riemannian_gradient(j, EnergyOrder(2)));
}
BENCHMARK(BM_RiemannianGradient)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Retract(benchmark::State& st) {
    const AcsField j = field(4, static_cast<int>(st.range(0)));
    const MatrixField s = descent_direction(j, EnergyOrder(2));
    for (auto _ : st) benchmark::DoNotOptimize(retract(j, s, 0.1));
}
BENCHMARK(BM_Retract)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_GradientNorm(benchmark::State& st) {
    const AcsField j = field(4, 16);
    const int l = static_cast<int>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(gradient_norm(j.field(), l));
}
BENCHMARK(BM_GradientNorm)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_Prop82(benchmark::State& st) {
    const int m = static_cast<int>(st.range(0));
    const AcsField j = field(2 * m, m == 3 ? 6 : 16);
    const Mat lam = default_lambda(j.field());
    for (auto _ : st) benchmark::DoNotOptimize(check_prop82(j, EnergyOrder(m), lam));
}
BENCHMARK(BM_Prop82)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_DecayProfile(benchmark::State& st) {
    const AcsField j = field(2, 128);
    for (auto _ : st) benchmark::DoNotOptimize(decay_profile(j.field(), {0, 0}, 2.0, 0.5, 4, 1));
}
BENCHMARK(BM_DecayProfile)->Unit(benchmark::kMillisecond);

void BM_OptimizerStep(benchmark::State& st) {
    const AcsField j = field(4, 8);
    OptimizerConfig oc;
    oc.m = 2;
    oc.max_iters = 1;
    oc.preconditioner = Preconditioner::Sobolev;
    for (auto _ : st) benchmark::DoNotOptimize(minimize(j, oc));
}
BENCHMARK(BM_OptimizerStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
