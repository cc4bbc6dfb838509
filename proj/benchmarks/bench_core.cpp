// Microbenchmarks for the hot paths: effective-Hamiltonian evaluation with
// dual-number derivatives, stability blocks, trajectory integration, the
// Newton shooting solver, and the exact oracle.

#include <benchmark/benchmark.h>

#include "semiprop/exact.hpp"
#include "semiprop/propagator.hpp"

using namespace semiprop;

namespace {

VectorXcd vec1(cplx a) {
    VectorXcd v(1);
    v << a;
    return v;
}

struct SpinCase {
    Family fam;
    OperatorPolynomial H;
    PhasePoint p;
    SpinCase(double J, double chi)
        : fam(Family::spin({J})),
          H(make_poly(fam, {{cplx(chi), {"Jz1", "Jz1"}}, {cplx(1.0), {"Jz1"}}})),
          p{vec1(cplx(0.5, 0.15)), vec1(cplx(0.45, -0.1))} {}
};

void BM_effective_hamiltonian_value(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    for (auto _ : state)
        benchmark::DoNotOptimize(effective_hamiltonian_value(c.fam, c.H, c.p, 0.0));
}
BENCHMARK(BM_effective_hamiltonian_value)->Arg(1)->Arg(5)->Arg(20);

void BM_effective_hamiltonian_full(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(effective_hamiltonian(c.fam, c.H, c.p, 0.0));
}
BENCHMARK(BM_effective_hamiltonian_full)->Arg(1)->Arg(5)->Arg(20);

void BM_stability_blocks(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(stability_blocks(c.fam, c.H, c.p, 0.0));
}
BENCHMARK(BM_stability_blocks)->Arg(1)->Arg(5)->Arg(20);

void BM_integrate_trajectory(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    for (auto _ : state) {
        Trajectory tr = integrate_trajectory(c.fam, c.H, c.p.z, c.p.zbar, 0.0, 1.0, 1e-10);
        benchmark::DoNotOptimize(tr.final().action_acc);
    }
}
BENCHMARK(BM_integrate_trajectory)->Arg(1)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_solve_bvp(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    VectorXcd z_f_star = vec1(cplx(0.4, -0.1));
    for (auto _ : state) {
        Trajectory tr = solve_bvp(c.fam, c.H, c.p.z, z_f_star, 0.0, 1.0, c.p.z.conjugate());
        benchmark::DoNotOptimize(tr.zbar_i);
    }
}
BENCHMARK(BM_solve_bvp)->Arg(1)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_propagate_exact(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    VectorXcd z_f = vec1(cplx(0.4, 0.1));
    for (auto _ : state) {
        ExactResult r = propagate_exact(c.fam, c.H, c.p.z, z_f, 0.0, 1.0);
        benchmark::DoNotOptimize(r.amplitude);
    }
}
BENCHMARK(BM_propagate_exact)->Arg(5)->Arg(20);

void BM_riccati_integration(benchmark::State& state) {
    SpinCase c(double(state.range(0)), 0.1);
    IntegrationOptions opts;
    opts.with_riccati = true;
    for (auto _ : state) {
        Trajectory tr = integrate_trajectory(c.fam, c.H, c.p.z, c.p.zbar, 0.0, 1.0, 1e-10, opts);
        benchmark::DoNotOptimize(tr.final().riccati_acc);
    }
}
BENCHMARK(BM_riccati_integration)->Arg(5)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
