#include <benchmark/benchmark.h>

#include <cstddef>

#include "pbal/admm.hpp"
#include "pbal/netharness.hpp"
#include "pbal/sim.hpp"
#include "pbal/solvers.hpp"

namespace {

pbal::SlotInstance instance(std::size_t n) {
    pbal::GridParams p = pbal::GridParams::defaults();
    p.resize(n);
    return pbal::slot_instance(p, 7, 200);
}

void BM_DualBisection(benchmark::State& state) {
    const auto inst = instance(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(pbal::solve_dual_bisection(inst.problem));
    }
}
BENCHMARK(BM_DualBisection)->Arg(2)->Arg(30)->Arg(300);

void BM_Admm(benchmark::State& state) {
    const auto inst = instance(static_cast<std::size_t>(state.range(0)));
    std::size_t iterations = 0;
    for (auto _ : state) {
        const auto res = pbal::run_admm(inst.problem);
        iterations = res.solution.iterations;
        benchmark::DoNotOptimize(res);
    }
    state.counters["admm_iterations"] = static_cast<double>(iterations);
}
BENCHMARK(BM_Admm)->Arg(30)->Arg(300);

void BM_Protocol(benchmark::State& state) {
    const auto inst = instance(30);
    const auto owned = pbal::net::split(inst.problem, inst.state.a);
    pbal::net::ProtocolOptions opts;
    opts.transport = state.range(0) == 0 ? pbal::net::TransportKind::inproc : pbal::net::TransportKind::socket;
    for (auto _ : state) {
        benchmark::DoNotOptimize(pbal::net::run_protocol(owned, opts));
    }
}
BENCHMARK(BM_Protocol)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SimulateSlots(benchmark::State& state) {
    const pbal::GridParams p = pbal::GridParams::defaults();
    const auto policy = static_cast<pbal::Policy>(state.range(0));
    const std::size_t slots = 1000;
    for (auto _ : state) {
        benchmark::DoNotOptimize(pbal::run(policy, pbal::Scenario{1, slots}, p, pbal::RunOptions{false, {}}));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * slots));
}
BENCHMARK(BM_SimulateSlots)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
