// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP prefill kernels, plus one decode step.

#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>

#include "calidrop/engine.hpp"
#include "calidrop/kernels.hpp"

namespace {

using calidrop::Matrix;

Matrix random_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed, double sd) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sd);
    Matrix m(rows, dim);
    for (double& x : m.data()) x = nd(rng);
    return m;
}

struct Prompt {
    Matrix q, k, v;
    explicit Prompt(std::size_t n, std::size_t d = 64)
        : q(random_matrix(n, d, 1, 0.125)), k(random_matrix(n, d, 2, 16.0)), v(random_matrix(n, d, 3, 1.0)) {}
};

void BM_CausalOutputsSerial(benchmark::State& state) {
    const Prompt p(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(calidrop::kernels::serial::causal_outputs(p.q, p.k, p.v));
}

void BM_CausalOutputsOmp(benchmark::State& state) {
    const Prompt p(static_cast<std::size_t>(state.range(0)));
    omp_set_num_threads(static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(calidrop::kernels::omp::causal_outputs(p.q, p.k, p.v));
}

void BM_ColumnMassSerial(benchmark::State& state) {
    const Prompt p(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(calidrop::kernels::serial::causal_column_mass(p.q, p.k, 0));
}

void BM_ColumnMassOmp(benchmark::State& state) {
    const Prompt p(static_cast<std::size_t>(state.range(0)));
    omp_set_num_threads(static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(calidrop::kernels::omp::causal_column_mass(p.q, p.k, 0));
}

void BM_DecodeStep(benchmark::State& state) {
    const Prompt p(1024);
    const auto pre = calidrop::prefill(p.q, p.k, p.v, calidrop::EvictionPolicy::snapkv(128), std::nullopt);
    const auto q = p.q.row(700); // differs from the calibration query, so rho < 1
    const calidrop::Thresholds th{state.range(0) ? 1.0 - 1e-12 : -1.0, 1.0};
    for (auto _ : state) benchmark::DoNotOptimize(calidrop::decode_step(q, pre.partition, pre.state, th));
    state.SetLabel(state.range(0) ? "recompute" : "pass-through");
}

} // namespace

BENCHMARK(BM_CausalOutputsSerial)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CausalOutputsOmp)->ArgsProduct({{256, 1024}, {1, 2, 4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ColumnMassSerial)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ColumnMassOmp)->ArgsProduct({{256, 1024}, {1, 2, 4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodeStep)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
