// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "calidrop/engine.hpp"
#include "oracles.hpp"

using namespace calidrop;
using Positions = std::vector<std::size_t>;

namespace {

struct Prompt {
    oracle::Rows q, k, v;
    Matrix Q, K, V;
};

Prompt random_prompt(std::uint64_t seed, std::size_t n, std::size_t d, double sd = 1.5) {
    std::mt19937_64 rng(seed);
    Prompt p;
    p.q = oracle::random_rows(rng, n, d, sd);
    p.k = oracle::random_rows(rng, n, d, sd);
    p.v = oracle::random_rows(rng, n, d);
    p.Q = Matrix::from_rows(p.q);
    p.K = Matrix::from_rows(p.k);
    p.V = Matrix::from_rows(p.v);
    return p;
}

void expect_near(std::span<const double> a, std::span<const double> b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "coordinate " << i;
}

/// Rotates `q` towards a random orthogonal direction so that cos(result, q) == rho.
Vec with_cosine(const Vec& q, double rho, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Vec r(q.size());
    for (auto& x : r) x = nd(rng);
    double qq = 0.0, qr = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        qq += q[i] * q[i];
        qr += q[i] * r[i];
    }
    double rr = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        r[i] -= qr / qq * q[i];
        rr += r[i] * r[i];
    }
    const double qn = std::sqrt(qq), rn = std::sqrt(rr);
    Vec out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = rho * q[i] / qn + std::sqrt(1.0 - rho * rho) * r[i] / rn;
    }
    return out;
}

} // namespace

TEST(Thresholds, Validation) {
    EXPECT_NO_THROW((Thresholds{0.7, 0.85}.validate()));
    EXPECT_NO_THROW((Thresholds{-1.0, 1.0}.validate()));
    EXPECT_THROW((Thresholds{0.85, 0.85}.validate()), InvalidThresholds);
    EXPECT_THROW((Thresholds{0.9, 0.7}.validate()), InvalidThresholds);
    EXPECT_THROW((Thresholds{-1.5, 0.7}.validate()), InvalidThresholds);
    EXPECT_THROW((Thresholds{0.5, 1.5}.validate()), InvalidThresholds);
}

TEST(Prefill, NoEvictionWhenBudgetCoversPrompt) {
    const auto p = random_prompt(1, 10, 4);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(16, 4, 3), kUnlimitedCalibration);
    EXPECT_TRUE(r.partition.offloaded.empty());
    EXPECT_TRUE(r.state.is_null());
    for (std::size_t i = 0; i < 10; ++i) {
        oracle::Rows kk(p.k.begin(), p.k.begin() + static_cast<std::ptrdiff_t>(i + 1));
        oracle::Rows vv(p.v.begin(), p.v.begin() + static_cast<std::ptrdiff_t>(i + 1));
        expect_near(r.outputs.row(i), oracle::full_attention(p.q[i], kk, vv), 1e-12);
    }
}

TEST(Prefill, ThreeTokenStreamingExample) {
    const auto p = random_prompt(2, 3, 2);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::streaming_llm(2, 1), kUnlimitedCalibration);
    EXPECT_EQ(r.partition.resident.positions, Positions({0, 2}));
    EXPECT_EQ(r.partition.offloaded.positions, Positions({1}));
    EXPECT_EQ(r.state.c_q, p.q[2]);
    EXPECT_EQ(r.state.evicted_count, 1u);
    EXPECT_EQ(r.state.age, 0u);
}

TEST(Prefill, StatePlusResidentReproducesLastQueryAttention) {
    for (const auto& pol : {EvictionPolicy::snapkv(8, 4, 5), EvictionPolicy::h2o(8), EvictionPolicy::streaming_llm(8, 2)}) {
        const auto p = random_prompt(3, 32, 6);
        const auto r = prefill(p.Q, p.K, p.V, pol, kUnlimitedCalibration);
        const auto merged = merge(r.partition.resident.attend(p.q.back()), state_as_partial(r.state));
        expect_near(merged.out, oracle::full_attention(p.q.back(), p.k, p.v), 1e-10);
        EXPECT_EQ(merged.count, 32u);
    }
}

TEST(Prefill, CalibrationSizeTruncatesOffload) {
    const auto p = random_prompt(4, 40, 4);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(8, 4, 5), 5);
    EXPECT_EQ(r.partition.offloaded.size(), 5u);
    EXPECT_EQ(r.partition.dropped_count, 27u);
    EXPECT_EQ(r.state.evicted_count, 5u);
    const auto none = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(8, 4, 5), 0);
    EXPECT_TRUE(none.state.is_null());
}

TEST(StateAsPartial, NullAndSingleToken) {
    EXPECT_THROW(state_as_partial(CalibrationState{}), NullState);
    CalibrationState s;
    s.c_q = {1.0};
    s.c_out = {4.5, -2.0};
    s.c_lse = std::log(1.0);
    s.evicted_count = 1;
    const auto part = state_as_partial(s);
    EXPECT_EQ(part.out, s.c_out);
    EXPECT_EQ(part.lse, 0.0);
    EXPECT_EQ(part.count, 1u);
}

TEST(DecodeStep, IdenticalQueryCalibratesExactly) {
    const auto p = random_prompt(5, 30, 4);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(10, 4, 5), kUnlimitedCalibration);
    const auto d = decode_step(r.state.c_q, r.partition, r.state, Thresholds{});
    EXPECT_EQ(d.action.tag, ActionTag::Calibrate);
    EXPECT_NEAR(d.action.rho, 1.0, 1e-15);
    EXPECT_EQ(d.state.age, 1u);
    expect_near(d.output, oracle::full_attention(r.state.c_q, p.k, p.v), 1e-10);
}

TEST(DecodeStep, OrthogonalQueryRecomputesExactly) {
    std::mt19937_64 rng(6);
    const auto p = random_prompt(6, 30, 4);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::h2o(10), kUnlimitedCalibration);
    const Vec q = with_cosine(r.state.c_q, 0.0, rng);
    const auto d = decode_step(q, r.partition, r.state, Thresholds{});
    EXPECT_EQ(d.action.tag, ActionTag::Recompute);
    EXPECT_NEAR(d.action.rho, 0.0, 1e-12);
    EXPECT_EQ(d.state.c_q, q);
    EXPECT_EQ(d.state.age, 0u);
    expect_near(d.output, oracle::full_attention(q, p.k, p.v), 1e-10);
    EXPECT_GT(d.alpha_j, 0.0);
    EXPECT_LT(d.alpha_j, 1.0);
}

TEST(DecodeStep, MidRangeSimilarityPassesThrough) {
    std::mt19937_64 rng(7);
    const auto p = random_prompt(7, 30, 4);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(10, 4, 5), kUnlimitedCalibration);
    const Vec q = with_cosine(r.state.c_q, 0.75, rng);
    const auto d = decode_step(q, r.partition, r.state, Thresholds{0.7, 0.85});
    EXPECT_EQ(d.action.tag, ActionTag::PassThrough);
    EXPECT_NEAR(d.action.rho, 0.75, 1e-12);
    EXPECT_EQ(d.output, d.resident_output);
    expect_near(d.output, r.partition.resident.attend(q).out, 0.0);
    EXPECT_EQ(d.alpha_j, 0.0);
    EXPECT_EQ(d.state.c_q, r.state.c_q);
}

TEST(DecodeStep, NoStateWithoutOffload) {
    const auto p = random_prompt(8, 6, 3);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::h2o(8), kUnlimitedCalibration);
    const auto d = decode_step(p.q[0], r.partition, r.state, Thresholds{});
    EXPECT_EQ(d.action.tag, ActionTag::NoState);
    EXPECT_EQ(d.output, d.resident_output);
}

TEST(DecodeStep, Errors) {
    const auto p = random_prompt(9, 12, 3);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::h2o(6), kUnlimitedCalibration);
    EXPECT_THROW(decode_step(Vec{1.0, 2.0}, r.partition, r.state, Thresholds{}), DimError);
    EXPECT_THROW(decode_step(p.q[0], r.partition, r.state, Thresholds{0.9, 0.1}), InvalidThresholds);
}

TEST(DecodeStep, ZeroHistoricalQueryForcesRecompute) {
    const auto p = random_prompt(10, 12, 3);
    auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::h2o(6), kUnlimitedCalibration);
    r.state.c_q.assign(3, 0.0);
    const auto d = decode_step(p.q[1], r.partition, r.state, Thresholds{-0.99, 0.99});
    EXPECT_EQ(d.action.rho, -1.0);
    EXPECT_EQ(d.action.tag, ActionTag::Recompute);
}

TEST(DecodeStep, GatingMatchesThresholdsExhaustively) {
    std::mt19937_64 rng(11);
    const auto p = random_prompt(11, 24, 5);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(8, 4, 3), kUnlimitedCalibration);
    const Thresholds th{0.3, 0.6};
    for (double rho = -0.95; rho <= 0.95; rho += 0.05) {
        const Vec q = with_cosine(r.state.c_q, rho, rng);
        const auto d = decode_step(q, r.partition, r.state, th);
        const double measured = d.action.rho;
        if (measured < th.theta1) {
            ASSERT_EQ(d.action.tag, ActionTag::Recompute);
        } else if (measured > th.theta2) {
            ASSERT_EQ(d.action.tag, ActionTag::Calibrate);
        } else {
            ASSERT_EQ(d.action.tag, ActionTag::PassThrough);
        }
    }
}

TEST(DecodeStep, CalibratedOutputBetweenEndpoints) {
    std::mt19937_64 rng(12);
    const auto p = random_prompt(12, 40, 6);
    const auto r = prefill(p.Q, p.K, p.V, EvictionPolicy::snapkv(10, 4, 5), kUnlimitedCalibration);
    for (int i = 0; i < 50; ++i) {
        const Vec q = with_cosine(r.state.c_q, 0.9 + 0.002 * i, rng);
        const auto d = decode_step(q, r.partition, r.state, Thresholds{});
        ASSERT_EQ(d.action.tag, ActionTag::Calibrate);
        for (std::size_t c = 0; c < 6; ++c) {
            const double lo = std::min(d.resident_output[c], r.state.c_out[c]);
            const double hi = std::max(d.resident_output[c], r.state.c_out[c]);
            ASSERT_GE(d.output[c], lo - 1e-12);
            ASSERT_LE(d.output[c], hi + 1e-12);
        }
    }
}

TEST(HeadEngine, IdenticalQueriesStayExactAcrossSteps) {
    const auto p = random_prompt(13, 48, 4);
    HeadEngine eng(EvictionPolicy::snapkv(12, 4, 5), Thresholds{}, kUnlimitedCalibration);
    eng.prefill(p.Q, p.K, p.V);
    std::mt19937_64 rng(14);
    oracle::Rows keys = p.k, values = p.v;
    for (int s = 0; s < 20; ++s) {
        const auto kv = oracle::random_rows(rng, 2, 4);
        keys.push_back(kv[0]);
        values.push_back(kv[1]);
        const auto d = eng.step(p.q.back(), kv[0], kv[1]);
        ASSERT_EQ(d.action.tag, ActionTag::Calibrate);
        expect_near(d.output, oracle::full_attention(p.q.back(), keys, values), 1e-10);
    }
    EXPECT_EQ(eng.state().age, 20u);
    EXPECT_EQ(eng.partition().resident.size(), 32u);
    EXPECT_EQ(eng.partition().total_tokens(), 68u);
}

TEST(HeadEngine, RecomputeEveryStepIsExact) {
    const auto p = random_prompt(15, 48, 4);
    HeadEngine eng(EvictionPolicy::h2o(12), Thresholds{1.0 - 1e-9, 1.0}, kUnlimitedCalibration);
    eng.prefill(p.Q, p.K, p.V);
    std::mt19937_64 rng(16);
    oracle::Rows keys = p.k, values = p.v;
    for (int s = 0; s < 20; ++s) {
        const auto qkv = oracle::random_rows(rng, 3, 4);
        keys.push_back(qkv[1]);
        values.push_back(qkv[2]);
        const auto d = eng.step(qkv[0], qkv[1], qkv[2]);
        ASSERT_EQ(d.action.tag, ActionTag::Recompute);
        expect_near(d.output, oracle::full_attention(qkv[0], keys, values), 1e-10);
        ASSERT_EQ(eng.state().age, 0u);
    }
}

TEST(HeadEngine, StepBeforePrefill) {
    HeadEngine eng(EvictionPolicy::h2o(4), Thresholds{}, kUnlimitedCalibration);
    EXPECT_THROW(eng.step(Vec{1.0}, Vec{1.0}, Vec{1.0}), ArgError);
}
