// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "calidrop/eviction.hpp"
#include "calidrop/numerics.hpp"
#include "oracles.hpp"

using namespace calidrop;
using Positions = std::vector<std::size_t>;

namespace {

Positions range(std::size_t b, std::size_t e) {
    Positions v;
    for (std::size_t i = b; i < e; ++i) v.push_back(i);
    return v;
}

Positions concat(Positions a, const Positions& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::set<std::size_t> as_set(const Positions& p) { return {p.begin(), p.end()}; }

} // namespace

TEST(Streaming, SinksPlusRecentWindow) {
    const auto r = select_streaming(10, EvictionPolicy::streaming_llm(8, 2));
    EXPECT_EQ(r.keep, concat(range(0, 2), range(4, 10)));
    EXPECT_EQ(r.importance[0], 1.0);
    EXPECT_EQ(r.importance[2], 0.0);
}

TEST(Streaming, BudgetCoversPrompt) {
    EXPECT_EQ(select_streaming(5, EvictionPolicy::streaming_llm(8, 2)).keep, range(0, 5));
}

TEST(Streaming, DefaultSinkCount) {
    const auto r = select_streaming(100, EvictionPolicy::streaming_llm(64));
    EXPECT_EQ(r.keep, concat(range(0, 32), range(68, 100)));
}

TEST(Streaming, BudgetTooSmall) {
    EXPECT_THROW(select_streaming(100, EvictionPolicy::streaming_llm(16, 32)), BudgetTooSmall);
    EXPECT_THROW(EvictionPolicy::streaming_llm(32, 32).validate(), BudgetTooSmall);
}

TEST(H2O, KeepAllWhenBudgetCoversPrompt) {
    std::mt19937_64 rng(1);
    const auto q = Matrix::from_rows(oracle::random_rows(rng, 6, 4));
    const auto k = Matrix::from_rows(oracle::random_rows(rng, 6, 4));
    EXPECT_EQ(select_h2o(q, k, EvictionPolicy::h2o(8)).keep, range(0, 6));
}

TEST(H2O, SingleTokenHasUnitImportance) {
    const auto r = select_h2o(Matrix::from_rows({{0.3, -1.0}}), Matrix::from_rows({{2.0, 1.0}}), EvictionPolicy::h2o(4));
    ASSERT_EQ(r.importance.size(), 1u);
    EXPECT_DOUBLE_EQ(r.importance[0], 1.0);
}

TEST(H2O, SixteenTokenPromptMatchesDenseOracle) {
    std::mt19937_64 rng(2);
    const auto q = oracle::random_rows(rng, 16, 8, 3.0);
    const auto k = oracle::random_rows(rng, 16, 8, 3.0);
    const auto r = select_h2o(Matrix::from_rows(q), Matrix::from_rows(k), EvictionPolicy::h2o(8));
    EXPECT_EQ(as_set(r.keep), oracle::h2o_keep(q, k, 8));
    EXPECT_EQ(r.keep.size(), 8u);
    // Local window is the last floor(8/2) tokens.
    for (std::size_t t = 12; t < 16; ++t) EXPECT_TRUE(as_set(r.keep).contains(t));
}

TEST(H2O, OddBudgetGivesExtraSlotToHeavyHitters) {
    std::mt19937_64 rng(3);
    const auto q = oracle::random_rows(rng, 20, 4);
    const auto k = oracle::random_rows(rng, 20, 4);
    const auto r = select_h2o(Matrix::from_rows(q), Matrix::from_rows(k), EvictionPolicy::h2o(7));
    EXPECT_EQ(r.keep.size(), 7u);
    const auto tail = std::count_if(r.keep.begin(), r.keep.end(), [](std::size_t t) { return t >= 17; });
    EXPECT_GE(tail, 3);
    EXPECT_EQ(as_set(r.keep), oracle::h2o_keep(q, k, 7));
}

TEST(SnapKV, WindowEqualsPrompt) {
    std::mt19937_64 rng(4);
    const auto q = Matrix::from_rows(oracle::random_rows(rng, 8, 4));
    const auto k = Matrix::from_rows(oracle::random_rows(rng, 8, 4));
    EXPECT_EQ(select_snapkv(q, k, EvictionPolicy::snapkv(8, 8, 5)).keep, range(0, 8));
}

TEST(SnapKV, ConstantInputsKeepLowestPrefixPositions) {
    const std::size_t n = 40;
    Matrix q(0, 3), k(0, 3);
    for (std::size_t i = 0; i < n; ++i) {
        q.push_row(Vec{1.0, 0.0, 0.0});
        k.push_row(Vec{0.5, 0.5, 0.5});
    }
    // Every prefix column gets the same vote mass. Kernel 1 leaves the ties intact; a wider
    // kernel would round the shrunken edge windows differently from the interior.
    const auto r = select_snapkv(q, k, EvictionPolicy::snapkv(12, 8, 1));
    EXPECT_EQ(r.keep, concat(range(0, 4), range(32, 40)));
}

TEST(SnapKV, SixtyFourTokenPromptMatchesDenseOracle) {
    std::mt19937_64 rng(5);
    const auto q = oracle::random_rows(rng, 64, 8, 3.0);
    const auto k = oracle::random_rows(rng, 64, 8, 3.0);
    const auto r = select_snapkv(Matrix::from_rows(q), Matrix::from_rows(k), EvictionPolicy::snapkv(16, 8, 5));
    EXPECT_EQ(as_set(r.keep), oracle::snapkv_keep(q, k, 16, 8, 5));
    EXPECT_EQ(r.keep.size(), 16u);
}

TEST(SnapKV, Errors) {
    Matrix q = Matrix::from_rows({{1.0}, {2.0}});
    EXPECT_THROW(select_snapkv(q, Matrix::from_rows({{1.0}}), EvictionPolicy::snapkv(8, 1, 1)), DimError);
    EXPECT_THROW(select_snapkv(q, q, EvictionPolicy::snapkv(4, 8, 5)), BudgetTooSmall);
    EXPECT_THROW(EvictionPolicy::snapkv(16, 8, 4).validate(), ArgError);
}

TEST(Eviction, KeepSizeAndMandatorySetProperties) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> len(1, 64);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = len(rng);
        const auto q = Matrix::from_rows(oracle::random_rows(rng, n, 4, 2.0));
        const auto k = Matrix::from_rows(oracle::random_rows(rng, n, 4, 2.0));
        const std::vector<EvictionPolicy> policies{EvictionPolicy::streaming_llm(12, 4), EvictionPolicy::h2o(12),
                                                   EvictionPolicy::snapkv(12, 6, 3)};
        for (const auto& pol : policies) {
            const auto r = select(q, k, pol);
            ASSERT_EQ(r.keep.size(), std::min<std::size_t>(12, n));
            ASSERT_EQ(r.importance.size(), n);
            ASSERT_TRUE(std::is_sorted(r.keep.begin(), r.keep.end()));
            const auto keep = as_set(r.keep);
            if (pol.kind == PolicyKind::StreamingLLM) {
                for (std::size_t t = 0; t < std::min<std::size_t>(4, n); ++t) ASSERT_TRUE(keep.contains(t));
            }
            const std::size_t tail = pol.kind == PolicyKind::H2O ? 6 : pol.kind == PolicyKind::SnapKV ? 6 : 8;
            for (std::size_t t = n - std::min(tail, n); t < n; ++t) ASSERT_TRUE(keep.contains(t));
            // Determinism: identical inputs, identical keep-set.
            ASSERT_EQ(select(q, k, pol).keep, r.keep);
        }
    }
}

TEST(Eviction, PolicyNames) {
    EXPECT_EQ(parse_policy_kind("SnapKV"), PolicyKind::SnapKV);
    EXPECT_EQ(parse_policy_kind("h2o"), PolicyKind::H2O);
    EXPECT_EQ(parse_policy_kind("streamingllm"), PolicyKind::StreamingLLM);
    EXPECT_THROW(parse_policy_kind("pyramidkv"), ArgError);
}
