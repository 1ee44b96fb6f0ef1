// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "calidrop/matrix.hpp"

namespace calidrop {

enum class PolicyKind { StreamingLLM, H2O, SnapKV };

std::string_view to_string(PolicyKind kind) noexcept;
PolicyKind parse_policy_kind(std::string_view name);

/// Prefill eviction strategy and its token budget.
///
/// `sinks` applies to StreamingLLM only, `window` and `kernel` to SnapKV only.
/// H2O derives its local window from the budget (floor(budget / 2)).
struct EvictionPolicy {
    PolicyKind kind = PolicyKind::SnapKV;
    std::size_t budget = 128;
    std::size_t sinks = 32;
    std::size_t window = 32;
    std::size_t kernel = 5;

    static EvictionPolicy streaming_llm(std::size_t budget, std::size_t sinks = 32);
    static EvictionPolicy h2o(std::size_t budget);
    static EvictionPolicy snapkv(std::size_t budget, std::size_t window = 32, std::size_t kernel = 5);

    void validate() const;
};

struct EvictionResult {
    std::vector<std::size_t> keep;  ///< ascending
    std::vector<double> importance; ///< one score per prefill position
};

EvictionResult select_streaming(std::size_t prompt_len, const EvictionPolicy& policy);

/// Heavy hitters by accumulated causal attention plus a local window.
EvictionResult select_h2o(const Matrix& queries, const Matrix& keys, const EvictionPolicy& policy);

/// Pooled observation-window votes over the prefix plus the window itself.
EvictionResult select_snapkv(const Matrix& queries, const Matrix& keys, const EvictionPolicy& policy);

/// Dispatches on policy.kind.
EvictionResult select(const Matrix& queries, const Matrix& keys, const EvictionPolicy& policy);

} // namespace calidrop
