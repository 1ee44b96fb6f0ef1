// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/eviction.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "calidrop/kernels.hpp"
#include "calidrop/numerics.hpp"

namespace calidrop {

namespace {

std::vector<std::size_t> all_positions(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

void check_prefill(const Matrix& queries, const Matrix& keys) {
    if (queries.rows() != keys.rows()) {
        throw DimError("eviction: query and key counts differ");
    }
    if (queries.dim() != keys.dim()) {
        throw DimError("eviction: query and key dims differ");
    }
}

/// keep = trailing `local` positions plus the top `rest` of `scores` among [0, n - local).
std::vector<std::size_t> prefix_top_plus_tail(std::span<const double> scores, std::size_t n, std::size_t local,
                                              std::size_t rest) {
    const std::size_t prefix_len = n - local;
    auto keep = top_k_indices(scores.first(prefix_len), rest);
    for (std::size_t t = prefix_len; t < n; ++t) {
        keep.push_back(t);
    }
    return keep;
}

} // namespace

std::string_view to_string(PolicyKind kind) noexcept {
    switch (kind) {
    case PolicyKind::StreamingLLM:
        return "streamingllm";
    case PolicyKind::H2O:
        return "h2o";
    case PolicyKind::SnapKV:
        return "snapkv";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "streamingllm" || lower == "streaming" || lower == "slm") {
        return PolicyKind::StreamingLLM;
    }
    if (lower == "h2o") {
        return PolicyKind::H2O;
    }
    if (lower == "snapkv") {
        return PolicyKind::SnapKV;
    }
    throw ArgError("unknown eviction policy '" + std::string(name) + "'");
}

EvictionPolicy EvictionPolicy::streaming_llm(std::size_t budget, std::size_t sinks) {
    EvictionPolicy p;
    p.kind = PolicyKind::StreamingLLM;
    p.budget = budget;
    p.sinks = sinks;
    return p;
}

EvictionPolicy EvictionPolicy::h2o(std::size_t budget) {
    EvictionPolicy p;
    p.kind = PolicyKind::H2O;
    p.budget = budget;
    return p;
}

EvictionPolicy EvictionPolicy::snapkv(std::size_t budget, std::size_t window, std::size_t kernel) {
    EvictionPolicy p;
    p.kind = PolicyKind::SnapKV;
    p.budget = budget;
    p.window = window;
    p.kernel = kernel;
    return p;
}

void EvictionPolicy::validate() const {
    if (kernel == 0 || kernel % 2 == 0) {
        throw ArgError("eviction policy: pooling kernel must be odd and positive");
    }
    switch (kind) {
    case PolicyKind::StreamingLLM:
        if (budget < sinks + 1) {
            throw BudgetTooSmall("streamingllm: budget must exceed the sink count");
        }
        break;
    case PolicyKind::H2O:
        if (budget == 0) {
            throw BudgetTooSmall("h2o: budget must be positive");
        }
        break;
    case PolicyKind::SnapKV:
        if (budget < window) {
            throw BudgetTooSmall("snapkv: budget must cover the observation window");
        }
        break;
    }
}

EvictionResult select_streaming(std::size_t prompt_len, const EvictionPolicy& policy) {
    if (policy.kind != PolicyKind::StreamingLLM) {
        throw ArgError("select_streaming: policy is not streamingllm");
    }
    if (policy.budget < policy.sinks) {
        throw BudgetTooSmall("streamingllm: budget smaller than sink count");
    }
    EvictionResult r;
    if (prompt_len <= policy.budget) {
        r.keep = all_positions(prompt_len);
        r.importance.assign(prompt_len, 1.0);
        return r;
    }
    r.importance.assign(prompt_len, 0.0);
    for (std::size_t t = 0; t < policy.sinks; ++t) {
        r.keep.push_back(t);
    }
    for (std::size_t t = prompt_len - (policy.budget - policy.sinks); t < prompt_len; ++t) {
        r.keep.push_back(t);
    }
    for (const std::size_t t : r.keep) {
        r.importance[t] = 1.0;
    }
    return r;
}

EvictionResult select_h2o(const Matrix& queries, const Matrix& keys, const EvictionPolicy& policy) {
    if (policy.kind != PolicyKind::H2O) {
        throw ArgError("select_h2o: policy is not h2o");
    }
    check_prefill(queries, keys);
    const std::size_t n = queries.rows();
    EvictionResult r;
    r.importance = kernels::omp::causal_column_mass(queries, keys, 0);
    if (n <= policy.budget) {
        r.keep = all_positions(n);
        return r;
    }
    const std::size_t local = policy.budget / 2;
    r.keep = prefix_top_plus_tail(r.importance, n, local, policy.budget - local);
    return r;
}

EvictionResult select_snapkv(const Matrix& queries, const Matrix& keys, const EvictionPolicy& policy) {
    if (policy.kind != PolicyKind::SnapKV) {
        throw ArgError("select_snapkv: policy is not snapkv");
    }
    if (policy.budget < policy.window) {
        throw BudgetTooSmall("snapkv: budget smaller than observation window");
    }
    check_prefill(queries, keys);
    const std::size_t n = queries.rows();
    const std::size_t window = std::min(policy.window, n);
    EvictionResult r;
    // Window rows keep their unpooled vote mass; only the prefix is pooled.
    r.importance = kernels::omp::causal_column_mass(queries, keys, n - window);
    const std::size_t prefix_len = n - window;
    if (prefix_len > 0) {
        const auto pooled = avg_pool_1d(std::span<const double>(r.importance).first(prefix_len), policy.kernel);
        std::copy(pooled.begin(), pooled.end(), r.importance.begin());
    }
    if (n <= policy.budget) {
        r.keep = all_positions(n);
        return r;
    }
    r.keep = prefix_top_plus_tail(r.importance, n, window, policy.budget - window);
    return r;
}

EvictionResult select(const Matrix& queries, const Matrix& keys, const EvictionPolicy& policy) {
    policy.validate();
    switch (policy.kind) {
    case PolicyKind::StreamingLLM:
        check_prefill(queries, keys);
        return select_streaming(queries.rows(), policy);
    case PolicyKind::H2O:
        return select_h2o(queries, keys, policy);
    case PolicyKind::SnapKV:
        return select_snapkv(queries, keys, policy);
    }
    throw ArgError("unknown policy kind");
}

} // namespace calidrop
