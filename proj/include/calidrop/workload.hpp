// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "calidrop/kvstore.hpp"
#include "calidrop/matrix.hpp"
#include "calidrop/numerics.hpp"

namespace calidrop {

/// Synthetic source where each head's query performs a normalized random walk,
/// q_{t+1} = normalize(q_t + drift * eta), across prompt and decode positions.
struct DriftWorkload {
    std::uint64_t seed = 1;
    ModelDims dims{2, 2, 64, 64};
    std::size_t prompt_len = 512;
    std::size_t decode_len = 200;
    double drift = 0.05;
    double scale = 16.0; ///< standard deviation of key/value entries

    void validate() const;
};

/// Q/K/V for one (layer, head), stored row-major [time, dim] in f32.
struct HeadTrace {
    MatrixF q_prefill;
    MatrixF k_prefill;
    MatrixF v_prefill;
    MatrixF q_decode;
    MatrixF k_decode;
    MatrixF v_decode;

    friend bool operator==(const HeadTrace&, const HeadTrace&) = default;
};

struct Trace {
    ModelDims dims;
    std::size_t prompt_len = 0;
    std::size_t decode_len = 0;
    std::vector<HeadTrace> heads; ///< index layer * n_heads + head

    [[nodiscard]] const HeadTrace& at(std::size_t layer, std::size_t head) const;
    [[nodiscard]] HeadTrace& at(std::size_t layer, std::size_t head);

    /// Checks array shapes against dims and declared lengths.
    void validate() const;

    friend bool operator==(const Trace&, const Trace&) = default;
};

Trace generate(const DriftWorkload& w);

/// Ground truth: attention of decode query `step` over every prompt token and
/// decode tokens 0..=step, in double precision.
Vec oracle_full(const Trace& trace, std::size_t layer, std::size_t head, std::size_t step);

/// Prompt followed by decode rows for one head's queries.
MatrixF all_queries(const HeadTrace& h);

void save_trace(const Trace& trace, const std::filesystem::path& dir);
Trace load_trace(const std::filesystem::path& dir);

} // namespace calidrop
