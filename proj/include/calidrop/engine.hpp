// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>

#include "calidrop/eviction.hpp"
#include "calidrop/kvstore.hpp"
#include "calidrop/numerics.hpp"

namespace calidrop {

/// Cosine gates: below theta1 recompute, above theta2 calibrate, otherwise pass through.
struct Thresholds {
    double theta1 = 0.7;
    double theta2 = 0.85;

    void validate() const;
};

/// Attention partial over the offloaded tokens, computed with a historical query.
/// evicted_count == 0 marks the null state: nothing was offloaded.
struct CalibrationState {
    Vec c_q;
    double c_lse = -std::numeric_limits<double>::infinity();
    Vec c_out;
    std::size_t age = 0;
    std::size_t evicted_count = 0;

    [[nodiscard]] bool is_null() const noexcept { return evicted_count == 0; }
};

enum class ActionTag { Recompute, Calibrate, PassThrough, NoState };

std::string_view to_string(ActionTag tag) noexcept;

struct DecodeAction {
    ActionTag tag = ActionTag::NoState;
    double rho = 0.0;
};

struct PrefillResult {
    Matrix outputs; ///< exact causal attention for every prompt position
    KvPartition partition;
    CalibrationState state;
    EvictionResult selection;
};

struct DecodeResult {
    Vec output;
    Vec resident_output; ///< eviction-only output (resident tokens alone)
    DecodeAction action;
    CalibrationState state;
    double alpha_j = 0.0; ///< share of softmax mass given to the calibration partial
};

/// Builds a calibration state from `q` over the offloaded tier of `p`.
CalibrationState build_state(std::span<const double> q, const KvPartition& p);

PartialAttention state_as_partial(const CalibrationState& state);

PrefillResult prefill(const Matrix& queries, const Matrix& keys, const Matrix& values, const EvictionPolicy& policy,
                      CalibrationSize calibration_size);

/// One gated decode step. The current token's KV is expected to be resident already.
DecodeResult decode_step(std::span<const double> q, const KvPartition& partition, const CalibrationState& state,
                         const Thresholds& thresholds);

/// Serial decode driver for a single (layer, head) stream.
class HeadEngine {
public:
    HeadEngine(EvictionPolicy policy, Thresholds thresholds, CalibrationSize calibration_size);

    const PrefillResult& prefill(const Matrix& queries, const Matrix& keys, const Matrix& values);

    /// Appends the new token's KV, then attends with its query.
    DecodeResult step(std::span<const double> q, std::span<const double> k, std::span<const double> v);

    [[nodiscard]] const KvPartition& partition() const noexcept { return prefill_.partition; }
    [[nodiscard]] const CalibrationState& state() const noexcept { return prefill_.state; }
    [[nodiscard]] const PrefillResult& prefill_result() const noexcept { return prefill_; }

private:
    EvictionPolicy policy_;
    Thresholds thresholds_;
    CalibrationSize calibration_size_;
    PrefillResult prefill_;
    bool ready_ = false;
};

} // namespace calidrop
