// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/engine.hpp"

#include <cmath>

#include "calidrop/kernels.hpp"

namespace calidrop {

void Thresholds::validate() const {
    if (!(std::isfinite(theta1) && std::isfinite(theta2)) || theta1 < -1.0 || theta2 > 1.0 || !(theta1 < theta2)) {
        throw InvalidThresholds("thresholds must satisfy -1 <= theta1 < theta2 <= 1");
    }
}

std::string_view to_string(ActionTag tag) noexcept {
    switch (tag) {
    case ActionTag::Recompute:
        return "Recompute";
    case ActionTag::Calibrate:
        return "Calibrate";
    case ActionTag::PassThrough:
        return "PassThrough";
    case ActionTag::NoState:
        return "NoState";
    }
    return "Unknown";
}

CalibrationState build_state(std::span<const double> q, const KvPartition& p) {
    CalibrationState s;
    if (p.offloaded.empty()) {
        return s;
    }
    auto part = p.offloaded.attend(q);
    s.c_q.assign(q.begin(), q.end());
    s.c_lse = part.lse;
    s.c_out = std::move(part.out);
    s.evicted_count = part.count;
    return s;
}

PartialAttention state_as_partial(const CalibrationState& state) {
    if (state.is_null()) {
        throw NullState("state_as_partial: no calibration state");
    }
    return {state.c_out, state.c_lse, state.evicted_count};
}

PrefillResult prefill(const Matrix& queries, const Matrix& keys, const Matrix& values, const EvictionPolicy& policy,
                      CalibrationSize calibration_size) {
    if (queries.empty()) {
        throw ArgError("prefill: empty prompt");
    }
    if (queries.rows() != keys.rows() || keys.rows() != values.rows()) {
        throw DimError("prefill: Q/K/V lengths differ");
    }

    PrefillResult r;
    r.outputs = kernels::omp::causal_outputs(queries, keys, values);
    r.selection = select(queries, keys, policy);

    KvPartition p = split(KvBlock::from_sequence(keys, values), r.selection.keep);
    for (const std::size_t pos : p.offloaded.positions) {
        p.importance.emplace(pos, r.selection.importance[pos]);
    }
    r.partition = truncate_offload(std::move(p), calibration_size);
    r.state = build_state(queries.row(queries.rows() - 1), r.partition);
    return r;
}

DecodeResult decode_step(std::span<const double> q, const KvPartition& partition, const CalibrationState& state,
                         const Thresholds& thresholds) {
    thresholds.validate();
    if (!partition.resident.empty() && q.size() != partition.resident.keys.dim()) {
        throw DimError("decode_step: query dim does not match cached keys");
    }

    const PartialAttention resident = partition.resident.attend(q);
    DecodeResult r;
    r.resident_output = resident.out;
    r.state = state;

    if (state.is_null()) {
        r.output = resident.out;
        r.action = {ActionTag::NoState, 0.0};
        return r;
    }

    const double rho = cosine(q, state.c_q);
    r.action.rho = rho;
    if (rho < thresholds.theta1) {
        r.state = build_state(q, partition);
        r.action.tag = ActionTag::Recompute;
    } else if (rho > thresholds.theta2) {
        r.state.age += 1;
        r.action.tag = ActionTag::Calibrate;
    } else {
        r.state.age += 1;
        r.action.tag = ActionTag::PassThrough;
        r.output = resident.out;
        return r;
    }

    const MergeResult m = merge_with_weights(resident, state_as_partial(r.state));
    r.output = m.merged.out;
    r.alpha_j = m.alpha_b;
    return r;
}

HeadEngine::HeadEngine(EvictionPolicy policy, Thresholds thresholds, CalibrationSize calibration_size)
    : policy_(policy), thresholds_(thresholds), calibration_size_(calibration_size) {
    policy_.validate();
    thresholds_.validate();
}

const PrefillResult& HeadEngine::prefill(const Matrix& queries, const Matrix& keys, const Matrix& values) {
    prefill_ = calidrop::prefill(queries, keys, values, policy_, calibration_size_);
    ready_ = true;
    return prefill_;
}

DecodeResult HeadEngine::step(std::span<const double> q, std::span<const double> k, std::span<const double> v) {
    if (!ready_) {
        throw ArgError("HeadEngine::step called before prefill");
    }
    KvEntry e{prefill_.partition.end_position, Vec(k.begin(), k.end()), Vec(v.begin(), v.end())};
    prefill_.partition = append_resident(std::move(prefill_.partition), e);
    DecodeResult r = decode_step(q, prefill_.partition, prefill_.state, thresholds_);
    prefill_.state = r.state;
    return r;
}

} // namespace calidrop
