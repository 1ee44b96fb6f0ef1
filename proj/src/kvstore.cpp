// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/kvstore.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

namespace calidrop {

void ModelDims::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_k == 0 || d_v == 0) {
        throw ArgError("model dims must all be positive");
    }
}

KvBlock KvBlock::from_sequence(Matrix keys, Matrix values) {
    if (keys.rows() != values.rows()) {
        throw DimError("key and value counts differ");
    }
    KvBlock b;
    b.positions.resize(keys.rows());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        b.positions[i] = i;
    }
    b.keys = std::move(keys);
    b.values = std::move(values);
    return b;
}

void KvBlock::push(std::size_t position, std::span<const double> key, std::span<const double> value) {
    keys.push_row(key);
    values.push_row(value);
    positions.push_back(position);
}

PartialAttention KvBlock::attend(std::span<const double> q) const {
    return calidrop::attend(q, keys, values);
}

KvPartition split(const KvBlock& entries, std::span<const std::size_t> keep) {
    std::unordered_set<std::size_t> keep_set(keep.begin(), keep.end());
    std::unordered_set<std::size_t> present(entries.positions.begin(), entries.positions.end());
    for (const std::size_t pos : keep_set) {
        if (!present.contains(pos)) {
            throw UnknownPosition("split: keep set references missing position " + std::to_string(pos));
        }
    }

    KvPartition p;
    p.resident = KvBlock(entries.keys.dim(), entries.values.dim());
    p.offloaded = KvBlock(entries.keys.dim(), entries.values.dim());
    p.resident.keys.reserve(keep_set.size());
    p.resident.values.reserve(keep_set.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::size_t pos = entries.positions[i];
        KvBlock& dst = keep_set.contains(pos) ? p.resident : p.offloaded;
        dst.push(pos, entries.keys.row(i), entries.values.row(i));
        p.end_position = std::max(p.end_position, pos + 1);
    }
    return p;
}

KvPartition truncate_offload(KvPartition p, CalibrationSize size) {
    if (!size || *size >= p.offloaded.size()) {
        return p;
    }
    std::vector<double> scores(p.offloaded.size());
    for (std::size_t i = 0; i < p.offloaded.size(); ++i) {
        const auto it = p.importance.find(p.offloaded.positions[i]);
        if (it == p.importance.end()) {
            throw MissingImportance("truncate_offload: no importance for position " +
                                    std::to_string(p.offloaded.positions[i]));
        }
        scores[i] = it->second;
    }
    // Rows are position-ordered, so lower row index is lower position.
    const auto kept_rows = top_k_indices(scores, *size);

    KvBlock kept(p.offloaded.keys.dim(), p.offloaded.values.dim());
    for (const std::size_t r : kept_rows) {
        kept.push(p.offloaded.positions[r], p.offloaded.keys.row(r), p.offloaded.values.row(r));
    }
    p.dropped_count += p.offloaded.size() - kept.size();
    p.offloaded = std::move(kept);
    return p;
}

KvPartition append_resident(KvPartition p, const KvEntry& e) {
    if (p.total_tokens() > 0 && e.position < p.end_position) {
        throw PositionOrder("append_resident: position " + std::to_string(e.position) +
                            " is not after the last stored position");
    }
    p.resident.push(e.position, e.key, e.value);
    p.end_position = e.position + 1;
    return p;
}

} // namespace calidrop
