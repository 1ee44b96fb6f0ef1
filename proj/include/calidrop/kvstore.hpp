// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "calidrop/matrix.hpp"
#include "calidrop/numerics.hpp"

namespace calidrop {

struct ModelDims {
    std::size_t n_layers = 1;
    std::size_t n_heads = 1;
    std::size_t d_k = 64;
    std::size_t d_v = 64;

    void validate() const;
    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct KvEntry {
    std::size_t position = 0;
    Vec key;
    Vec value;
};

/// Tokens of one head stored column-wise: positions[i] owns keys.row(i) and values.row(i).
/// Rows are kept in ascending position order.
struct KvBlock {
    std::vector<std::size_t> positions;
    Matrix keys;
    Matrix values;

    KvBlock() = default;
    KvBlock(std::size_t d_k, std::size_t d_v) : keys(0, d_k), values(0, d_v) {}

    /// Positions 0..n-1 taken from the rows of keys/values.
    static KvBlock from_sequence(Matrix keys, Matrix values);

    [[nodiscard]] std::size_t size() const noexcept { return positions.size(); }
    [[nodiscard]] bool empty() const noexcept { return positions.empty(); }
    void push(std::size_t position, std::span<const double> key, std::span<const double> value);
    [[nodiscard]] PartialAttention attend(std::span<const double> q) const;
};

/// Absent means unlimited: every evicted token stays offloaded.
using CalibrationSize = std::optional<std::size_t>;
inline constexpr CalibrationSize kUnlimitedCalibration = std::nullopt;

/// One head's tiered cache: resident tokens attend every step, offloaded tokens are
/// reloaded only for recomputation, dropped tokens are gone for good.
struct KvPartition {
    KvBlock resident;
    KvBlock offloaded;
    std::size_t dropped_count = 0;
    std::map<std::size_t, double> importance;

    [[nodiscard]] std::size_t total_tokens() const noexcept {
        return resident.size() + offloaded.size() + dropped_count;
    }
    /// One past the highest position ever inserted (dropped tokens included).
    std::size_t end_position = 0;
};

/// Keeps the rows whose positions are listed in `keep` resident and offloads the rest.
KvPartition split(const KvBlock& entries, std::span<const std::size_t> keep);

/// Retains only the `size` most important offloaded tokens; the rest are dropped.
KvPartition truncate_offload(KvPartition p, CalibrationSize size);

/// Adds a decode-phase token. Its position must exceed every position inserted so far.
KvPartition append_resident(KvPartition p, const KvEntry& e);

} // namespace calidrop
