// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "calidrop/errors.hpp"
#include "calidrop/matrix.hpp"
#include "calidrop/numerics.hpp"

namespace calidrop::kernels::detail {

inline void check_causal_shapes(const Matrix& queries, const Matrix& keys) {
    if (queries.rows() != keys.rows()) {
        throw DimError("causal kernel: query and key counts differ");
    }
    if (!queries.empty() && queries.dim() != keys.dim()) {
        throw DimError("causal kernel: query and key dims differ");
    }
}

/// Fills scores[0..=row] and returns their maximum.
inline double row_scores(const Matrix& queries, const Matrix& keys, std::size_t row, std::span<double> scores) {
    const auto q = queries.row(row);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t <= row; ++t) {
        scores[t] = scaled_score(q, keys.row(t));
        mx = std::max(mx, scores[t]);
    }
    return mx;
}

inline double row_lse(const Matrix& queries, const Matrix& keys, std::size_t row, std::span<double> scratch) {
    const double mx = row_scores(queries, keys, row, scratch);
    double denom = 0.0;
    for (std::size_t t = 0; t <= row; ++t) {
        denom += std::exp(scratch[t] - mx);
    }
    return mx + std::log(denom);
}

/// Same arithmetic as attend() over the causal prefix.
inline void row_output(const Matrix& queries, const Matrix& keys, const Matrix& values, std::size_t row,
                       std::span<double> scratch, std::span<double> out) {
    const double mx = row_scores(queries, keys, row, scratch);
    std::fill(out.begin(), out.end(), 0.0);
    double denom = 0.0;
    for (std::size_t t = 0; t <= row; ++t) {
        const double w = std::exp(scratch[t] - mx);
        denom += w;
        const auto v = values.row(t);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += w * v[c];
        }
    }
    const double inv = 1.0 / denom;
    for (double& o : out) {
        o *= inv;
    }
}

inline double softmax_entry(const Matrix& queries, const Matrix& keys, std::size_t row, std::size_t col,
                            double lse) {
    return std::exp(scaled_score(queries.row(row), keys.row(col)) - lse);
}

} // namespace calidrop::kernels::detail
