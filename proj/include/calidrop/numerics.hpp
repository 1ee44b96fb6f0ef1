// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "calidrop/matrix.hpp"

namespace calidrop {

using Vec = std::vector<double>;

/// Attention output over a subset of tokens together with the log of its
/// softmax denominator, lse = log sum_t exp(q.k_t / sqrt(d_k)).
///
/// The empty subset is represented by count == 0, lse == -inf and a zero
/// output vector, which makes merge() total.
struct PartialAttention {
    Vec out;
    double lse = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;

    static PartialAttention empty(std::size_t d_v) { return {Vec(d_v, 0.0), -std::numeric_limits<double>::infinity(), 0}; }
    [[nodiscard]] bool is_empty() const noexcept { return count == 0; }
};

struct MergeResult {
    PartialAttention merged;
    double alpha_a = 0.0; ///< share of the merged softmax mass held by the first operand
    double alpha_b = 0.0;
};

/// Scaled dot product q.k / sqrt(d_k), accumulated in double.
template <typename T>
double scaled_score(std::span<const T> q, std::span<const T> k) noexcept;

/// Max-shifted softmax attention of one query over all rows of keys/values.
template <typename T>
PartialAttention attend(std::span<const T> q, const BasicMatrix<T>& keys, const BasicMatrix<T>& values);

inline PartialAttention attend(const Vec& q, const Matrix& keys, const Matrix& values) {
    return attend(std::span<const double>(q), keys, values);
}

/// Combines two partials over disjoint token sets into the partial over their union.
MergeResult merge_with_weights(const PartialAttention& a, const PartialAttention& b);

inline PartialAttention merge(const PartialAttention& a, const PartialAttention& b) {
    return merge_with_weights(a, b).merged;
}

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
double log_add_exp(double a, double b) noexcept;

/// Cosine similarity. A zero-norm operand yields -1.
double cosine(std::span<const double> a, std::span<const double> b);

template <typename T>
double cosine(std::span<const T> a, std::span<const T> b) {
    return cosine(std::span<const double>(Vec(a.begin(), a.end())), std::span<const double>(Vec(b.begin(), b.end())));
}

/// Centered moving average with windows that shrink at the edges.
std::vector<double> avg_pool_1d(std::span<const double> scores, std::size_t kernel);

/// Indices of the k largest scores, ascending. Equal scores prefer the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

} // namespace calidrop
