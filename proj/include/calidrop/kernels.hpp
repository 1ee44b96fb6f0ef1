// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "calidrop/matrix.hpp"

// Dense causal-attention kernels used during prefill. Each kernel has a
// serial reference and an OpenMP version; both evaluate every output element
// with the same arithmetic in the same order, so results are bit-identical
// regardless of thread count.

namespace calidrop::kernels {

namespace serial {

/// Row i is softmax(q_i . K[0..i] / sqrt(d_k)) V[0..i].
Matrix causal_outputs(const Matrix& queries, const Matrix& keys, const Matrix& values);

/// Row-wise log-sum-exp of the causal score matrix.
std::vector<double> causal_row_lse(const Matrix& queries, const Matrix& keys);

/// mass[t] = sum over rows i >= max(t, row_begin) of softmax_i(t).
std::vector<double> causal_column_mass(const Matrix& queries, const Matrix& keys, std::size_t row_begin);

} // namespace serial

namespace omp {

Matrix causal_outputs(const Matrix& queries, const Matrix& keys, const Matrix& values);
std::vector<double> causal_row_lse(const Matrix& queries, const Matrix& keys);
std::vector<double> causal_column_mass(const Matrix& queries, const Matrix& keys, std::size_t row_begin);

} // namespace omp

} // namespace calidrop::kernels
