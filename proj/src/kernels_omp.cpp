// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/kernels.hpp"

#include <omp.h>

#include "kernels_common.hpp"

namespace calidrop::kernels::omp {

Matrix causal_outputs(const Matrix& queries, const Matrix& keys, const Matrix& values) {
    detail::check_causal_shapes(queries, keys);
    if (values.rows() != keys.rows()) {
        throw DimError("causal_outputs: key and value counts differ");
    }
    const auto n = static_cast<std::ptrdiff_t>(queries.rows());
    Matrix out(queries.rows(), values.dim());
#pragma omp parallel
    {
        std::vector<double> scratch(queries.rows());
        // Row cost grows linearly with i.
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto row = static_cast<std::size_t>(i);
            detail::row_output(queries, keys, values, row, scratch, out.row(row));
        }
    }
    return out;
}

std::vector<double> causal_row_lse(const Matrix& queries, const Matrix& keys) {
    detail::check_causal_shapes(queries, keys);
    const auto n = static_cast<std::ptrdiff_t>(queries.rows());
    std::vector<double> lse(queries.rows());
#pragma omp parallel
    {
        std::vector<double> scratch(queries.rows());
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            lse[static_cast<std::size_t>(i)] = detail::row_lse(queries, keys, static_cast<std::size_t>(i), scratch);
        }
    }
    return lse;
}

std::vector<double> causal_column_mass(const Matrix& queries, const Matrix& keys, std::size_t row_begin) {
    const std::size_t n = queries.rows();
    const auto lse = causal_row_lse(queries, keys);
    std::vector<double> mass(n, 0.0);
    // Column-parallel: each thread owns whole columns and sums rows in
    // ascending order, matching the serial accumulation order exactly.
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t tt = 0; tt < static_cast<std::ptrdiff_t>(n); ++tt) {
        const auto t = static_cast<std::size_t>(tt);
        double acc = 0.0;
        for (std::size_t i = std::max(t, row_begin); i < n; ++i) {
            acc += detail::softmax_entry(queries, keys, i, t, lse[i]);
        }
        mass[t] = acc;
    }
    return mass;
}

} // namespace calidrop::kernels::omp
