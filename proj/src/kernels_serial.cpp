// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/kernels.hpp"

#include "kernels_common.hpp"

namespace calidrop::kernels::serial {

Matrix causal_outputs(const Matrix& queries, const Matrix& keys, const Matrix& values) {
    detail::check_causal_shapes(queries, keys);
    if (values.rows() != keys.rows()) {
        throw DimError("causal_outputs: key and value counts differ");
    }
    const std::size_t n = queries.rows();
    Matrix out(n, values.dim());
    std::vector<double> scratch(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::row_output(queries, keys, values, i, scratch, out.row(i));
    }
    return out;
}

std::vector<double> causal_row_lse(const Matrix& queries, const Matrix& keys) {
    detail::check_causal_shapes(queries, keys);
    const std::size_t n = queries.rows();
    std::vector<double> lse(n);
    std::vector<double> scratch(n);
    for (std::size_t i = 0; i < n; ++i) {
        lse[i] = detail::row_lse(queries, keys, i, scratch);
    }
    return lse;
}

std::vector<double> causal_column_mass(const Matrix& queries, const Matrix& keys, std::size_t row_begin) {
    const std::size_t n = queries.rows();
    const auto lse = causal_row_lse(queries, keys);
    std::vector<double> mass(n, 0.0);
    for (std::size_t i = row_begin; i < n; ++i) {
        for (std::size_t t = 0; t <= i; ++t) {
            mass[t] += detail::softmax_entry(queries, keys, i, t, lse[i]);
        }
    }
    return mass;
}

} // namespace calidrop::kernels::serial
