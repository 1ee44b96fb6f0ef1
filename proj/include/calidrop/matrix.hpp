// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "calidrop/errors.hpp"

namespace calidrop {

/// Dense row-major [rows, dim] storage. One row per token.
template <typename T>
class BasicMatrix {
public:
    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, T{}) {}
    BasicMatrix(std::size_t rows, std::size_t dim, std::vector<T> data)
        : rows_(rows), dim_(dim), data_(std::move(data)) {
        if (data_.size() != rows_ * dim_) {
            throw DimError("matrix data size does not match rows*dim");
        }
    }

    /// Build from a list of equal-length rows.
    static BasicMatrix from_rows(const std::vector<std::vector<T>>& rows) {
        if (rows.empty()) {
            return {};
        }
        BasicMatrix m(0, rows.front().size());
        for (const auto& r : rows) {
            m.push_row(r);
        }
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] bool empty() const noexcept { return rows_ == 0; }

    [[nodiscard]] std::span<const T> row(std::size_t i) const noexcept {
        return {data_.data() + i * dim_, dim_};
    }
    [[nodiscard]] std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * dim_, dim_}; }

    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] std::span<T> data() noexcept { return data_; }

    void push_row(std::span<const T> r) {
        if (rows_ == 0 && data_.empty() && dim_ == 0) {
            dim_ = r.size();
        }
        if (r.size() != dim_) {
            throw DimError("row length does not match matrix dim");
        }
        data_.insert(data_.end(), r.begin(), r.end());
        ++rows_;
    }

    void reserve(std::size_t rows) { data_.reserve(rows * dim_); }

    /// First `n` rows.
    [[nodiscard]] BasicMatrix head(std::size_t n) const {
        return BasicMatrix(n, dim_, std::vector<T>(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(n * dim_)));
    }

    template <typename U>
    [[nodiscard]] BasicMatrix<U> cast() const {
        return BasicMatrix<U>(rows_, dim_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

} // namespace calidrop
