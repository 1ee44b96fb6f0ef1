// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace calidrop {

namespace {

template <typename T>
void require_finite(std::span<const T> xs, const char* what) {
    for (const T x : xs) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NumError(std::string("non-finite value in ") + what);
        }
    }
}

} // namespace

template <typename T>
double scaled_score(std::span<const T> q, std::span<const T> k) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        acc += static_cast<double>(q[i]) * static_cast<double>(k[i]);
    }
    return acc / std::sqrt(static_cast<double>(q.size()));
}

template <typename T>
PartialAttention attend(std::span<const T> q, const BasicMatrix<T>& keys, const BasicMatrix<T>& values) {
    if (keys.rows() != values.rows()) {
        throw DimError("attend: key and value counts differ");
    }
    const std::size_t n = keys.rows();
    const std::size_t d_v = values.dim();
    if (n == 0) {
        return PartialAttention::empty(d_v);
    }
    if (q.empty() || keys.dim() != q.size()) {
        throw DimError("attend: query and key dims differ");
    }
    require_finite(q, "query");
    require_finite(keys.data(), "keys");
    require_finite(values.data(), "values");

    std::vector<double> scores(n);
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        scores[t] = scaled_score(q, keys.row(t));
        max_score = std::max(max_score, scores[t]);
    }

    PartialAttention res{Vec(d_v, 0.0), 0.0, n};
    double denom = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double w = std::exp(scores[t] - max_score);
        denom += w;
        const auto v = values.row(t);
        for (std::size_t c = 0; c < d_v; ++c) {
            res.out[c] += w * static_cast<double>(v[c]);
        }
    }
    const double inv = 1.0 / denom;
    for (double& o : res.out) {
        o *= inv;
    }
    res.lse = max_score + std::log(denom);
    return res;
}

template double scaled_score<float>(std::span<const float>, std::span<const float>) noexcept;
template double scaled_score<double>(std::span<const double>, std::span<const double>) noexcept;
template PartialAttention attend<float>(std::span<const float>, const MatrixF&, const MatrixF&);
template PartialAttention attend<double>(std::span<const double>, const Matrix&, const Matrix&);

double log_add_exp(double a, double b) noexcept {
    if (a == -std::numeric_limits<double>::infinity()) {
        return b;
    }
    if (b == -std::numeric_limits<double>::infinity()) {
        return a;
    }
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

MergeResult merge_with_weights(const PartialAttention& a, const PartialAttention& b) {
    if (a.out.size() != b.out.size()) {
        throw DimError("merge: output dims differ");
    }
    if (a.is_empty()) {
        return {b, 0.0, b.is_empty() ? 0.0 : 1.0};
    }
    if (b.is_empty()) {
        return {a, 1.0, 0.0};
    }
    const double lse = log_add_exp(a.lse, b.lse);
    // exp(x.lse - lse) written through the lse gap only: the weights then depend on
    // a.lse - b.lse alone and sum to 1 to within an ulp at any magnitude.
    const double e = std::exp(-std::abs(a.lse - b.lse));
    const double w_hi = 1.0 / (1.0 + e);
    const double w_lo = e / (1.0 + e);
    const double wa = a.lse >= b.lse ? w_hi : w_lo;
    const double wb = a.lse >= b.lse ? w_lo : w_hi;
    MergeResult r{{Vec(a.out.size()), lse, a.count + b.count}, wa, wb};
    for (std::size_t c = 0; c < a.out.size(); ++c) {
        r.merged.out[c] = wa * a.out[c] + wb * b.out[c];
    }
    return r;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimError("cosine: dims differ");
    }
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) {
        return -1.0;
    }
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::vector<double> avg_pool_1d(std::span<const double> scores, std::size_t kernel) {
    if (scores.empty()) {
        throw EmptyInput("avg_pool_1d: empty score vector");
    }
    if (kernel == 0 || kernel % 2 == 0) {
        throw ArgError("avg_pool_1d: kernel must be odd and positive");
    }
    const std::size_t n = scores.size();
    const std::size_t half = kernel / 2;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        double sum = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            sum += scores[j];
        }
        out[i] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
    if (k > scores.size()) {
        throw ArgError("top_k_indices: k exceeds number of scores");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace calidrop
