// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/workload.hpp"

#include <cmath>
#include <random>
#include <string>

namespace calidrop {

void DriftWorkload::validate() const {
    dims.validate();
    if (prompt_len == 0) {
        throw ArgError("workload: prompt_len must be positive");
    }
    if (decode_len == 0) {
        throw ArgError("workload: decode_len must be at least 1");
    }
    if (!(drift >= 0.0) || !std::isfinite(drift)) {
        throw ArgError("workload: drift must be finite and non-negative");
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ArgError("workload: scale must be finite and positive");
    }
}

const HeadTrace& Trace::at(std::size_t layer, std::size_t head) const {
    if (layer >= dims.n_layers || head >= dims.n_heads) {
        throw RangeError("trace: layer/head out of range");
    }
    return heads[layer * dims.n_heads + head];
}

HeadTrace& Trace::at(std::size_t layer, std::size_t head) {
    return const_cast<HeadTrace&>(std::as_const(*this).at(layer, head));
}

void Trace::validate() const {
    dims.validate();
    if (heads.size() != dims.n_layers * dims.n_heads) {
        throw DimMismatch("trace: head count does not match dims");
    }
    const auto check = [](const MatrixF& m, std::size_t rows, std::size_t dim, const char* what) {
        if (m.rows() != rows || (rows > 0 && m.dim() != dim)) {
            throw DimMismatch(std::string("trace: bad shape for ") + what);
        }
    };
    for (const auto& h : heads) {
        check(h.q_prefill, prompt_len, dims.d_k, "q_prefill");
        check(h.k_prefill, prompt_len, dims.d_k, "k_prefill");
        check(h.v_prefill, prompt_len, dims.d_v, "v_prefill");
        check(h.q_decode, decode_len, dims.d_k, "q_decode");
        check(h.k_decode, decode_len, dims.d_k, "k_decode");
        check(h.v_decode, decode_len, dims.d_v, "v_decode");
    }
}

namespace {

void normalize(Vec& v) {
    double nrm = 0.0;
    for (const double x : v) {
        nrm += x * x;
    }
    nrm = std::sqrt(nrm);
    if (nrm > 0.0) {
        for (double& x : v) {
            x /= nrm;
        }
    }
}

HeadTrace generate_head(const DriftWorkload& w, std::size_t layer, std::size_t head) {
    std::seed_seq seq{static_cast<std::uint32_t>(w.seed), static_cast<std::uint32_t>(w.seed >> 32),
                      static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(head)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t total = w.prompt_len + w.decode_len;
    const std::size_t d_k = w.dims.d_k;
    const std::size_t d_v = w.dims.d_v;
    MatrixF q(total, d_k);
    MatrixF k(total, d_k);
    MatrixF v(total, d_v);

    Vec cur(d_k);
    for (double& x : cur) {
        x = normal(rng);
    }
    normalize(cur);
    for (std::size_t t = 0; t < total; ++t) {
        if (t > 0 && w.drift > 0.0) {
            for (double& x : cur) {
                x += w.drift * normal(rng);
            }
            normalize(cur);
        }
        auto qr = q.row(t);
        for (std::size_t c = 0; c < d_k; ++c) {
            qr[c] = static_cast<float>(cur[c]);
        }
        for (float& x : k.row(t)) {
            x = static_cast<float>(w.scale * normal(rng));
        }
        for (float& x : v.row(t)) {
            x = static_cast<float>(w.scale * normal(rng));
        }
    }

    const auto rows = [](const MatrixF& m, std::size_t begin, std::size_t end) {
        const auto d = m.dim();
        const auto all = m.data();
        return MatrixF(end - begin, d, std::vector<float>(all.begin() + static_cast<std::ptrdiff_t>(begin * d),
                                                          all.begin() + static_cast<std::ptrdiff_t>(end * d)));
    };
    HeadTrace h;
    h.q_prefill = rows(q, 0, w.prompt_len);
    h.k_prefill = rows(k, 0, w.prompt_len);
    h.v_prefill = rows(v, 0, w.prompt_len);
    h.q_decode = rows(q, w.prompt_len, total);
    h.k_decode = rows(k, w.prompt_len, total);
    h.v_decode = rows(v, w.prompt_len, total);
    return h;
}

} // namespace

Trace generate(const DriftWorkload& w) {
    w.validate();
    Trace t;
    t.dims = w.dims;
    t.prompt_len = w.prompt_len;
    t.decode_len = w.decode_len;
    t.heads.resize(w.dims.n_layers * w.dims.n_heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(t.heads.size()); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        t.heads[idx] = generate_head(w, idx / w.dims.n_heads, idx % w.dims.n_heads);
    }
    return t;
}

MatrixF all_queries(const HeadTrace& h) {
    MatrixF q = h.q_prefill;
    q.reserve(h.q_prefill.rows() + h.q_decode.rows());
    for (std::size_t i = 0; i < h.q_decode.rows(); ++i) {
        q.push_row(h.q_decode.row(i));
    }
    return q;
}

Vec oracle_full(const Trace& trace, std::size_t layer, std::size_t head, std::size_t step) {
    if (step >= trace.decode_len) {
        throw RangeError("oracle_full: step " + std::to_string(step) + " outside decode range");
    }
    const HeadTrace& h = trace.at(layer, head);
    Matrix keys = h.k_prefill.cast<double>();
    Matrix values = h.v_prefill.cast<double>();
    keys.reserve(trace.prompt_len + step + 1);
    values.reserve(trace.prompt_len + step + 1);
    for (std::size_t s = 0; s <= step; ++s) {
        const auto kr = h.k_decode.row(s);
        const auto vr = h.v_decode.row(s);
        keys.push_row(Vec(kr.begin(), kr.end()));
        values.push_row(Vec(vr.begin(), vr.end()));
    }
    const auto qr = h.q_decode.row(step);
    return attend(Vec(qr.begin(), qr.end()), keys, values).out;
}

} // namespace calidrop
