// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// KVT1 trace directories: manifest.json plus one little-endian f32 blob per
// (layer, head, tensor, phase), named L{layer}_H{head}_{q|k|v}_{prefill|decode}.bin.

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "calidrop/workload.hpp"

namespace calidrop {

namespace fs = std::filesystem;

namespace {

constexpr int kTraceVersion = 1;

std::string blob_name(std::size_t layer, std::size_t head, char tensor, const char* phase) {
    return "L" + std::to_string(layer) + "_H" + std::to_string(head) + "_" + tensor + "_" + phase + ".bin";
}

std::uint32_t to_little(std::uint32_t x) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
    }
    return x;
}

void write_blob(const fs::path& path, const MatrixF& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    for (const float f : m.data()) {
        const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(f));
        out.write(reinterpret_cast<const char*>(&le), sizeof(le));
    }
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

MatrixF read_blob(const fs::path& path, std::size_t rows, std::size_t dim) {
    if (!fs::exists(path)) {
        throw TruncatedFile("missing trace blob " + path.filename().string());
    }
    const auto expected = static_cast<std::uintmax_t>(rows) * dim * sizeof(float);
    const auto actual = fs::file_size(path);
    if (actual != expected) {
        throw DimMismatch(path.filename().string() + ": " + std::to_string(actual) + " bytes, manifest implies " +
                          std::to_string(expected));
    }
    std::ifstream in(path, std::ios::binary);
    std::vector<float> data(rows * dim);
    for (float& f : data) {
        std::uint32_t le = 0;
        if (!in.read(reinterpret_cast<char*>(&le), sizeof(le))) {
            throw TruncatedFile("short read in " + path.filename().string());
        }
        f = std::bit_cast<float>(to_little(le));
    }
    return MatrixF(rows, dim, std::move(data));
}

std::size_t require_size(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
        throw FormatError(std::string("manifest: missing or invalid '") + key + "'");
    }
    return j.at(key).get<std::size_t>();
}

} // namespace

void save_trace(const Trace& trace, const fs::path& dir) {
    trace.validate();
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["version"] = kTraceVersion;
    manifest["n_layers"] = trace.dims.n_layers;
    manifest["n_heads"] = trace.dims.n_heads;
    manifest["d_k"] = trace.dims.d_k;
    manifest["d_v"] = trace.dims.d_v;
    manifest["prompt_len"] = trace.prompt_len;
    manifest["decode_len"] = trace.decode_len;
    manifest["dtype"] = "f32";
    {
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        if (!out) {
            throw DataError("cannot write manifest in " + dir.string());
        }
        out << manifest.dump(2) << '\n';
    }
    for (std::size_t l = 0; l < trace.dims.n_layers; ++l) {
        for (std::size_t h = 0; h < trace.dims.n_heads; ++h) {
            const HeadTrace& ht = trace.at(l, h);
            write_blob(dir / blob_name(l, h, 'q', "prefill"), ht.q_prefill);
            write_blob(dir / blob_name(l, h, 'k', "prefill"), ht.k_prefill);
            write_blob(dir / blob_name(l, h, 'v', "prefill"), ht.v_prefill);
            write_blob(dir / blob_name(l, h, 'q', "decode"), ht.q_decode);
            write_blob(dir / blob_name(l, h, 'k', "decode"), ht.k_decode);
            write_blob(dir / blob_name(l, h, 'v', "decode"), ht.v_decode);
        }
    }
}

Trace load_trace(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw FormatError("no manifest.json in " + dir.string());
    }
    nlohmann::json manifest;
    {
        std::ifstream in(manifest_path);
        try {
            manifest = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("manifest.json is not valid JSON: ") + e.what());
        }
    }
    if (!manifest.is_object()) {
        throw FormatError("manifest.json must be an object");
    }
    if (!manifest.contains("version") || manifest["version"] != kTraceVersion) {
        throw FormatError("unsupported trace version");
    }
    if (!manifest.contains("dtype") || manifest["dtype"] != "f32") {
        throw FormatError("unsupported trace dtype");
    }

    Trace t;
    t.dims.n_layers = require_size(manifest, "n_layers");
    t.dims.n_heads = require_size(manifest, "n_heads");
    t.dims.d_k = require_size(manifest, "d_k");
    t.dims.d_v = require_size(manifest, "d_v");
    t.prompt_len = require_size(manifest, "prompt_len");
    t.decode_len = require_size(manifest, "decode_len");
    try {
        t.dims.validate();
    } catch (const ArgError& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }

    t.heads.resize(t.dims.n_layers * t.dims.n_heads);
    for (std::size_t l = 0; l < t.dims.n_layers; ++l) {
        for (std::size_t h = 0; h < t.dims.n_heads; ++h) {
            HeadTrace& ht = t.at(l, h);
            ht.q_prefill = read_blob(dir / blob_name(l, h, 'q', "prefill"), t.prompt_len, t.dims.d_k);
            ht.k_prefill = read_blob(dir / blob_name(l, h, 'k', "prefill"), t.prompt_len, t.dims.d_k);
            ht.v_prefill = read_blob(dir / blob_name(l, h, 'v', "prefill"), t.prompt_len, t.dims.d_v);
            ht.q_decode = read_blob(dir / blob_name(l, h, 'q', "decode"), t.decode_len, t.dims.d_k);
            ht.k_decode = read_blob(dir / blob_name(l, h, 'k', "decode"), t.decode_len, t.dims.d_k);
            ht.v_decode = read_blob(dir / blob_name(l, h, 'v', "decode"), t.decode_len, t.dims.d_v);
        }
    }
    return t;
}

} // namespace calidrop
