// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "calidrop/engine.hpp"
#include "calidrop/eviction.hpp"
#include "calidrop/workload.hpp"

namespace calidrop {

enum class Comparison { EvictionOnly, CaliDrop, FullKV };

std::string_view to_string(Comparison c) noexcept;
Comparison parse_comparison(std::string_view name);

std::string format_calibration_size(CalibrationSize size);
CalibrationSize parse_calibration_size(std::string_view text);

struct RunConfig {
    DriftWorkload workload;
    std::optional<std::filesystem::path> trace_path; ///< replay this KVT1 directory instead of generating
    EvictionPolicy policy = EvictionPolicy::snapkv(64);
    Thresholds thresholds;
    CalibrationSize calibration_size = kUnlimitedCalibration;
    std::set<Comparison> comparisons{Comparison::EvictionOnly, Comparison::CaliDrop, Comparison::FullKV};
    std::filesystem::path output_dir = "calidrop_out";
    int workers = 1;

    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

struct StepRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t step = 0;
    double rho = 0.0; ///< NaN when no calibration state exists
    ActionTag action = ActionTag::NoState;
    double l1_evict_only = 0.0;
    double l1_calidrop = 0.0;
    double alpha_j = 0.0;
};

struct RunResult {
    ModelDims dims;
    std::size_t decode_len = 0;
    std::vector<StepRecord> records;  ///< ordered by (layer, head, step)
    std::vector<double> l1_full_kv;   ///< parallel to records; empty unless FullKV is compared
    std::vector<double> step_seconds; ///< CaliDrop decode wall time, parallel to records
};

struct ActionStats {
    std::size_t steps = 0;
    double mean_l1_evict_only = 0.0;
    double mean_l1_calidrop = 0.0;
};

struct Summary {
    std::size_t steps = 0;
    double mean_l1_evict_only = 0.0;
    double mean_l1_calidrop = 0.0;
    std::optional<double> mean_l1_full_kv;
    double recompute_frequency = 0.0;
    double calibrate_fraction = 0.0;
    std::vector<double> layer_recompute_frequency; ///< mean over heads of Recompute / decode steps
    ActionStats recompute, calibrate, pass_through, no_state;
};

/// Runs eviction-only, CaliDrop and (optionally) full-cache attention over every
/// decode step of every head and compares each against the full-attention oracle.
RunResult evaluate(const Trace& trace, const RunConfig& config);

Summary summarize(const RunResult& result);

/// Generates or loads the configured workload.
Trace resolve_trace(const RunConfig& config);

/// evaluate() plus steps.csv, frequency.csv and summary.csv under config.output_dir.
RunResult run(const RunConfig& config);
RunResult run(const Trace& trace, const RunConfig& config);

struct SweepRow {
    double theta1 = 0.0;
    double theta2 = 0.0;
    Summary summary;
};

/// One summary per (theta1, theta2) pair, written to sweep.csv.
std::vector<SweepRow> sweep(const Trace& trace, const RunConfig& config, std::span<const double> theta1_grid,
                            std::span<const double> theta2_grid);

/// M[i][j] = cosine(q_i, q_j) over the concatenated prompt+decode queries in [begin, end).
Matrix heatmap(const Trace& trace, std::size_t layer, std::size_t head, std::size_t begin, std::size_t end);

struct CalSizeRow {
    CalibrationSize size;
    double mean_l1_calidrop = 0.0;
    double mean_l1_evict_only = 0.0;
    double median_step_us = 0.0;
};

/// One row per calibration size, written to cal_size.csv.
std::vector<CalSizeRow> calibration_size_sweep(const Trace& trace, const RunConfig& config,
                                               std::span<const CalibrationSize> sizes);

// CSV serialisation. Every writer emits doubles in shortest round-trip form.
std::string steps_csv(const RunResult& r);
std::string frequency_csv(const Summary& s);
std::string summary_csv(const Summary& s, const std::set<Comparison>& comparisons);
std::string sweep_csv(std::span<const SweepRow> rows);
std::string heatmap_csv(const Matrix& m);
std::string cal_size_csv(std::span<const CalSizeRow> rows);

void write_text(const std::filesystem::path& path, std::string_view text);

} // namespace calidrop
