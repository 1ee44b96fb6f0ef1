// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "calidrop/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace calidrop {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Comparison c) noexcept {
    switch (c) {
    case Comparison::EvictionOnly:
        return "EvictionOnly";
    case Comparison::CaliDrop:
        return "CaliDrop";
    case Comparison::FullKV:
        return "FullKV";
    }
    return "Unknown";
}

Comparison parse_comparison(std::string_view name) {
    for (const auto c : {Comparison::EvictionOnly, Comparison::CaliDrop, Comparison::FullKV}) {
        if (name == to_string(c)) {
            return c;
        }
    }
    throw ConfigError("unknown comparison '" + std::string(name) + "'");
}

std::string format_calibration_size(CalibrationSize size) {
    return size ? std::to_string(*size) : std::string("inf");
}

CalibrationSize parse_calibration_size(std::string_view text) {
    if (text == "inf" || text == "unlimited" || text == "full") {
        return kUnlimitedCalibration;
    }
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (text.empty() || res.ec != std::errc{} || res.ptr != end) {
        throw ConfigError("invalid calibration size '" + std::string(text) + "'");
    }
    return value;
}

void RunConfig::validate() const {
    if (comparisons.empty()) {
        throw ConfigError("at least one comparison must be selected");
    }
    if (workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
    policy.validate();
    thresholds.validate();
    if (!trace_path) {
        workload.validate();
    }
}

// ---- config ----------------------------------------------------------------

namespace {

template <typename T>
void read_opt(const json& obj, const char* key, T& dst) {
    if (!obj.contains(key)) {
        return;
    }
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, std::string_view where) {
    for (const auto& [k, _] : obj.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError(fmt::format("unknown config key '{}' in {}", k, where));
        }
    }
}

CalibrationSize calibration_size_from_json(const json& v) {
    if (v.is_null()) {
        return kUnlimitedCalibration;
    }
    if (v.is_string()) {
        return parse_calibration_size(v.get<std::string>());
    }
    if (v.is_number_integer() && v.get<long long>() >= 0) {
        return v.get<std::size_t>();
    }
    throw ConfigError("calibration_size must be a non-negative integer or \"inf\"");
}

} // namespace

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    reject_unknown(j,
                   {"workload", "trace", "policy", "thresholds", "calibration_size", "comparisons", "output_dir",
                    "workers"},
                   "config");
    RunConfig c;
    if (j.contains("workload")) {
        const json& w = j["workload"];
        reject_unknown(w,
                       {"seed", "n_layers", "n_heads", "d_k", "d_v", "prompt_len", "decode_len", "drift", "scale"},
                       "workload");
        read_opt(w, "seed", c.workload.seed);
        read_opt(w, "n_layers", c.workload.dims.n_layers);
        read_opt(w, "n_heads", c.workload.dims.n_heads);
        read_opt(w, "d_k", c.workload.dims.d_k);
        read_opt(w, "d_v", c.workload.dims.d_v);
        read_opt(w, "prompt_len", c.workload.prompt_len);
        read_opt(w, "decode_len", c.workload.decode_len);
        read_opt(w, "drift", c.workload.drift);
        read_opt(w, "scale", c.workload.scale);
    }
    if (j.contains("trace")) {
        c.trace_path = j["trace"].get<std::string>();
    }
    if (j.contains("policy")) {
        const json& p = j["policy"];
        reject_unknown(p, {"kind", "budget", "sinks", "window", "kernel"}, "policy");
        if (p.contains("kind")) {
            try {
                c.policy.kind = parse_policy_kind(p["kind"].get<std::string>());
            } catch (const json::exception& e) {
                throw ConfigError(std::string("policy.kind: ") + e.what());
            }
        }
        read_opt(p, "budget", c.policy.budget);
        read_opt(p, "sinks", c.policy.sinks);
        read_opt(p, "window", c.policy.window);
        read_opt(p, "kernel", c.policy.kernel);
    }
    if (j.contains("thresholds")) {
        const json& t = j["thresholds"];
        reject_unknown(t, {"theta1", "theta2"}, "thresholds");
        read_opt(t, "theta1", c.thresholds.theta1);
        read_opt(t, "theta2", c.thresholds.theta2);
    }
    if (j.contains("calibration_size")) {
        c.calibration_size = calibration_size_from_json(j["calibration_size"]);
    }
    if (j.contains("comparisons")) {
        if (!j["comparisons"].is_array()) {
            throw ConfigError("comparisons must be an array");
        }
        c.comparisons.clear();
        for (const auto& item : j["comparisons"]) {
            c.comparisons.insert(parse_comparison(item.get<std::string>()));
        }
    }
    if (j.contains("output_dir")) {
        c.output_dir = j["output_dir"].get<std::string>();
    }
    read_opt(j, "workers", c.workers);
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["workload"] = {{"seed", c.workload.seed},
                     {"n_layers", c.workload.dims.n_layers},
                     {"n_heads", c.workload.dims.n_heads},
                     {"d_k", c.workload.dims.d_k},
                     {"d_v", c.workload.dims.d_v},
                     {"prompt_len", c.workload.prompt_len},
                     {"decode_len", c.workload.decode_len},
                     {"drift", c.workload.drift},
                     {"scale", c.workload.scale}};
    if (c.trace_path) {
        j["trace"] = c.trace_path->string();
    }
    j["policy"] = {{"kind", std::string(to_string(c.policy.kind))},
                   {"budget", c.policy.budget},
                   {"sinks", c.policy.sinks},
                   {"window", c.policy.window},
                   {"kernel", c.policy.kernel}};
    j["thresholds"] = {{"theta1", c.thresholds.theta1}, {"theta2", c.thresholds.theta2}};
    if (c.calibration_size) {
        j["calibration_size"] = *c.calibration_size;
    } else {
        j["calibration_size"] = "inf";
    }
    j["comparisons"] = json::array();
    for (const auto cmp : c.comparisons) {
        j["comparisons"].push_back(std::string(to_string(cmp)));
    }
    j["output_dir"] = c.output_dir.string();
    j["workers"] = c.workers;
    return j;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    try {
        return config_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

// ---- evaluation --------------------------------------------------------------

namespace {

double l1_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::abs(a[i] - b[i]);
    }
    return acc;
}

EvictionPolicy full_cache_policy(EvictionPolicy p, std::size_t prompt_len) {
    p.budget = std::max({prompt_len, p.sinks + 1, p.window, p.budget});
    return p;
}

struct HeadOutcome {
    std::vector<StepRecord> records;
    std::vector<double> l1_full_kv;
    std::vector<double> step_seconds;
};

HeadOutcome evaluate_head(const Trace& trace, const RunConfig& config, std::size_t layer, std::size_t head) {
    using clock = std::chrono::steady_clock;
    const HeadTrace& h = trace.at(layer, head);
    const Matrix q_pre = h.q_prefill.cast<double>();
    Matrix full_k = h.k_prefill.cast<double>();
    Matrix full_v = h.v_prefill.cast<double>();
    const Matrix q_dec = h.q_decode.cast<double>();
    const Matrix k_dec = h.k_decode.cast<double>();
    const Matrix v_dec = h.v_decode.cast<double>();

    HeadEngine engine(config.policy, config.thresholds, config.calibration_size);
    engine.prefill(q_pre, full_k, full_v);

    std::optional<HeadEngine> full_engine;
    if (config.comparisons.contains(Comparison::FullKV)) {
        full_engine.emplace(full_cache_policy(config.policy, trace.prompt_len), config.thresholds,
                            kUnlimitedCalibration);
        full_engine->prefill(q_pre, full_k, full_v);
    }

    full_k.reserve(trace.prompt_len + trace.decode_len);
    full_v.reserve(trace.prompt_len + trace.decode_len);

    HeadOutcome out;
    out.records.reserve(trace.decode_len);
    for (std::size_t s = 0; s < trace.decode_len; ++s) {
        const auto q = q_dec.row(s);
        full_k.push_row(k_dec.row(s));
        full_v.push_row(v_dec.row(s));
        const Vec oracle = attend(q, full_k, full_v).out;

        const auto t0 = clock::now();
        const DecodeResult r = engine.step(q, k_dec.row(s), v_dec.row(s));
        const auto t1 = clock::now();

        StepRecord rec;
        rec.layer = layer;
        rec.head = head;
        rec.step = s;
        rec.rho = r.action.tag == ActionTag::NoState ? std::numeric_limits<double>::quiet_NaN() : r.action.rho;
        rec.action = r.action.tag;
        rec.l1_evict_only = l1_distance(r.resident_output, oracle);
        rec.l1_calidrop = l1_distance(r.output, oracle);
        rec.alpha_j = r.alpha_j;
        out.records.push_back(rec);
        out.step_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

        if (full_engine) {
            const DecodeResult f = full_engine->step(q, k_dec.row(s), v_dec.row(s));
            out.l1_full_kv.push_back(l1_distance(f.resident_output, oracle));
        }
    }
    return out;
}

} // namespace

RunResult evaluate(const Trace& trace, const RunConfig& config) {
    config.validate();
    trace.validate();
    const std::size_t n_streams = trace.dims.n_layers * trace.dims.n_heads;
    std::vector<HeadOutcome> outcomes(n_streams);
    std::vector<std::exception_ptr> errors(n_streams);

#pragma omp parallel for num_threads(config.workers) schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_streams); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            outcomes[idx] = evaluate_head(trace, config, idx / trace.dims.n_heads, idx % trace.dims.n_heads);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    RunResult r;
    r.dims = trace.dims;
    r.decode_len = trace.decode_len;
    for (auto& o : outcomes) {
        r.records.insert(r.records.end(), o.records.begin(), o.records.end());
        r.l1_full_kv.insert(r.l1_full_kv.end(), o.l1_full_kv.begin(), o.l1_full_kv.end());
        r.step_seconds.insert(r.step_seconds.end(), o.step_seconds.begin(), o.step_seconds.end());
    }
    return r;
}

namespace {

void accumulate(ActionStats& s, const StepRecord& rec) {
    ++s.steps;
    s.mean_l1_evict_only += rec.l1_evict_only;
    s.mean_l1_calidrop += rec.l1_calidrop;
}

void finish(ActionStats& s) {
    if (s.steps > 0) {
        s.mean_l1_evict_only /= static_cast<double>(s.steps);
        s.mean_l1_calidrop /= static_cast<double>(s.steps);
    }
}

} // namespace

Summary summarize(const RunResult& result) {
    Summary s;
    s.steps = result.records.size();
    s.layer_recompute_frequency.assign(result.dims.n_layers, 0.0);
    std::size_t recomputes = 0;
    std::size_t calibrates = 0;
    for (const auto& rec : result.records) {
        s.mean_l1_evict_only += rec.l1_evict_only;
        s.mean_l1_calidrop += rec.l1_calidrop;
        switch (rec.action) {
        case ActionTag::Recompute:
            accumulate(s.recompute, rec);
            ++recomputes;
            s.layer_recompute_frequency[rec.layer] += 1.0;
            break;
        case ActionTag::Calibrate:
            accumulate(s.calibrate, rec);
            ++calibrates;
            break;
        case ActionTag::PassThrough:
            accumulate(s.pass_through, rec);
            break;
        case ActionTag::NoState:
            accumulate(s.no_state, rec);
            break;
        }
    }
    if (s.steps > 0) {
        const auto n = static_cast<double>(s.steps);
        s.mean_l1_evict_only /= n;
        s.mean_l1_calidrop /= n;
        s.recompute_frequency = static_cast<double>(recomputes) / n;
        s.calibrate_fraction = static_cast<double>(calibrates) / n;
    }
    const double per_layer_steps = static_cast<double>(result.dims.n_heads * result.decode_len);
    for (double& f : s.layer_recompute_frequency) {
        f = per_layer_steps > 0 ? f / per_layer_steps : 0.0;
    }
    for (ActionStats* a : {&s.recompute, &s.calibrate, &s.pass_through, &s.no_state}) {
        finish(*a);
    }
    if (!result.l1_full_kv.empty()) {
        double acc = 0.0;
        for (const double v : result.l1_full_kv) {
            acc += v;
        }
        s.mean_l1_full_kv = acc / static_cast<double>(result.l1_full_kv.size());
    }
    return s;
}

Trace resolve_trace(const RunConfig& config) {
    return config.trace_path ? load_trace(*config.trace_path) : generate(config.workload);
}

// ---- csv -----------------------------------------------------------------------

std::string steps_csv(const RunResult& r) {
    std::string out = "layer,head,step,rho,action,l1_evict_only,l1_calidrop,alpha_j\n";
    for (const auto& rec : r.records) {
        out += fmt::format("{},{},{},{},{},{},{},{}\n", rec.layer, rec.head, rec.step, rec.rho, to_string(rec.action),
                           rec.l1_evict_only, rec.l1_calidrop, rec.alpha_j);
    }
    return out;
}

std::string frequency_csv(const Summary& s) {
    std::string out = "layer,recompute_frequency\n";
    for (std::size_t l = 0; l < s.layer_recompute_frequency.size(); ++l) {
        out += fmt::format("{},{}\n", l, s.layer_recompute_frequency[l]);
    }
    return out;
}

std::string summary_csv(const Summary& s, const std::set<Comparison>& comparisons) {
    std::string out = "comparison,action,steps,mean_l1\n";
    const std::pair<std::string_view, const ActionStats*> tags[] = {
        {"Recompute", &s.recompute},
        {"Calibrate", &s.calibrate},
        {"PassThrough", &s.pass_through},
        {"NoState", &s.no_state},
    };
    if (comparisons.contains(Comparison::EvictionOnly)) {
        out += fmt::format("EvictionOnly,all,{},{}\n", s.steps, s.mean_l1_evict_only);
        for (const auto& [name, a] : tags) {
            if (a->steps > 0) {
                out += fmt::format("EvictionOnly,{},{},{}\n", name, a->steps, a->mean_l1_evict_only);
            }
        }
    }
    if (comparisons.contains(Comparison::CaliDrop)) {
        out += fmt::format("CaliDrop,all,{},{}\n", s.steps, s.mean_l1_calidrop);
        for (const auto& [name, a] : tags) {
            if (a->steps > 0) {
                out += fmt::format("CaliDrop,{},{},{}\n", name, a->steps, a->mean_l1_calidrop);
            }
        }
    }
    if (comparisons.contains(Comparison::FullKV) && s.mean_l1_full_kv) {
        out += fmt::format("FullKV,all,{},{}\n", s.steps, *s.mean_l1_full_kv);
    }
    return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::string out = "theta1,theta2,mean_l1_calidrop,mean_l1_evict_only,recompute_frequency,calibrate_fraction\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{},{}\n", r.theta1, r.theta2, r.summary.mean_l1_calidrop,
                           r.summary.mean_l1_evict_only, r.summary.recompute_frequency, r.summary.calibrate_fraction);
    }
    return out;
}

std::string heatmap_csv(const Matrix& m) {
    std::string out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j > 0) out += ',';
            out += fmt::format("{}", row[j]);
        }
        out += '\n';
    }
    return out;
}

std::string cal_size_csv(std::span<const CalSizeRow> rows) {
    std::string out = "calibration_size,mean_l1_calidrop,mean_l1_evict_only,median_step_us\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{}\n", format_calibration_size(r.size), r.mean_l1_calidrop,
                           r.mean_l1_evict_only, r.median_step_us);
    }
    return out;
}

void write_text(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

// ---- experiments -----------------------------------------------------------------

RunResult run(const Trace& trace, const RunConfig& config) {
    RunResult r = evaluate(trace, config);
    const Summary s = summarize(r);
    write_text(config.output_dir / "steps.csv", steps_csv(r));
    write_text(config.output_dir / "frequency.csv", frequency_csv(s));
    write_text(config.output_dir / "summary.csv", summary_csv(s, config.comparisons));
    return r;
}

RunResult run(const RunConfig& config) {
    config.validate();
    return run(resolve_trace(config), config);
}

std::vector<SweepRow> sweep(const Trace& trace, const RunConfig& config, std::span<const double> theta1_grid,
                            std::span<const double> theta2_grid) {
    if (theta1_grid.empty() || theta2_grid.empty()) {
        throw ConfigError("sweep: threshold grids must be non-empty");
    }
    for (const double t1 : theta1_grid) {
        for (const double t2 : theta2_grid) {
            Thresholds{t1, t2}.validate();
        }
    }
    RunConfig cfg = config;
    cfg.comparisons.erase(Comparison::FullKV);
    if (cfg.comparisons.empty()) {
        cfg.comparisons.insert(Comparison::CaliDrop);
    }
    std::vector<SweepRow> rows;
    for (const double t1 : theta1_grid) {
        for (const double t2 : theta2_grid) {
            cfg.thresholds = {t1, t2};
            rows.push_back({t1, t2, summarize(evaluate(trace, cfg))});
        }
    }
    write_text(config.output_dir / "sweep.csv", sweep_csv(rows));
    return rows;
}

Matrix heatmap(const Trace& trace, std::size_t layer, std::size_t head, std::size_t begin, std::size_t end) {
    const std::size_t total = trace.prompt_len + trace.decode_len;
    if (begin >= end || end > total) {
        throw RangeError(fmt::format("heatmap: range [{}, {}) outside sequence of length {}", begin, end, total));
    }
    const Matrix q = all_queries(trace.at(layer, head)).cast<double>();
    const std::size_t n = end - begin;
    Matrix m(n, n);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        m.row(i)[i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = cosine(q.row(begin + i), q.row(begin + j));
            m.row(i)[j] = c;
            m.row(j)[i] = c;
        }
    }
    return m;
}

std::vector<CalSizeRow> calibration_size_sweep(const Trace& trace, const RunConfig& config,
                                               std::span<const CalibrationSize> sizes) {
    if (sizes.empty()) {
        throw ConfigError("cal-size: at least one calibration size is required");
    }
    RunConfig cfg = config;
    cfg.comparisons = {Comparison::EvictionOnly, Comparison::CaliDrop};
    std::vector<CalSizeRow> rows;
    for (const auto size : sizes) {
        cfg.calibration_size = size;
        const RunResult r = evaluate(trace, cfg);
        const Summary s = summarize(r);
        std::vector<double> t = r.step_seconds;
        double median = 0.0;
        if (!t.empty()) {
            const auto mid = t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2);
            std::nth_element(t.begin(), mid, t.end());
            median = *mid;
        }
        rows.push_back({size, s.mean_l1_calidrop, s.mean_l1_evict_only, median * 1e6});
    }
    write_text(config.output_dir / "cal_size.csv", cal_size_csv(rows));
    return rows;
}

} // namespace calidrop
