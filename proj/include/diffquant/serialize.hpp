#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffquant/calibration.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"
#include "diffquant/tensor.hpp"
#include "diffquant/training.hpp"

namespace diffquant {

// Content hashing for artifact identity; artifacts never embed paths or
// timestamps, so reruns produce identical bytes and identical ids.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string hex16(std::uint64_t v);

// Round-trip-exact decimal rendering.
std::string format_double(double v);

// Write-to-temp then rename; creates parent directories, removes the temp
// file on failure.
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file_bytes(const std::string& path);  // absent -> MissingInputError

// Tensor blob: one-line JSON header {"shape": [...]} then little-endian
// float64 payload.
void append_tensor(std::string& out, const Tensor& t);
Tensor parse_tensor(const std::string& bytes, std::size_t& offset);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

struct Checkpoint {
    ScoreNetwork net;
    ScheduleKind sched_kind = ScheduleKind::Linear;
    int T = 100;
    double const_beta = 0.0;
    TrainConfig train;
    std::uint64_t seed = 0;  // weight-init seed
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

struct LoadedCheckpoint {
    Checkpoint ckpt;
    std::string id;  // content hash of the file bytes
};
LoadedCheckpoint load_checkpoint(const std::string& path);

void save_calibration(const std::string& path, const CalibrationSet& set);
CalibrationSet load_calibration(const std::string& path);

// Calibrated network plus the settings that produced it.
struct QuantizedModel {
    QuantizedNetwork qnet;
    int bits = 8;
    QuantMetric metric;
    SearchConfig search;
    HookConfig hook_cfg;
    std::string checkpoint_id;
    std::string calib_collector;
    ScheduleKind sched_kind = ScheduleKind::Linear;
    int T = 100;
    double const_beta = 0.0;
};

void save_qmodel(const std::string& path, const QuantizedModel& qm);
QuantizedModel load_qmodel(const std::string& path);

// CSV with minimal quoting (fields containing comma/quote/newline get
// double-quote escaping).
std::string csv_line(const std::vector<std::string>& cols);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Self-contained SVG builders; inputs map to deterministic bytes.
struct ScatterSeries {
    std::string name;
    std::string color;  // e.g. "#1f77b4"
    Tensor points;      // [n x 2]
};
std::string svg_scatter(const std::vector<ScatterSeries>& series, const std::string& title);

std::string svg_line_chart(const std::vector<double>& ys, const std::string& title,
                           const std::string& y_label);

struct HistPanel {
    std::string title;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> counts;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};
std::string svg_hist_panels(const std::vector<HistPanel>& panels, const std::string& title);

}  // namespace diffquant
