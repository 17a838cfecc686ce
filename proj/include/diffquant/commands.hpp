#pragma once

#include <cstdint>
#include <string>

#include "diffquant/config.hpp"

namespace diffquant {

// Artifact filenames inside cfg.out_dir.
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kLossCsvFile = "loss.csv";
inline constexpr const char* kLossSvgFile = "loss.svg";
inline constexpr const char* kCalibFile = "calib.calib";
inline constexpr const char* kQModelFile = "model.qmodel";
inline constexpr const char* kSamplesFile = "samples.tensor";
inline constexpr const char* kSamplesSvgFile = "samples.svg";
inline constexpr const char* kEvalCsvFile = "eval.csv";
inline constexpr const char* kEvalJsonFile = "eval.json";
inline constexpr const char* kActivationsCsvFile = "activations.csv";
inline constexpr const char* kActivationsSvgFile = "activations.svg";
inline constexpr const char* kDriftCsvFile = "drift.csv";
inline constexpr const char* kTrajectoryCsvFile = "trajectory.csv";

std::string out_path(const RunConfig& cfg, const char* name);

// Each command validates the config, reads its input artifacts, and writes
// its outputs atomically into cfg.out_dir. Progress goes to stderr; the
// returned paths are what was written.

// Dataset + schedule + init from cfg.seed, full training run.
void cmd_train(const RunConfig& cfg);

// Calibration set from the configured collector.
void cmd_collect(const RunConfig& cfg, const std::string& checkpoint_path);

// PTQ calibration of the checkpoint against a collected set.
void cmd_calibrate(const RunConfig& cfg, const std::string& checkpoint_path,
                   const std::string& calib_path);

// model_path may name a checkpoint or a quantized model; the header decides.
void cmd_sample(const RunConfig& cfg, const std::string& model_path, int n,
                std::uint64_t sample_seed);

// Distribution distance between a sample tensor and either a second tensor or
// the held-out reference set.
void cmd_eval(const RunConfig& cfg, const std::string& samples_a_path,
              const std::string& samples_b_path);

// Per-layer activation statistics across timesteps; optional divergence
// diagnostics against a quantized model.
void cmd_analyze(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& qmodel_path, int n_per_t, bool svg);

// kind: opsel | metric | collector. calib_path may be empty for opsel/metric;
// the configured collector then produces the set.
void cmd_experiment(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& kind, const std::string& calib_path);

}  // namespace diffquant
