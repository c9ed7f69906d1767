#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sonn/network.hpp"
#include "sonn/pipeline.hpp"

namespace sonn {

struct SyntheticConfig {
    double duration_s = 60.0;
    std::uint32_t sample_rate_hz = 400;
    double mean_hr_bpm = 70.0;
    double hr_jitter_frac = 0.15;
    double qrs_width_ms = 80.0;
    double qrs_amp_min = 0.6;
    double qrs_amp_max = 1.4;
    double baseline_wander_amp = 0.3;
    double baseline_wander_freq_hz = 0.33;
    double noise_std = 0.05;
    double glitch_rate_per_min = 2.0;
    double arrhythmia_frac = 0.1; // halved amplitude, doubled width
    std::uint64_t seed = 0;
};

struct GeneratedRecord {
    Signal1D signal;
    PeakSet peaks;
    std::vector<std::uint8_t> flags; // 1 = arrhythmia-like beat
    Vector clean;                    // QRS component only, for self-consistency checks
};

GeneratedRecord generate(const SyntheticConfig& config);

// Binary signal file: "SONN1SIG", version u16, rate u32, count u64,
// f32 samples; all little-endian.
void write_signal(const std::string& path, const Signal1D& signal);
Signal1D read_signal(const std::string& path);

// Text CSV: header "index,arrhythmia", one peak per line.
void write_peaks(const std::string& path, const PeakSet& peaks,
                 const std::vector<std::uint8_t>& flags);
std::pair<PeakSet, std::vector<std::uint8_t>> read_peaks(const std::string& path);

// Binary checkpoint: "SONN1CKPT", version u16, tagged NetworkConfig,
// sample rate, per-layer shape headers + f32 weights in [k][i][r][q]
// order, then biases; optional optimizer block.
void save_checkpoint(const std::string& path, const Model& model, std::uint32_t sample_rate_hz,
                     const OptimizerState* optimizer = nullptr);

struct Checkpoint {
    Model model;
    std::uint32_t sample_rate_hz = 400;
    std::optional<OptimizerState> optimizer;
};

Checkpoint load_checkpoint(const std::string& path);

// Bridge for externally converted records: one float per line for the
// signal, peaks per the write_peaks format.
GeneratedRecord import_csv_record(const std::string& signal_csv, const std::string& peaks_csv,
                                  std::uint32_t sample_rate_hz);

} // namespace sonn
