#pragma once

#include <cstdint>
#include <vector>

#include "sonn/tensor.hpp"

namespace sonn {

struct Signal1D {
    Vector samples;
    std::uint32_t sample_rate_hz = 400;
};

struct PeakSet {
    std::vector<std::int64_t> indices; // strictly increasing sample positions
};

struct MatchCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

struct Metrics {
    double sen = 0.0;
    double ppr = 0.0;
    double f1 = 0.0;
};

struct SegmentWindow {
    Vector samples;
    Index offset = 0;    // absolute start in the parent signal
    Index valid_len = 0; // < samples.size() only for the padded tail
    bool partial = false;
};

std::vector<SegmentWindow> segment(const Signal1D& signal, Index seg_len = 8000);

// Linear map onto [-1, 1]; a constant segment maps to all zeros.
Vector normalize(const Vector& segment);

// {0,1} pulse train with a pulse_width-wide block centered on each peak.
Vector make_target(const PeakSet& peaks, Index seg_len, Index pulse_width = 5);

// Threshold runs -> per-run peak (center of the maximal plateau) ->
// refractory merge keeping the higher-valued candidate.
PeakSet extract_peaks(const Vector& prediction, double threshold = 0.5,
                      double refractory_ms = 120.0, std::uint32_t sample_rate_hz = 400);

// Greedy one-to-one matching of truth peaks (in increasing order) to the
// nearest unmatched prediction within tolerance.
MatchCounts match_peaks(const PeakSet& predicted, const PeakSet& truth, double tol_ms = 75.0,
                        std::uint32_t sample_rate_hz = 400);

Metrics compute_metrics(const MatchCounts& counts);

} // namespace sonn
