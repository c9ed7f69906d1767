#include "sonn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sonn {

namespace {

bool strictly_increasing(const std::vector<std::int64_t>& v) {
    for (std::size_t j = 1; j < v.size(); ++j)
        if (v[j] <= v[j - 1]) return false;
    return true;
}

Index refractory_samples(double refractory_ms, std::uint32_t sample_rate_hz) {
    return static_cast<Index>(std::llround(refractory_ms * sample_rate_hz / 1000.0));
}

} // namespace

std::vector<SegmentWindow> segment(const Signal1D& signal, Index seg_len) {
    if (signal.samples.size() == 0) throw std::invalid_argument("segment: empty signal");
    if (seg_len < 1) throw std::invalid_argument("segment: segment length must be >= 1");
    std::vector<SegmentWindow> windows;
    const Index total = signal.samples.size();
    for (Index offset = 0; offset < total; offset += seg_len) {
        SegmentWindow window;
        window.offset = offset;
        window.valid_len = std::min(seg_len, total - offset);
        window.partial = window.valid_len < seg_len;
        window.samples = Vector::Zero(seg_len);
        window.samples.head(window.valid_len) = signal.samples.segment(offset, window.valid_len);
        windows.push_back(std::move(window));
    }
    return windows;
}

Vector normalize(const Vector& seg) {
    if (seg.size() == 0) throw std::invalid_argument("normalize: empty segment");
    const double lo = seg.minCoeff();
    const double hi = seg.maxCoeff();
    if (hi == lo) return Vector::Zero(seg.size());
    return (2.0 * (seg.array() - lo) / (hi - lo) - 1.0).matrix();
}

Vector make_target(const PeakSet& peaks, Index seg_len, Index pulse_width) {
    if (pulse_width < 1 || pulse_width % 2 == 0)
        throw std::invalid_argument("make_target: pulse width must be odd");
    Vector target = Vector::Zero(seg_len);
    const Index half = pulse_width / 2;
    for (std::int64_t peak : peaks.indices) {
        if (peak < 0 || peak >= seg_len)
            throw std::invalid_argument("make_target: peak outside segment");
        const Index lo = std::max<Index>(0, peak - half);
        const Index hi = std::min<Index>(seg_len - 1, peak + half);
        target.segment(lo, hi - lo + 1).setOnes();
    }
    return target;
}

PeakSet extract_peaks(const Vector& prediction, double threshold, double refractory_ms,
                      std::uint32_t sample_rate_hz) {
    const Index refractory = refractory_samples(refractory_ms, sample_rate_hz);
    struct Candidate {
        std::int64_t index;
        double value;
    };
    std::vector<Candidate> candidates;
    Index pos = 0;
    const Index n = prediction.size();
    while (pos < n) {
        if (prediction(pos) < threshold) {
            ++pos;
            continue;
        }
        Index run_end = pos;
        while (run_end + 1 < n && prediction(run_end + 1) >= threshold) ++run_end;
        // Peak = center of the first maximal plateau inside the run.
        Index best = pos;
        for (Index j = pos + 1; j <= run_end; ++j)
            if (prediction(j) > prediction(best)) best = j;
        Index plateau_end = best;
        while (plateau_end + 1 <= run_end && prediction(plateau_end + 1) == prediction(best))
            ++plateau_end;
        candidates.push_back({(best + plateau_end) / 2, prediction(best)});
        pos = run_end + 1;
    }
    PeakSet peaks;
    for (const Candidate& cand : candidates) {
        if (!peaks.indices.empty() && cand.index - peaks.indices.back() < refractory) {
            // Within the refractory window: keep the stronger of the two.
            const std::size_t last = peaks.indices.size() - 1;
            if (cand.value > prediction(peaks.indices[last])) peaks.indices[last] = cand.index;
        } else {
            peaks.indices.push_back(cand.index);
        }
    }
    return peaks;
}

MatchCounts match_peaks(const PeakSet& predicted, const PeakSet& truth, double tol_ms,
                        std::uint32_t sample_rate_hz) {
    if (!strictly_increasing(predicted.indices) || !strictly_increasing(truth.indices))
        throw std::invalid_argument("match_peaks: peak sets must be strictly increasing");
    const std::int64_t tol =
        static_cast<std::int64_t>(std::llround(tol_ms * sample_rate_hz / 1000.0));
    std::vector<bool> used(predicted.indices.size(), false);
    MatchCounts counts;
    for (std::int64_t t : truth.indices) {
        std::int64_t best = -1;
        std::int64_t best_dist = tol + 1;
        for (std::size_t j = 0; j < predicted.indices.size(); ++j) {
            if (used[j]) continue;
            const std::int64_t dist = std::llabs(predicted.indices[j] - t);
            if (dist < best_dist) {
                best_dist = dist;
                best = static_cast<std::int64_t>(j);
            }
            if (predicted.indices[j] > t + tol) break;
        }
        if (best >= 0) {
            used[static_cast<std::size_t>(best)] = true;
            ++counts.tp;
        } else {
            ++counts.fn;
        }
    }
    counts.fp = static_cast<std::int64_t>(predicted.indices.size()) - counts.tp;
    return counts;
}

Metrics compute_metrics(const MatchCounts& counts) {
    Metrics metrics;
    const double tp = static_cast<double>(counts.tp);
    if (counts.tp + counts.fp > 0) metrics.ppr = tp / static_cast<double>(counts.tp + counts.fp);
    if (counts.tp + counts.fn > 0) metrics.sen = tp / static_cast<double>(counts.tp + counts.fn);
    if (metrics.sen + metrics.ppr > 0)
        metrics.f1 = 2.0 * metrics.ppr * metrics.sen / (metrics.ppr + metrics.sen);
    return metrics;
}

} // namespace sonn
