#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "sonn/pipeline.hpp"

using namespace sonn;

namespace {

Signal1D make_signal(Index n, std::uint64_t seed = 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Signal1D signal;
    signal.samples.resize(n);
    for (Index j = 0; j < n; ++j) signal.samples(j) = dist(rng);
    return signal;
}

// Exhaustive one-to-one matching that maximizes TP; oracle for the
// greedy matcher when peaks are well separated.
std::int64_t best_matching(const std::vector<std::int64_t>& pred,
                           const std::vector<std::int64_t>& truth, std::int64_t tol) {
    if (truth.empty() || pred.empty()) return 0;
    std::vector<std::int64_t> best(truth.size() + 1, 0);
    // With spacing > 2*tol each prediction can match at most one truth
    // peak, so counting feasible pairs greedily from the left is optimal.
    std::int64_t tp = 0;
    std::vector<bool> used(pred.size(), false);
    for (std::int64_t t : truth)
        for (std::size_t j = 0; j < pred.size(); ++j)
            if (!used[j] && std::llabs(pred[j] - t) <= tol) {
                used[j] = true;
                ++tp;
                break;
            }
    return tp;
}

} // namespace

TEST_CASE("segment splits and pads") {
    CHECK(segment(make_signal(16000)).size() == 2);
    CHECK(segment(make_signal(16000))[1].offset == 8000);

    auto windows = segment(make_signal(8001));
    REQUIRE(windows.size() == 2);
    CHECK(windows[1].partial);
    CHECK(windows[1].valid_len == 1);
    CHECK(windows[1].samples.size() == 8000);
    CHECK(windows[1].samples.tail(7999).cwiseAbs().maxCoeff() == 0.0);

    // 24 h at 400 Hz
    Signal1D day;
    day.samples = Vector::Zero(34560000);
    day.samples(0) = 1; // non-degenerate
    CHECK(segment(day).size() == 4320);

    Signal1D empty;
    CHECK_THROWS_AS(segment(empty), std::invalid_argument);
}

TEST_CASE("normalize endpoints and degenerate case") {
    Vector v(3);
    v << 0, 5, 10;
    Vector n = normalize(v);
    CHECK(n(0) == -1);
    CHECK(n(1) == 0);
    CHECK(n(2) == 1);

    Vector constant = Vector::Constant(3, 3.0);
    CHECK(normalize(constant).cwiseAbs().maxCoeff() == 0.0);

    Vector random = make_signal(100, 5).samples.array() * 3.7 + 0.2;
    Vector out = normalize(random);
    CHECK(out.minCoeff() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));

    // idempotent on already-normalized non-constant input
    CHECK((normalize(out) - out).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("make_target pulses") {
    PeakSet peaks;
    peaks.indices = {10};
    Vector target = make_target(peaks, 20);
    for (Index j = 0; j < 20; ++j) CHECK(target(j) == ((j >= 8 && j <= 12) ? 1.0 : 0.0));

    peaks.indices = {0};
    target = make_target(peaks, 20);
    for (Index j = 0; j < 20; ++j) CHECK(target(j) == (j <= 2 ? 1.0 : 0.0));

    peaks.indices = {10, 12};
    target = make_target(peaks, 20);
    for (Index j = 0; j < 20; ++j) CHECK(target(j) == ((j >= 8 && j <= 14) ? 1.0 : 0.0));

    CHECK_THROWS_AS(make_target(peaks, 20, 4), std::invalid_argument);
}

TEST_CASE("extract_peaks basics") {
    PeakSet truth;
    truth.indices = {10};
    Vector prediction = make_target(truth, 40) * 0.9;
    PeakSet peaks = extract_peaks(prediction);
    REQUIRE(peaks.indices.size() == 1);
    CHECK(peaks.indices[0] == 10); // flat run -> center

    CHECK(extract_peaks(Vector::Constant(40, 0.2)).indices.empty());

    // two runs 30 samples apart, inside the 48-sample refractory window
    Vector merged = Vector::Zero(200);
    merged(50) = 0.9;
    merged(80) = 0.6;
    PeakSet kept = extract_peaks(merged);
    REQUIRE(kept.indices.size() == 1);
    CHECK(kept.indices[0] == 50);
}

TEST_CASE("extract_peaks output is increasing and respects refractory spacing") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector prediction(4000);
    for (Index j = 0; j < 4000; ++j) prediction(j) = unit(rng);
    PeakSet peaks = extract_peaks(prediction, 0.8);
    for (std::size_t j = 1; j < peaks.indices.size(); ++j)
        CHECK(peaks.indices[j] - peaks.indices[j - 1] >= 48);
}

TEST_CASE("match_peaks small cases") {
    PeakSet pred, truth;
    pred.indices = {100};
    truth.indices = {102};
    MatchCounts counts = match_peaks(pred, truth);
    CHECK(counts.tp == 1);
    CHECK(counts.fp == 0);
    CHECK(counts.fn == 0);

    pred.indices = {100, 105};
    counts = match_peaks(pred, truth);
    CHECK(counts.tp == 1);
    CHECK(counts.fp == 1);
    CHECK(counts.fn == 0);

    pred.indices = {100, 90};
    CHECK_THROWS_AS(match_peaks(pred, truth), std::invalid_argument);
}

TEST_CASE("match_peaks agrees with brute-force matching for well-spaced peaks") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::int64_t> jitter(-35, 35);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PeakSet truth;
    std::int64_t pos = 100;
    for (int j = 0; j < 50; ++j) {
        truth.indices.push_back(pos);
        pos += 70 + static_cast<std::int64_t>(unit(rng) * 200); // spacing > 2*tol = 60
    }
    PeakSet pred;
    for (std::int64_t t : truth.indices)
        if (unit(rng) < 0.9) pred.indices.push_back(t + jitter(rng));
    std::sort(pred.indices.begin(), pred.indices.end());
    pred.indices.erase(std::unique(pred.indices.begin(), pred.indices.end()),
                       pred.indices.end());

    MatchCounts counts = match_peaks(pred, truth);
    CHECK(counts.tp == best_matching(pred.indices, truth.indices, 30));
    CHECK(counts.tp + counts.fn == static_cast<std::int64_t>(truth.indices.size()));
    CHECK(counts.tp + counts.fp == static_cast<std::int64_t>(pred.indices.size()));
}

TEST_CASE("round trip: make_target -> extract_peaks -> match_peaks") {
    PeakSet truth;
    truth.indices = {60, 160, 300, 500, 777};
    Vector prediction = make_target(truth, 1000) * 0.9;
    PeakSet recovered = extract_peaks(prediction);
    MatchCounts counts = match_peaks(recovered, truth);
    CHECK(counts.fp == 0);
    CHECK(counts.fn == 0);
}

TEST_CASE("compute_metrics reproduces published count arithmetic") {
    Metrics q3 = compute_metrics({1023997, 12899, 2098});
    CHECK(q3.sen == doctest::Approx(0.9980).epsilon(1e-4));
    CHECK(q3.ppr == doctest::Approx(0.9876).epsilon(1e-4));
    CHECK(q3.f1 == doctest::Approx(0.9928).epsilon(1e-4));

    Metrics q5 = compute_metrics({1024088, 14263, 2007});
    CHECK(q5.sen == doctest::Approx(0.9980).epsilon(1e-4));
    CHECK(q5.ppr == doctest::Approx(0.9862).epsilon(1e-4));
    CHECK(q5.f1 == doctest::Approx(0.9921).epsilon(1e-4));

    Metrics empty = compute_metrics({0, 0, 5});
    CHECK(empty.sen == 0);
    CHECK(empty.ppr == 0);
    CHECK(empty.f1 == 0);
}
