#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sonn/data.hpp"
#include "sonn/errors.hpp"

using namespace sonn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("sonn_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("degenerate generator config gives exactly periodic peaks") {
    SyntheticConfig config;
    config.duration_s = 10;
    config.mean_hr_bpm = 60;
    config.hr_jitter_frac = 0;
    config.noise_std = 0;
    config.baseline_wander_amp = 0;
    config.glitch_rate_per_min = 0;
    config.arrhythmia_frac = 0;
    GeneratedRecord record = generate(config);
    REQUIRE(record.peaks.indices.size() == 10);
    for (std::size_t j = 0; j < 10; ++j)
        CHECK(record.peaks.indices[j] == 200 + 400 * static_cast<std::int64_t>(j));
}

TEST_CASE("generator is deterministic per seed") {
    SyntheticConfig config;
    config.duration_s = 20;
    config.seed = 42;
    GeneratedRecord a = generate(config);
    GeneratedRecord b = generate(config);
    CHECK((a.signal.samples - b.signal.samples).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.peaks.indices == b.peaks.indices);
    CHECK(a.flags == b.flags);
}

TEST_CASE("generated peaks sit on the clean QRS apexes") {
    SyntheticConfig config;
    config.duration_s = 60;
    config.seed = 42;
    GeneratedRecord record = generate(config);

    const double mean_beats = config.mean_hr_bpm * config.duration_s / 60.0;
    const double count = static_cast<double>(record.peaks.indices.size());
    CHECK(count >= mean_beats * (1 - config.hr_jitter_frac) - 1);
    CHECK(count <= mean_beats * (1 + config.hr_jitter_frac) + 1);

    const Index width = static_cast<Index>(config.qrs_width_ms / 1000.0 *
                                           static_cast<double>(config.sample_rate_hz));
    for (std::int64_t peak : record.peaks.indices) {
        const Index lo = std::max<Index>(0, peak - width);
        const Index hi = std::min<Index>(record.clean.size() - 1, peak + width);
        Index argmax = lo;
        for (Index j = lo; j <= hi; ++j)
            if (record.clean(j) > record.clean(argmax)) argmax = j;
        CHECK(std::llabs(argmax - peak) <= 1);
    }
}

TEST_CASE("generator is self-consistent with the peak extractor") {
    SyntheticConfig config;
    config.duration_s = 60;
    config.seed = 7;
    GeneratedRecord record = generate(config);
    const double top = record.clean.maxCoeff();
    // Threshold at half the weakest beat's amplitude, on the clean component.
    const double weakest = 0.5 * config.qrs_amp_min * 0.5; // arrhythmic beats halve amplitude
    Vector pseudo = (record.clean.array() / (2.0 * top)).min(0.999).matrix();
    PeakSet found = extract_peaks(pseudo, weakest / (2.0 * top), 120.0, config.sample_rate_hz);
    MatchCounts counts = match_peaks(found, record.peaks, 75.0, config.sample_rate_hz);
    CHECK(counts.fn == 0);
    CHECK(counts.fp == 0);
}

TEST_CASE("signal file round trip and byte layout") {
    TempDir dir;
    Signal1D signal;
    signal.sample_rate_hz = 400;
    signal.samples.resize(3);
    signal.samples << 0.25, -1.5, 3.75;
    write_signal(dir.file("a.sig"), signal);
    CHECK(fs::file_size(dir.file("a.sig")) == 34);

    Signal1D loaded = read_signal(dir.file("a.sig"));
    CHECK(loaded.sample_rate_hz == 400);
    REQUIRE(loaded.samples.size() == 3);
    for (Index j = 0; j < 3; ++j)
        CHECK(loaded.samples(j) == static_cast<double>(static_cast<float>(signal.samples(j))));
}

TEST_CASE("truncated signal file is rejected with a length message") {
    TempDir dir;
    Signal1D signal;
    signal.samples = Vector::LinSpaced(10, 0, 1);
    write_signal(dir.file("t.sig"), signal);
    auto bytes = slurp(dir.file("t.sig"));
    bytes.resize(bytes.size() - 5);
    spit(dir.file("t.sig"), bytes);
    CHECK_THROWS_WITH_AS(read_signal(dir.file("t.sig")),
                         doctest::Contains("expected"), FormatError);
}

TEST_CASE("signal header corruption is rejected") {
    TempDir dir;
    Signal1D signal;
    signal.samples = Vector::LinSpaced(5, -1, 1);
    write_signal(dir.file("c.sig"), signal);
    const auto original = slurp(dir.file("c.sig"));
    // magic (8 bytes), version (2), sample count (8 at offset 14)
    std::vector<std::size_t> header_bytes = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9,
                                             14, 15, 16, 17, 18, 19, 20, 21};
    for (std::size_t at : header_bytes) {
        auto bytes = original;
        bytes[at] = static_cast<char>(bytes[at] ^ 0x5a);
        spit(dir.file("c.sig"), bytes);
        CHECK_THROWS_AS(read_signal(dir.file("c.sig")), FormatError);
    }
}

TEST_CASE("peaks CSV round trip") {
    TempDir dir;
    PeakSet peaks;
    peaks.indices = {100, 500};
    write_peaks(dir.file("p.csv"), peaks, {0, 1});
    auto [loaded, flags] = read_peaks(dir.file("p.csv"));
    CHECK(loaded.indices == peaks.indices);
    CHECK(flags == std::vector<std::uint8_t>({0, 1}));

    write_peaks(dir.file("e.csv"), PeakSet{}, {});
    auto [empty, empty_flags] = read_peaks(dir.file("e.csv"));
    CHECK(empty.indices.empty());

    PeakSet big;
    std::vector<std::uint8_t> big_flags;
    for (int j = 0; j < 1000; ++j) {
        big.indices.push_back(j * 37 + (j % 5));
        big_flags.push_back(static_cast<std::uint8_t>(j % 2));
    }
    write_peaks(dir.file("b.csv"), big, big_flags);
    auto [big_loaded, big_loaded_flags] = read_peaks(dir.file("b.csv"));
    CHECK(big_loaded.indices == big.indices);
    CHECK(big_loaded_flags == big_flags);
}

TEST_CASE("peaks CSV rejects bad rows with line numbers") {
    TempDir dir;
    {
        std::ofstream out(dir.file("bad.csv"));
        out << "index,arrhythmia\n100,0\n90,0\n";
    }
    CHECK_THROWS_AS(read_peaks(dir.file("bad.csv")), FormatError);
    {
        std::ofstream out(dir.file("nan.csv"));
        out << "index,arrhythmia\nfoo,0\n";
    }
    CHECK_THROWS_AS(read_peaks(dir.file("nan.csv")), FormatError);
}

TEST_CASE("checkpoint round trip preserves the forward pass") {
    TempDir dir;
    NetworkConfig config;
    config.encoder_channels = {2, 3};
    config.bottleneck_channels = 4;
    config.decoder_channels = {3, 2};
    config.kernel_width = 3;
    Model model = build_model(config, 5);
    save_checkpoint(dir.file("m.ckpt"), model, 400);

    Checkpoint loaded = load_checkpoint(dir.file("m.ckpt"));
    CHECK(loaded.sample_rate_hz == 400);
    CHECK_FALSE(loaded.optimizer.has_value());

    Vector segment = Vector::LinSpaced(64, -0.9, 0.9);
    auto [a, c1] = model_forward(model, segment);
    auto [b, c2] = model_forward(loaded.model, segment);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("checkpoint size follows the parameter count") {
    TempDir dir;
    NetworkConfig config;
    config.encoder_channels = {2, 3};
    config.bottleneck_channels = 4;
    config.decoder_channels = {3, 2};
    config.kernel_width = 3;
    Model model = build_model(config, 5);
    save_checkpoint(dir.file("m.ckpt"), model, 400);

    // magic 9 + version 2 + rate 4 + config (2 + 5*(1+4) + 2*(1+2+2*4) + 1+1)
    // + layer count 2 + per-layer (16 header + 4*params)
    const std::uint64_t config_bytes = 2 + 5 * 5 + 2 * 11 + 2;
    std::uint64_t expected = 9 + 2 + 4 + config_bytes + 2 + 1; // +1 optimizer flag
    for (const auto& layer : model.layers) expected += 16 + 4 * count_params(layer);
    CHECK(fs::file_size(dir.file("m.ckpt")) == expected);
}

TEST_CASE("checkpoint with optimizer state round trips") {
    TempDir dir;
    NetworkConfig config;
    config.encoder_channels = {2, 2};
    config.bottleneck_channels = 3;
    config.decoder_channels = {2, 2};
    config.kernel_width = 3;
    Model model = build_model(config, 1);
    OptimizerState state = make_optimizer(model, OptimizerKind::Adam, 0.001);
    state.step_count = 17;
    state.m_weights[0].setConstant(0.25);
    save_checkpoint(dir.file("o.ckpt"), model, 250, &state);

    Checkpoint loaded = load_checkpoint(dir.file("o.ckpt"));
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->step_count == 17);
    CHECK(loaded.optimizer->kind == OptimizerKind::Adam);
    CHECK(loaded.optimizer->m_weights[0](0, 0) == 0.25);
}

TEST_CASE("checkpoint header corruption is rejected") {
    TempDir dir;
    NetworkConfig config;
    config.encoder_channels = {2, 2};
    config.bottleneck_channels = 3;
    config.decoder_channels = {2, 2};
    config.kernel_width = 3;
    Model model = build_model(config, 2);
    save_checkpoint(dir.file("h.ckpt"), model, 400);
    const auto original = slurp(dir.file("h.ckpt"));

    // magic + version + first layer shape header (after config block)
    const std::size_t config_bytes = 2 + 5 * 5 + 2 * 11 + 2;
    const std::size_t layer_header_at = 9 + 2 + 4 + config_bytes + 2;
    std::vector<std::size_t> targets;
    for (std::size_t j = 0; j < 11; ++j) targets.push_back(j);
    for (std::size_t j = 0; j < 16; ++j) targets.push_back(layer_header_at + j);
    for (std::size_t at : targets) {
        auto bytes = original;
        bytes[at] = static_cast<char>(bytes[at] ^ 0x3c);
        spit(dir.file("h.ckpt"), bytes);
        CHECK_THROWS_AS(load_checkpoint(dir.file("h.ckpt")), FormatError);
    }
}

TEST_CASE("import_csv_record bridges external conversions") {
    TempDir dir;
    {
        std::ofstream out(dir.file("sig.csv"));
        for (int j = 0; j < 100; ++j) out << 0.01 * j << "\n";
    }
    write_peaks(dir.file("peaks.csv"), PeakSet{}, {});
    GeneratedRecord empty = import_csv_record(dir.file("sig.csv"), dir.file("peaks.csv"), 400);
    CHECK(empty.signal.samples.size() == 100);
    CHECK(empty.peaks.indices.empty());

    PeakSet out_of_range;
    out_of_range.indices = {100};
    write_peaks(dir.file("bad.csv"), out_of_range, {0});
    CHECK_THROWS_AS(import_csv_record(dir.file("sig.csv"), dir.file("bad.csv"), 400),
                    std::invalid_argument);

    // round trip the signal through the binary format
    GeneratedRecord record = empty;
    write_signal(dir.file("rt.sig"), record.signal);
    Signal1D back = read_signal(dir.file("rt.sig"));
    for (Index j = 0; j < back.samples.size(); ++j)
        CHECK(back.samples(j) ==
              static_cast<double>(static_cast<float>(record.signal.samples(j))));
}
