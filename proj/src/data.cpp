#include "sonn/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sonn/errors.hpp"

namespace sonn {

namespace {

constexpr char kSignalMagic[8] = {'S', 'O', 'N', 'N', '1', 'S', 'I', 'G'};
constexpr char kCheckpointMagic[9] = {'S', 'O', 'N', 'N', '1', 'C', 'K', 'P', 'T'};
constexpr std::uint16_t kSignalVersion = 1;
constexpr std::uint16_t kCheckpointVersion = 1;

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
        path_ = path;
    }
    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_le(bits);
    }
    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("write failed: " + path_);
    }

private:
    template <typename T>
    void put_le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t b = 0; b < sizeof(T); ++b)
            buf[b] = static_cast<unsigned char>((v >> (8 * b)) & 0xff);
        bytes(buf, sizeof(T));
    }
    std::ofstream out_;
    std::string path_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open for reading: " + path);
        in_.seekg(0, std::ios::end);
        size_ = static_cast<std::uint64_t>(in_.tellg());
        in_.seekg(0);
    }
    std::uint64_t offset() const { return offset_; }
    std::uint64_t size() const { return size_; }
    void bytes(void* data, std::size_t n) {
        if (offset_ + n > size_)
            throw FormatError("truncated file: need " + std::to_string(offset_ + n) +
                                  " bytes, have " + std::to_string(size_),
                              offset_);
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() { return get_le<std::uint16_t>(); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    float f32() {
        std::uint32_t bits = get_le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        std::uint64_t bits = get_le<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void expect_magic(const char* magic, std::size_t n, const char* what) {
        std::vector<char> buf(n);
        const std::uint64_t at = offset_;
        bytes(buf.data(), n);
        if (std::memcmp(buf.data(), magic, n) != 0)
            throw FormatError(std::string("bad ") + what + " magic", at);
    }

private:
    template <typename T>
    T get_le() {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T));
        T v = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b)
            v |= static_cast<T>(static_cast<T>(buf[b]) << (8 * b));
        return v;
    }
    std::ifstream in_;
    std::uint64_t offset_ = 0;
    std::uint64_t size_ = 0;
};

void validate(const SyntheticConfig& config) {
    if (config.duration_s <= 0) throw std::invalid_argument("generate: duration must be > 0");
    if (config.sample_rate_hz == 0) throw std::invalid_argument("generate: sample rate must be > 0");
    if (config.mean_hr_bpm <= 0) throw std::invalid_argument("generate: heart rate must be > 0");
    if (config.hr_jitter_frac < 0 || config.hr_jitter_frac >= 1)
        throw std::invalid_argument("generate: jitter fraction must be in [0, 1)");
    if (config.qrs_amp_min <= 0 || config.qrs_amp_max < config.qrs_amp_min)
        throw std::invalid_argument("generate: bad QRS amplitude range");
    if (config.qrs_width_ms <= 0) throw std::invalid_argument("generate: bad QRS width");
    if (config.noise_std < 0 || config.baseline_wander_amp < 0 || config.glitch_rate_per_min < 0)
        throw std::invalid_argument("generate: amplitudes and rates must be >= 0");
    if (config.arrhythmia_frac < 0 || config.arrhythmia_frac > 1)
        throw std::invalid_argument("generate: arrhythmia fraction must be in [0, 1]");
}

} // namespace

GeneratedRecord generate(const SyntheticConfig& config) {
    validate(config);
    const double rate = static_cast<double>(config.sample_rate_hz);
    const Index n = static_cast<Index>(std::llround(config.duration_s * rate));
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> symmetric(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    GeneratedRecord record;
    record.signal.sample_rate_hz = config.sample_rate_hz;
    record.clean = Vector::Zero(n);
    Vector samples = Vector::Zero(n);

    const double mean_rr = 60.0 / config.mean_hr_bpm;
    const double base_width = config.qrs_width_ms / 1000.0 * rate;
    double t = mean_rr / 2.0;
    while (t < config.duration_s) {
        const Index apex = static_cast<Index>(std::llround(t * rate));
        double amp = config.qrs_amp_min + unit(rng) * (config.qrs_amp_max - config.qrs_amp_min);
        const bool arrhythmic = unit(rng) < config.arrhythmia_frac;
        double width = base_width;
        if (arrhythmic) {
            amp *= 0.5;
            width *= 2.0;
        }
        if (apex < n) {
            const double sigma = width / 6.0;
            const Index lo = std::max<Index>(0, apex - static_cast<Index>(width));
            const Index hi = std::min<Index>(n - 1, apex + static_cast<Index>(width));
            for (Index j = lo; j <= hi; ++j) {
                const double d = static_cast<double>(j - apex);
                record.clean(j) += amp * std::exp(-d * d / (2.0 * sigma * sigma));
            }
            record.peaks.indices.push_back(apex);
            record.flags.push_back(arrhythmic ? 1 : 0);
        }
        t += mean_rr * (1.0 + config.hr_jitter_frac * symmetric(rng));
    }
    samples = record.clean;

    const double phase = unit(rng) * 2.0 * M_PI;
    if (config.baseline_wander_amp > 0)
        for (Index j = 0; j < n; ++j)
            samples(j) += config.baseline_wander_amp *
                          std::sin(2.0 * M_PI * config.baseline_wander_freq_hz * j / rate + phase);

    const double expected_glitches = config.glitch_rate_per_min * config.duration_s / 60.0;
    if (expected_glitches > 0) {
        std::poisson_distribution<int> glitch_count(expected_glitches);
        const int count = glitch_count(rng);
        for (int g = 0; g < count; ++g) {
            const Index start = static_cast<Index>(unit(rng) * static_cast<double>(n));
            const Index len =
                static_cast<Index>((0.1 + 0.2 * unit(rng)) * rate); // 100-300 ms step
            const double step = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.3 + 0.7 * unit(rng));
            for (Index j = start; j < std::min(n, start + len); ++j) samples(j) += step;
        }
    }
    if (config.noise_std > 0)
        for (Index j = 0; j < n; ++j) samples(j) += config.noise_std * gauss(rng);

    record.signal.samples = std::move(samples);
    return record;
}

void write_signal(const std::string& path, const Signal1D& signal) {
    ByteWriter out(path);
    out.bytes(kSignalMagic, sizeof(kSignalMagic));
    out.u16(kSignalVersion);
    out.u32(signal.sample_rate_hz);
    out.u64(static_cast<std::uint64_t>(signal.samples.size()));
    for (Index j = 0; j < signal.samples.size(); ++j)
        out.f32(static_cast<float>(signal.samples(j)));
    out.close();
}

Signal1D read_signal(const std::string& path) {
    ByteReader in(path);
    in.expect_magic(kSignalMagic, sizeof(kSignalMagic), "signal");
    const std::uint64_t version_at = in.offset();
    const std::uint16_t version = in.u16();
    if (version != kSignalVersion)
        throw FormatError("unsupported signal version " + std::to_string(version), version_at);
    Signal1D signal;
    signal.sample_rate_hz = in.u32();
    const std::uint64_t count = in.u64();
    const std::uint64_t expected = in.offset() + 4 * count;
    if (expected != in.size())
        throw FormatError("sample count mismatch: expected " + std::to_string(expected) +
                              " bytes, file has " + std::to_string(in.size()),
                          in.offset());
    signal.samples.resize(static_cast<Index>(count));
    for (std::uint64_t j = 0; j < count; ++j)
        signal.samples(static_cast<Index>(j)) = static_cast<double>(in.f32());
    return signal;
}

void write_peaks(const std::string& path, const PeakSet& peaks,
                 const std::vector<std::uint8_t>& flags) {
    if (!flags.empty() && flags.size() != peaks.indices.size())
        throw std::invalid_argument("write_peaks: flag count mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "index,arrhythmia\n";
    for (std::size_t j = 0; j < peaks.indices.size(); ++j)
        out << peaks.indices[j] << ',' << (flags.empty() ? 0 : int(flags[j])) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<PeakSet, std::vector<std::uint8_t>> read_peaks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    std::uint64_t line_no = 1;
    if (!std::getline(in, line) || line != "index,arrhythmia")
        throw FormatError("missing 'index,arrhythmia' header", line_no);
    PeakSet peaks;
    std::vector<std::uint8_t> flags;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::int64_t index;
        int flag;
        char comma;
        std::istringstream row(line);
        if (!(row >> index >> comma >> flag) || comma != ',' || (flag != 0 && flag != 1))
            throw FormatError("bad peak row '" + line + "'", line_no);
        if (!peaks.indices.empty() && index <= peaks.indices.back())
            throw FormatError("peak indices not strictly increasing", line_no);
        peaks.indices.push_back(index);
        flags.push_back(static_cast<std::uint8_t>(flag));
    }
    return {std::move(peaks), std::move(flags)};
}

namespace {

enum ConfigTag : std::uint8_t {
    kTagQOrder = 1,
    kTagKernel = 2,
    kTagEncoder = 3,
    kTagBottleneck = 4,
    kTagDecoder = 5,
    kTagOutput = 6,
    kTagPool = 7,
    kTagSkips = 8,
};

void write_channel_list(ByteWriter& out, std::uint8_t tag, const std::vector<Index>& channels) {
    out.u8(tag);
    out.u16(static_cast<std::uint16_t>(channels.size()));
    for (Index c : channels) out.u32(static_cast<std::uint32_t>(c));
}

void write_config(ByteWriter& out, const NetworkConfig& config) {
    out.u16(8); // field count
    out.u8(kTagQOrder);
    out.u32(static_cast<std::uint32_t>(config.q_order));
    out.u8(kTagKernel);
    out.u32(static_cast<std::uint32_t>(config.kernel_width));
    write_channel_list(out, kTagEncoder, config.encoder_channels);
    out.u8(kTagBottleneck);
    out.u32(static_cast<std::uint32_t>(config.bottleneck_channels));
    write_channel_list(out, kTagDecoder, config.decoder_channels);
    out.u8(kTagOutput);
    out.u32(static_cast<std::uint32_t>(config.output_channels));
    out.u8(kTagPool);
    out.u32(static_cast<std::uint32_t>(config.pool_factor));
    out.u8(kTagSkips);
    out.u8(config.skip_connections ? 1 : 0);
}

NetworkConfig read_config(ByteReader& in) {
    NetworkConfig config;
    const std::uint16_t fields = in.u16();
    auto read_list = [&in]() {
        std::vector<Index> channels(in.u16());
        for (auto& c : channels) c = static_cast<Index>(in.u32());
        return channels;
    };
    for (std::uint16_t f = 0; f < fields; ++f) {
        const std::uint64_t at = in.offset();
        switch (in.u8()) {
        case kTagQOrder: config.q_order = static_cast<Index>(in.u32()); break;
        case kTagKernel: config.kernel_width = static_cast<Index>(in.u32()); break;
        case kTagEncoder: config.encoder_channels = read_list(); break;
        case kTagBottleneck: config.bottleneck_channels = static_cast<Index>(in.u32()); break;
        case kTagDecoder: config.decoder_channels = read_list(); break;
        case kTagOutput: config.output_channels = static_cast<Index>(in.u32()); break;
        case kTagPool: config.pool_factor = static_cast<Index>(in.u32()); break;
        case kTagSkips: config.skip_connections = in.u8() != 0; break;
        default: throw FormatError("unknown config field tag", at);
        }
    }
    return config;
}

void write_f32_matrix_kirq(ByteWriter& out, const GenerativeLayerParams& layer) {
    for (Index k = 0; k < layer.out_channels; ++k)
        for (Index i = 0; i < layer.in_channels; ++i)
            for (Index r = 0; r < layer.kernel; ++r)
                for (Index q = 0; q < layer.order; ++q)
                    out.f32(static_cast<float>(layer.weight(k, i, r, q)));
}

} // namespace

void save_checkpoint(const std::string& path, const Model& model, std::uint32_t sample_rate_hz,
                     const OptimizerState* optimizer) {
    ByteWriter out(path);
    out.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    out.u16(kCheckpointVersion);
    out.u32(sample_rate_hz);
    write_config(out, model.config);
    out.u16(static_cast<std::uint16_t>(model.layers.size()));
    for (const auto& layer : model.layers) {
        out.u32(static_cast<std::uint32_t>(layer.in_channels));
        out.u32(static_cast<std::uint32_t>(layer.out_channels));
        out.u32(static_cast<std::uint32_t>(layer.kernel));
        out.u32(static_cast<std::uint32_t>(layer.order));
        write_f32_matrix_kirq(out, layer);
        for (Index k = 0; k < layer.out_channels; ++k)
            out.f32(static_cast<float>(layer.biases(k)));
    }
    out.u8(optimizer ? 1 : 0);
    if (optimizer) {
        out.u8(optimizer->kind == OptimizerKind::Adam ? 1 : 0);
        out.f64(optimizer->lr);
        out.f64(optimizer->beta1);
        out.f64(optimizer->beta2);
        out.f64(optimizer->eps_hat);
        out.u64(optimizer->step_count);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            for (const Matrix* moments : {&optimizer->m_weights[l], &optimizer->v_weights[l]})
                for (Index col = 0; col < moments->cols(); ++col)
                    for (Index row = 0; row < moments->rows(); ++row)
                        out.f32(static_cast<float>((*moments)(row, col)));
            for (const Vector* moments : {&optimizer->m_biases[l], &optimizer->v_biases[l]})
                for (Index k = 0; k < moments->size(); ++k)
                    out.f32(static_cast<float>((*moments)(k)));
        }
    }
    out.close();
}

Checkpoint load_checkpoint(const std::string& path) {
    ByteReader in(path);
    in.expect_magic(kCheckpointMagic, sizeof(kCheckpointMagic), "checkpoint");
    const std::uint64_t version_at = in.offset();
    const std::uint16_t version = in.u16();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version),
                          version_at);
    Checkpoint checkpoint;
    checkpoint.sample_rate_hz = in.u32();
    const NetworkConfig config = read_config(in);

    // Expected shapes come from the config; every stored header must agree.
    Model expected = build_model(config, 0);
    const std::uint16_t layer_count = in.u16();
    if (layer_count != expected.layers.size())
        throw FormatError("layer count " + std::to_string(layer_count) + " does not match config (" +
                              std::to_string(expected.layers.size()) + " layers)",
                          in.offset());
    for (std::size_t l = 0; l < expected.layers.size(); ++l) {
        auto& layer = expected.layers[l];
        const std::uint64_t at = in.offset();
        const Index in_ch = static_cast<Index>(in.u32());
        const Index out_ch = static_cast<Index>(in.u32());
        const Index kernel = static_cast<Index>(in.u32());
        const Index order = static_cast<Index>(in.u32());
        if (in_ch != layer.in_channels || out_ch != layer.out_channels ||
            kernel != layer.kernel || order != layer.order)
            throw FormatError("layer " + std::to_string(l) + " shape does not match config", at);
        for (Index k = 0; k < out_ch; ++k)
            for (Index i = 0; i < in_ch; ++i)
                for (Index r = 0; r < kernel; ++r)
                    for (Index q = 0; q < order; ++q)
                        layer.weight(k, i, r, q) = static_cast<double>(in.f32());
        for (Index k = 0; k < out_ch; ++k) layer.biases(k) = static_cast<double>(in.f32());
    }
    checkpoint.model = std::move(expected);

    if (in.u8() != 0) {
        OptimizerState state = make_optimizer(checkpoint.model, OptimizerKind::Adam, 1e-3);
        state.kind = in.u8() == 1 ? OptimizerKind::Adam : OptimizerKind::Sgd;
        state.lr = in.f64();
        state.beta1 = in.f64();
        state.beta2 = in.f64();
        state.eps_hat = in.f64();
        state.step_count = in.u64();
        for (std::size_t l = 0; l < checkpoint.model.layers.size(); ++l) {
            for (Matrix* moments : {&state.m_weights[l], &state.v_weights[l]})
                for (Index col = 0; col < moments->cols(); ++col)
                    for (Index row = 0; row < moments->rows(); ++row)
                        (*moments)(row, col) = static_cast<double>(in.f32());
            for (Vector* moments : {&state.m_biases[l], &state.v_biases[l]})
                for (Index k = 0; k < moments->size(); ++k)
                    (*moments)(k) = static_cast<double>(in.f32());
        }
        checkpoint.optimizer = std::move(state);
    }
    if (in.offset() != in.size())
        throw FormatError("trailing bytes after checkpoint payload", in.offset());
    return checkpoint;
}

GeneratedRecord import_csv_record(const std::string& signal_csv, const std::string& peaks_csv,
                                  std::uint32_t sample_rate_hz) {
    std::ifstream in(signal_csv);
    if (!in) throw std::runtime_error("cannot open for reading: " + signal_csv);
    std::vector<double> values;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            std::size_t consumed = 0;
            const double v = std::stod(line, &consumed);
            if (consumed != line.size()) throw std::invalid_argument(line);
            values.push_back(v);
        } catch (const std::exception&) {
            throw FormatError("bad signal sample '" + line + "'", line_no);
        }
    }
    if (values.empty()) throw std::invalid_argument("import_csv_record: empty signal");

    GeneratedRecord record;
    record.signal.sample_rate_hz = sample_rate_hz;
    record.signal.samples =
        Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    auto [peaks, flags] = read_peaks(peaks_csv);
    for (std::int64_t p : peaks.indices)
        if (p < 0 || p >= static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("import_csv_record: peak index " + std::to_string(p) +
                                        " outside signal of length " +
                                        std::to_string(values.size()));
    record.peaks = std::move(peaks);
    record.flags = std::move(flags);
    return record;
}

} // namespace sonn
