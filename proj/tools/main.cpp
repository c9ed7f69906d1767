#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "sonn/conv1d.hpp"
#include "sonn/data.hpp"
#include "sonn/errors.hpp"
#include "sonn/network.hpp"
#include "sonn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sonn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;

std::string record_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rec%03d", index);
    return buf;
}

struct DataRecord {
    std::string name;
    Signal1D signal;
    PeakSet peaks;
};

std::vector<DataRecord> load_records(const std::string& dir) {
    std::vector<DataRecord> records;
    std::vector<fs::path> sig_files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".sig") sig_files.push_back(entry.path());
    std::sort(sig_files.begin(), sig_files.end());
    for (const auto& sig : sig_files) {
        DataRecord record;
        record.name = sig.stem().string();
        record.signal = read_signal(sig.string());
        fs::path peaks = sig;
        peaks.replace_extension(".peaks.csv");
        if (fs::exists(peaks)) record.peaks = read_peaks(peaks.string()).first;
        records.push_back(std::move(record));
    }
    if (records.empty())
        throw std::invalid_argument("no .sig records found in " + dir);
    return records;
}

std::vector<Sample> records_to_samples(const std::vector<DataRecord>& records, Index seg_len) {
    std::vector<Sample> samples;
    for (const auto& record : records)
        for (const auto& window : segment(record.signal, seg_len)) {
            PeakSet local;
            for (std::int64_t p : record.peaks.indices)
                if (p >= window.offset && p < window.offset + seg_len)
                    local.indices.push_back(p - window.offset);
            samples.push_back({normalize(window.samples), make_target(local, seg_len)});
        }
    return samples;
}

struct DetectedPeak {
    std::int64_t index;
    double value;
};

// Detection over a whole signal: per-segment extraction, offset shift,
// then a refractory merge pass across the segment junctions.
PeakSet detect_signal(const Model& model, const Signal1D& signal, Index seg_len,
                      double threshold, double refractory_ms) {
    std::vector<DetectedPeak> all;
    for (const auto& window : segment(signal, seg_len)) {
        auto [prediction, caches] = model_forward(model, normalize(window.samples));
        PeakSet local =
            extract_peaks(prediction, threshold, refractory_ms, signal.sample_rate_hz);
        for (std::int64_t p : local.indices) {
            if (p >= window.valid_len) continue; // padding of a partial tail
            all.push_back({p + window.offset, prediction(p)});
        }
    }
    const std::int64_t refractory =
        std::llround(refractory_ms * signal.sample_rate_hz / 1000.0);
    PeakSet merged;
    double last_value = 0.0;
    for (const DetectedPeak& peak : all) {
        if (!merged.indices.empty() && peak.index - merged.indices.back() < refractory) {
            if (peak.value > last_value) {
                merged.indices.back() = peak.index;
                last_value = peak.value;
            }
        } else {
            merged.indices.push_back(peak.index);
            last_value = peak.value;
        }
    }
    return merged;
}

struct EvalResult {
    MatchCounts counts;
    Metrics metrics;
};

void print_eval(const EvalResult& result, bool tsv) {
    const auto& [counts, metrics] = result;
    if (tsv) {
        std::printf("tp\tfp\tfn\tsen\tppr\tf1\n");
        std::printf("%lld\t%lld\t%lld\t%.6f\t%.6f\t%.6f\n",
                    static_cast<long long>(counts.tp), static_cast<long long>(counts.fp),
                    static_cast<long long>(counts.fn), metrics.sen, metrics.ppr, metrics.f1);
    } else {
        std::printf("TP %lld  FP %lld  FN %lld\n", static_cast<long long>(counts.tp),
                    static_cast<long long>(counts.fp), static_cast<long long>(counts.fn));
        std::printf("Sen %.2f  Ppr %.2f  F1 %.2f\n", 100.0 * metrics.sen, 100.0 * metrics.ppr,
                    100.0 * metrics.f1);
    }
}

Vector seeded_segment(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vector out(n);
    for (Index j = 0; j < n; ++j) out(j) = dist(rng);
    return out;
}

// --- subcommand option blocks -------------------------------------------

struct GenerateOptions {
    std::string out_dir;
    int count = 1;
    SyntheticConfig config;
};

int run_generate(const GenerateOptions& options) {
    fs::create_directories(options.out_dir);
    std::printf("record\tduration_s\tpeaks\n");
    for (int r = 0; r < options.count; ++r) {
        SyntheticConfig config = options.config;
        config.seed = options.config.seed + static_cast<std::uint64_t>(r);
        GeneratedRecord record = generate(config);
        const std::string base = (fs::path(options.out_dir) / record_name(r)).string();
        write_signal(base + ".sig", record.signal);
        write_peaks(base + ".peaks.csv", record.peaks, record.flags);
        std::printf("%s\t%g\t%zu\n", record_name(r).c_str(), config.duration_s,
                    record.peaks.indices.size());
    }
    return kExitOk;
}

struct TrainOptions2 {
    std::string data_dir;
    std::string checkpoint = "model.ckpt";
    Index q = 3;
    Index epochs = 50;
    double lr = 1e-3;
    Index batch = 4;
    std::uint64_t seed = 0;
    int restarts = 1;
    double val_frac = 0.2;
    Index seg_len = 8000;
};

struct TrainRun {
    Model model;
    double val_f1 = 0.0;
    std::vector<std::string> trace_rows;
};

TrainRun train_once(const TrainOptions2& options, const std::vector<Sample>& train_set,
                    const std::vector<DataRecord>& val_records, std::uint64_t seed) {
    NetworkConfig config;
    config.q_order = options.q;
    TrainRun run{build_model(config, seed), 0.0, {}};
    Model& model = run.model;
    OptimizerState state = make_optimizer(model, OptimizerKind::Adam, options.lr);

    auto evaluate = [&]() -> std::pair<double, double> {
        if (val_records.empty()) return {0.0, 0.0};
        double loss = 0.0;
        Index loss_terms = 0;
        MatchCounts counts;
        for (const auto& record : val_records) {
            for (const auto& window : segment(record.signal, options.seg_len)) {
                auto [prediction, caches] = model_forward(model, normalize(window.samples));
                PeakSet local;
                for (std::int64_t p : record.peaks.indices)
                    if (p >= window.offset && p < window.offset + options.seg_len)
                        local.indices.push_back(p - window.offset);
                loss += bce_loss(prediction, make_target(local, options.seg_len)).loss;
                ++loss_terms;
            }
            PeakSet found = detect_signal(model, record.signal, options.seg_len, 0.5, 120.0);
            MatchCounts m = match_peaks(found, record.peaks, 75.0, record.signal.sample_rate_hz);
            counts.tp += m.tp;
            counts.fp += m.fp;
            counts.fn += m.fn;
        }
        return {loss / std::max<Index>(1, loss_terms), compute_metrics(counts).f1};
    };

    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
        auto trace = train(model, state, train_set,
                           {1, options.batch, seed * 1000003 + static_cast<std::uint64_t>(epoch)});
        auto [val_loss, val_f1] = evaluate();
        run.val_f1 = val_f1;
        char row[128];
        std::snprintf(row, sizeof(row), "%lld\t%.6f\t%.6f\t%.6f",
                      static_cast<long long>(epoch + 1), trace[0], val_loss, val_f1);
        run.trace_rows.push_back(row);
    }
    return run;
}

int run_train(const TrainOptions2& options) {
    auto records = load_records(options.data_dir);
    const std::size_t val_count = std::min(
        records.size() - 1,
        static_cast<std::size_t>(std::ceil(options.val_frac * static_cast<double>(records.size()))));
    std::vector<DataRecord> train_records(records.begin(),
                                          records.end() - static_cast<std::ptrdiff_t>(val_count));
    std::vector<DataRecord> val_records(records.end() - static_cast<std::ptrdiff_t>(val_count),
                                        records.end());
    auto train_set = records_to_samples(train_records, options.seg_len);

    TrainRun best;
    bool have_best = false;
    for (int restart = 0; restart < options.restarts; ++restart) {
        TrainRun run = train_once(options, train_set, val_records,
                                  options.seed + static_cast<std::uint64_t>(restart));
        if (!have_best || run.val_f1 > best.val_f1) {
            best = std::move(run);
            have_best = true;
        }
    }
    save_checkpoint(options.checkpoint, best.model, records[0].signal.sample_rate_hz);
    std::printf("epoch\ttrain_loss\tval_loss\tval_f1\n");
    for (const auto& row : best.trace_rows) std::printf("%s\n", row.c_str());
    return kExitOk;
}

struct DetectOptions {
    std::string checkpoint;
    std::string signal_path;
    std::string out_path = "peaks.csv";
    double threshold = 0.5;
    double refractory_ms = 120.0;
    Index seg_len = 8000;
};

int run_detect(const DetectOptions& options) {
    Checkpoint checkpoint = load_checkpoint(options.checkpoint);
    Signal1D signal = read_signal(options.signal_path);
    if (signal.sample_rate_hz != checkpoint.sample_rate_hz)
        throw std::invalid_argument(
            "sample-rate mismatch: checkpoint " + std::to_string(checkpoint.sample_rate_hz) +
            " Hz vs signal " + std::to_string(signal.sample_rate_hz) + " Hz");
    PeakSet peaks = detect_signal(checkpoint.model, signal, options.seg_len, options.threshold,
                                  options.refractory_ms);
    write_peaks(options.out_path, peaks, {});
    std::printf("detected\t%zu\n", peaks.indices.size());
    return kExitOk;
}

struct EvalOptions {
    std::string pred_path;
    std::string truth_path;
    double tol_ms = 75.0;
    std::uint32_t sample_rate_hz = 400;
    bool tsv = false;
    std::vector<std::int64_t> counts; // tp,fp,fn bypass
};

int run_eval(const EvalOptions& options) {
    EvalResult result;
    if (!options.counts.empty()) {
        result.counts = {options.counts[0], options.counts[1], options.counts[2]};
    } else {
        PeakSet pred = read_peaks(options.pred_path).first;
        PeakSet truth = read_peaks(options.truth_path).first;
        result.counts = match_peaks(pred, truth, options.tol_ms, options.sample_rate_hz);
    }
    result.metrics = compute_metrics(result.counts);
    print_eval(result, options.tsv);
    return kExitOk;
}

struct CountOptions {
    NetworkConfig config;
    Index seg_len = 8000;
};

int run_count(const CountOptions& options) {
    Model model = build_model(options.config, 0);
    auto report = model_complexity(model, options.seg_len);
    std::printf("layer\tin\tout\tK\tQ\tout_len\tpars\tmacs\n");
    Index pars = 0;
    std::uint64_t macs = 0;
    for (const auto& layer : report) {
        std::printf("%s\t%lld\t%lld\t%lld\t%lld\t%lld\t%lld\t%llu\n", layer.name.c_str(),
                    static_cast<long long>(layer.in_channels),
                    static_cast<long long>(layer.out_channels),
                    static_cast<long long>(layer.kernel), static_cast<long long>(layer.order),
                    static_cast<long long>(layer.output_len),
                    static_cast<long long>(layer.params),
                    static_cast<unsigned long long>(layer.macs));
        pars += layer.params;
        macs += layer.macs;
    }
    std::printf("total\t\t\t\t\t\t%lld\t%llu\n", static_cast<long long>(pars),
                static_cast<unsigned long long>(macs));
    std::printf("PARs (K): %.3f\nMACs (M): %.3f\n", static_cast<double>(pars) / 1e3,
                static_cast<double>(macs) / 1e6);
    return kExitOk;
}

struct GradcheckOptions {
    Index q = 3;
    std::uint64_t seed = 0;
    Index seg_len = 64;
    double h = 1e-5;
    double tol = 1e-4;
    std::string fault_inject; // "weight-grad" or empty
};

int run_gradcheck(const GradcheckOptions& options) {
    NetworkConfig config;
    config.q_order = options.q;
    Model model = build_model(config, options.seed);
    Vector segment = seeded_segment(options.seg_len, options.seed + 1);
    PeakSet peaks;
    for (Index p = options.seg_len / 4; p < options.seg_len; p += options.seg_len / 2)
        peaks.indices.push_back(p);
    Vector target = make_target(peaks, options.seg_len);
    GradcheckReport report = gradcheck(model, segment, target, options.h, options.tol,
                                       options.fault_inject == "weight-grad");
    std::printf("parameters\t%lld\nmax_rel_err\t%.3e\nresult\t%s%s\n",
                static_cast<long long>(report.parameters_checked), report.max_rel_err,
                report.pass ? "pass" : "fail", options.q == 1 ? " (conv-equivalent)" : "");
    return report.pass ? kExitOk : kExitCheckFailed;
}

struct BenchOptions {
    Index q = 3;
    Index kernel = 5;
    Index seg_len = 8000;
    Index channels = 4;
    int iters = 20;
};

int run_bench(const BenchOptions& options) {
    GenerativeLayerParams params =
        init_params(options.channels, options.channels, options.kernel, options.q, 0);
    std::vector<Vector> inputs;
    for (Index c = 0; c < options.channels; ++c)
        inputs.push_back(seeded_segment(options.seg_len, static_cast<std::uint64_t>(c)));

    auto naive = forward_naive(params, inputs);
    auto qconv = forward_qconv(params, inputs);
    auto [gemm, cache] = forward_vectorized(params, inputs);
    double worst = 0;
    for (Index k = 0; k < options.channels; ++k)
        worst = std::max({worst, (naive[static_cast<std::size_t>(k)] -
                                  qconv[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff(),
                          (naive[static_cast<std::size_t>(k)] -
                           gemm[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff()});
    if (worst > 1e-9) {
        std::fprintf(stderr, "formulations disagree by %.3e, refusing to time\n", worst);
        return kExitCheckFailed;
    }

    auto median_ms = [&](auto&& fn) {
        std::vector<double> times;
        for (int it = 0; it < options.iters; ++it) {
            const auto start = std::chrono::steady_clock::now();
            fn();
            times.push_back(std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - start)
                                .count());
        }
        std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
        return times[times.size() / 2];
    };
    const double t_naive = median_ms([&] { forward_naive(params, inputs); });
    const double t_qconv = median_ms([&] { forward_qconv(params, inputs); });
    const double t_gemm = median_ms([&] { forward_vectorized(params, inputs); });
    std::printf("implementation\tq\tk\tseg_len\tchannels\tmedian_ms\n");
    std::printf("naive\t%lld\t%lld\t%lld\t%lld\t%.4f\n", static_cast<long long>(options.q),
                static_cast<long long>(options.kernel), static_cast<long long>(options.seg_len),
                static_cast<long long>(options.channels), t_naive);
    std::printf("qconv\t%lld\t%lld\t%lld\t%lld\t%.4f\n", static_cast<long long>(options.q),
                static_cast<long long>(options.kernel), static_cast<long long>(options.seg_len),
                static_cast<long long>(options.channels), t_qconv);
    std::printf("gemm\t%lld\t%lld\t%lld\t%lld\t%.4f\n", static_cast<long long>(options.q),
                static_cast<long long>(options.kernel), static_cast<long long>(options.seg_len),
                static_cast<long long>(options.channels), t_gemm);
    return kExitOk;
}

void add_network_flags(CLI::App* cmd, NetworkConfig& config) {
    cmd->add_option("--q", config.q_order, "Taylor order Q");
    cmd->add_option("--kernel", config.kernel_width, "kernel width (odd)");
    cmd->add_option("--encoder-channels", config.encoder_channels, "encoder channel counts");
    cmd->add_option("--bottleneck-channels", config.bottleneck_channels, "bottleneck channels");
    cmd->add_option("--decoder-channels", config.decoder_channels, "decoder channel counts");
    cmd->add_option("--pool-factor", config.pool_factor, "pooling factor");
    cmd->add_flag("--no-skips{false}", config.skip_connections, "disable skip connections");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"1D Self-ONN R-peak detection toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value config file ('#' comments); flags override");

    GenerateOptions gen;
    auto* cmd_generate = app.add_subcommand("generate", "write synthetic ECG records");
    cmd_generate->add_option("--out", gen.out_dir, "output directory")->required();
    cmd_generate->add_option("--count", gen.count, "number of records")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--duration-s", gen.config.duration_s, "record length in seconds")
        ->check(CLI::PositiveNumber);
    cmd_generate->add_option("--seed", gen.config.seed, "base RNG seed");
    cmd_generate->add_option("--sample-rate", gen.config.sample_rate_hz, "sample rate in Hz");
    cmd_generate->add_option("--mean-hr", gen.config.mean_hr_bpm, "mean heart rate, bpm");
    cmd_generate->add_option("--hr-jitter", gen.config.hr_jitter_frac, "RR jitter fraction");
    cmd_generate->add_option("--qrs-width-ms", gen.config.qrs_width_ms, "QRS width, ms");
    cmd_generate->add_option("--qrs-amp-min", gen.config.qrs_amp_min, "min QRS amplitude");
    cmd_generate->add_option("--qrs-amp-max", gen.config.qrs_amp_max, "max QRS amplitude");
    cmd_generate->add_option("--wander-amp", gen.config.baseline_wander_amp,
                             "baseline wander amplitude");
    cmd_generate->add_option("--wander-freq", gen.config.baseline_wander_freq_hz,
                             "baseline wander frequency, Hz");
    cmd_generate->add_option("--noise-std", gen.config.noise_std, "white noise std");
    cmd_generate->add_option("--glitch-rate", gen.config.glitch_rate_per_min,
                             "step glitches per minute");
    cmd_generate->add_option("--arrhythmia-frac", gen.config.arrhythmia_frac,
                             "fraction of V-like beats");

    TrainOptions2 tr;
    auto* cmd_train = app.add_subcommand("train", "train a detector on a record directory");
    cmd_train->add_option("--data", tr.data_dir, "record directory")->required();
    cmd_train->add_option("--checkpoint", tr.checkpoint, "checkpoint output path");
    cmd_train->add_option("--q", tr.q, "Taylor order Q");
    cmd_train->add_option("--epochs", tr.epochs, "training epochs");
    cmd_train->add_option("--lr", tr.lr, "learning rate");
    cmd_train->add_option("--batch", tr.batch, "segments per optimizer step");
    cmd_train->add_option("--seed", tr.seed, "RNG seed");
    cmd_train->add_option("--restarts", tr.restarts, "independent runs, keep best val F1")
        ->check(CLI::PositiveNumber);
    cmd_train->add_option("--val-frac", tr.val_frac, "fraction of records held out")
        ->check(CLI::Range(0.0, 0.9));
    cmd_train->add_option("--seg-len", tr.seg_len, "segment length in samples");

    DetectOptions det;
    auto* cmd_detect = app.add_subcommand("detect", "run a checkpoint over a signal");
    cmd_detect->add_option("--checkpoint", det.checkpoint, "model checkpoint")->required();
    cmd_detect->add_option("--signal", det.signal_path, "input .sig file")->required();
    cmd_detect->add_option("--out", det.out_path, "output peaks CSV");
    cmd_detect->add_option("--threshold", det.threshold, "detection threshold");
    cmd_detect->add_option("--refractory-ms", det.refractory_ms, "refractory period, ms");
    cmd_detect->add_option("--seg-len", det.seg_len, "segment length in samples");

    EvalOptions ev;
    auto* cmd_eval = app.add_subcommand("eval", "score predictions against ground truth");
    cmd_eval->add_option("--pred", ev.pred_path, "predicted peaks CSV");
    cmd_eval->add_option("--truth", ev.truth_path, "ground-truth peaks CSV");
    cmd_eval->add_option("--tol-ms", ev.tol_ms, "matching tolerance, ms");
    cmd_eval->add_option("--sample-rate", ev.sample_rate_hz, "sample rate in Hz");
    cmd_eval->add_flag("--tsv", ev.tsv, "machine-readable output");
    cmd_eval->add_option("--counts", ev.counts, "bypass matching: tp,fp,fn")
        ->delimiter(',')
        ->expected(3);

    CountOptions cnt;
    auto* cmd_count = app.add_subcommand("count", "parameter and MAC report");
    add_network_flags(cmd_count, cnt.config);
    cmd_count->add_option("--seg-len", cnt.seg_len, "segment length in samples");

    GradcheckOptions gc;
    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    cmd_gradcheck->add_option("--q", gc.q, "Taylor order Q");
    cmd_gradcheck->add_option("--seed", gc.seed, "RNG seed");
    cmd_gradcheck->add_option("--seg-len", gc.seg_len, "segment length in samples");
    cmd_gradcheck->add_option("--step", gc.h, "finite-difference step");
    cmd_gradcheck->add_option("--tol", gc.tol, "max relative error allowed");
    cmd_gradcheck->add_option("--fault-inject", gc.fault_inject,
                              "inject a known fault (weight-grad)");

    BenchOptions bench;
    auto* cmd_bench = app.add_subcommand("bench", "time the three forward formulations");
    cmd_bench->add_option("--q", bench.q, "Taylor order Q");
    cmd_bench->add_option("--k", bench.kernel, "kernel width");
    cmd_bench->add_option("--seg-len", bench.seg_len, "segment length in samples");
    cmd_bench->add_option("--channels", bench.channels, "in/out channel count");
    cmd_bench->add_option("--iters", bench.iters, "timing repetitions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*cmd_generate) return run_generate(gen);
        if (*cmd_train) return run_train(tr);
        if (*cmd_detect) return run_detect(det);
        if (*cmd_eval) return run_eval(ev);
        if (*cmd_count) return run_count(cnt);
        if (*cmd_gradcheck) return run_gradcheck(gc);
        if (*cmd_bench) return run_bench(bench);
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFormat;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFormat;
    }
    return kExitUsage;
}
