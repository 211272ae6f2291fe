// blindmod: command-line front end for the blind recognition pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "blindmod/config.hpp"
#include "blindmod/dataharness.hpp"
#include "blindmod/error.hpp"
#include "blindmod/iqfile.hpp"
#include "blindmod/lstm.hpp"
#include "blindmod/parallel.hpp"
#include "blindmod/rbc.hpp"
#include "blindmod/sigsynth.hpp"
#include "blindmod/specest.hpp"

namespace fs = std::filesystem;
using namespace blindmod;

namespace {

struct Flag {
    const char* name;
    const char* key;
    const char* help;
    std::optional<std::string> value;
};

std::uint16_t scheme_label(const std::string& name) {
    const auto kind = ModulationScheme::parse(name).kind;
    for (std::size_t k = 0; k < kAllModulations.size(); ++k)
        if (kAllModulations[k] == kind) return static_cast<std::uint16_t>(k);
    return 0;
}

std::string require_input(const std::string& input, const char* what) {
    if (input.empty()) throw ParameterError(std::string("missing input: ") + what);
    if (!fs::exists(input)) throw Error("no such file or directory: '" + input + "'");
    return input;
}

void print_estimate(const BandEstimate& est) {
    std::printf("bandwidth        %.9g\n", est.bandwidth);
    std::printf("carrier          %.9g\n", est.carrier);
    std::printf("samples/symbol   %.9g\n", est.sps);
    std::printf("noise floor dB   %.4f\n", est.noise_floor_db);
    std::printf("band bins        %zu..%zu\n", est.band_start, est.band_end);
}

BandEstimate run_estimate(const PipelineConfig& cfg, const ComplexSignal& rf) {
    PowerSpectrum spec;
    const auto est = estimate_parameters(rf, cfg.estimator(), &spec);
    if (!cfg.dump_spectrum.empty()) {
        std::ofstream os(cfg.dump_spectrum, std::ios::trunc);
        if (!os) throw Error("cannot write spectrum CSV '" + cfg.dump_spectrum + "'");
        write_spectrum_csv(os, spec);
    }
    return est;
}

FrameFile run_convert(const PipelineConfig& cfg, const ComplexSignal& rf, const BandEstimate& est, std::uint16_t label) {
    const auto base = convert_to_baseband(rf, est.carrier, est.bandwidth, static_cast<int>(cfg.decimation),
                                          cfg.filter_taps, cfg.cutoff_margin);
    const auto frames = extract_frames(base, cfg.frame_len);
    return frames_to_file(frames, std::vector<std::uint16_t>(frames.size(), label));
}

lstm::LabeledSet to_labeled(const FrameFile& file) {
    lstm::LabeledSet set;
    set.frame_len = file.frame_len;
    set.iq = file.iq;
    set.labels = file.labels;
    return set;
}

// Mean class probability over all frames; prints and returns the winner.
std::size_t report_prediction(const lstm::LstmNetwork<float>& net, const lstm::LabeledSet& frames,
                              const std::vector<std::string>& names) {
    const auto probs = lstm::predict(net, frames);
    const Eigen::VectorXd mean = probs.rowwise().mean();
    Eigen::Index best = 0;
    mean.maxCoeff(&best);
    for (Eigen::Index c = 0; c < mean.size(); ++c) std::printf("  p(%s) = %.6f\n", names[c].c_str(), mean[c]);
    std::printf("%s %.6f\n", names[best].c_str(), mean[best]);
    return static_cast<std::size_t>(best);
}

void print_evaluation(const lstm::Evaluation& ev, const std::vector<std::string>& names) {
    std::printf("accuracy %.4f  mean loss %.4f\n", ev.accuracy, ev.mean_loss);
    std::printf("confusion (rows true, columns predicted)\n%8s", "");
    for (const auto& n : names) std::printf("%8s", n.c_str());
    std::printf("%10s\n", "acc");
    const auto per_class = ev.per_class_accuracy();
    for (std::size_t r = 0; r < ev.confusion.size(); ++r) {
        std::printf("%8s", names[r].c_str());
        for (auto v : ev.confusion[r]) std::printf("%8llu", static_cast<unsigned long long>(v));
        std::printf("%10.4f\n", per_class[r]);
    }
}

lstm::LabeledSet load_frames(const std::string& input, const PipelineConfig& cfg, bool test_split) {
    if (fs::is_directory(input)) {
        const auto data = read_dataset(input);
        if (!test_split) return lstm::LabeledSet::from_frames(data.frames, data.labels);
        return data.labeled(data.manifest.split.test);
    }
    (void)cfg;
    return to_labeled(read_frame_file(input));
}

int run(const std::string& sub, PipelineConfig& cfg, const std::string& input) {
    if (sub == "synth") {
        const auto scheme = ModulationScheme::parse(cfg.scheme);
        const auto rf = synthesize_rf(cfg.signal_params(), scheme, cfg.rf_length, cfg.seed);
        const std::string out = cfg.out.empty() ? "signal.iqfr" : cfg.out;
        write_signal_file(out, rf, scheme_label(cfg.scheme));
        std::printf("wrote %zu samples of %s to %s\n", rf.size(), std::string(scheme.name()).c_str(), out.c_str());
        std::printf("bandwidth        %.9g\n", cfg.signal_params().bandwidth());
        std::printf("carrier          %.9g\n", cfg.carrier);
        std::printf("samples/symbol   %.9g (after decimation by %llu)\n",
                    cfg.signal_params().sps() / static_cast<double>(cfg.decimation),
                    static_cast<unsigned long long>(cfg.decimation));
        return 0;
    }
    if (sub == "estimate") {
        const auto rf = read_signal_file(require_input(input, "RF signal file"), cfg.sample_rate);
        print_estimate(run_estimate(cfg, rf));
        return 0;
    }
    if (sub == "convert") {
        std::uint16_t label = 0;
        const auto rf = read_signal_file(require_input(input, "RF signal file"), cfg.sample_rate, &label);
        const auto est = run_estimate(cfg, rf);
        const auto file = run_convert(cfg, rf, est, label);
        const std::string out = cfg.out.empty() ? "frames.iqfr" : cfg.out;
        write_frame_file(out, file);
        std::printf("wrote %zu frames of %u samples to %s\n", file.frame_count(), file.frame_len, out.c_str());
        return 0;
    }
    if (sub == "make-dataset") {
        const std::string dir = cfg.out.empty() ? cfg.dataset : cfg.out;
        const auto data = generate_dataset(cfg.manifest());
        write_dataset(dir, data);
        const auto pe = summarize_pe(data.manifest);
        std::printf("wrote %zu frames (%zu classes) to %s\n", data.frames.size(), data.manifest.classes.size(),
                    dir.c_str());
        std::printf("split train/val/test %zu/%zu/%zu\n", data.manifest.split.train.size(),
                    data.manifest.split.val.size(), data.manifest.split.test.size());
        std::printf("generation failures %zu\n", data.manifest.failures.size());
        std::printf("PE out of tolerance %zu/%zu (%.4f); max carrier error %.3g, max bandwidth error %.3g\n",
                    pe.out_of_tolerance, pe.signals, pe.fraction_out(), pe.max_carrier_error, pe.max_bandwidth_error);
        return 0;
    }
    if (sub == "train") {
        const auto data = read_dataset(input.empty() ? cfg.dataset : require_input(input, "dataset directory"));
        const auto tc = cfg.train_config();
        const auto result = lstm::train(data.labeled(data.manifest.split.train), data.labeled(data.manifest.split.val),
                                        cfg.network_dims(data.manifest.classes.size()), tc,
                                        [](const lstm::EpochRecord& e) {
                                            std::printf("epoch %4zu  train loss %.4f acc %.4f  val loss %.4f acc %.4f\n",
                                                        e.epoch, e.train_loss, e.train_accuracy, e.val_loss,
                                                        e.val_accuracy);
                                            std::fflush(stdout);
                                        });
        save_model(cfg.model, result, tc, data.manifest.classes);
        std::printf("best epoch %zu; model written to %s\n", result.best_epoch, cfg.model.c_str());
        return 0;
    }
    if (sub == "eval") {
        const auto net = lstm::load_checkpoint(cfg.model);
        const auto names = model_class_names(cfg.model, net.dims().classes);
        const std::string source = input.empty() ? cfg.dataset : require_input(input, "dataset or frame file");
        const auto frames = load_frames(source, cfg, true);
        if (!fs::is_directory(source)) report_prediction(net, frames, names);
        print_evaluation(lstm::evaluate(net, frames), names);
        return 0;
    }
    if (sub == "pipeline") {
        const auto rf = read_signal_file(require_input(input, "RF signal file"), cfg.sample_rate);
        const auto net = lstm::load_checkpoint(cfg.model);
        const auto names = model_class_names(cfg.model, net.dims().classes);
        const auto est = run_estimate(cfg, rf);
        print_estimate(est);
        report_prediction(net, to_labeled(run_convert(cfg, rf, est, 0)), names);
        return 0;
    }
    if (sub == "bench") {
        const auto net = lstm::load_checkpoint(cfg.model);
        const std::string source = input.empty() ? cfg.dataset : require_input(input, "dataset or frame file");
        auto frames = load_frames(source, cfg, true);
        if (frames.size() > 200) {
            std::vector<std::size_t> first(200);
            for (std::size_t k = 0; k < first.size(); ++k) first[k] = k;
            frames = frames.subset(first);
        }
        std::fputs(benchmark_inference(net, frames, cfg.bench_repetitions).to_text().c_str(), stdout);
        return 0;
    }
    throw ParameterError("unknown subcommand '" + sub + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"blindmod: blind parameter estimation and LSTM modulation recognition"};
    app.require_subcommand(1);
    app.fallthrough();
    {
        const PipelineConfig defaults;
        std::string keys = "\nConfig file keys (key = value):\n";
        for (const auto& key : PipelineConfig::keys())
            keys += "  " + key + " = " + defaults.get(key) + "    " + PipelineConfig::describe(key) + "\n";
        app.footer(keys);
    }

    std::string config_path;
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    std::vector<Flag> flags = {
        {"--seed", "seed", "master seed (u64)", {}},
        {"--snr-db", "snr_db", "SNR in dB", {}},
        {"--scheme", "scheme", "BPSK QPSK 8PSK 16QAM 64QAM 256QAM", {}},
        {"--symbol-rate", "symbol_rate", "symbol rate", {}},
        {"--rolloff", "rolloff", "RRC roll-off", {}},
        {"--carrier", "carrier", "carrier frequency", {}},
        {"--nfft", "n_fft", "periodogram segment length", {}},
        {"--decim", "decimation", "decimation factor", {}},
        {"--out", "out", "output path", {}},
        {"--model", "model", "model checkpoint path", {}},
        {"--dump-spectrum", "dump_spectrum", "write the averaged spectrum as CSV", {}},
        {"--epochs", "epochs", "training epochs", {}},
        {"--batch", "batch", "mini-batch size", {}},
        {"--lr", "lr", "learning rate", {}},
    };
    for (auto& f : flags) app.add_option(f.name, f.value, f.help);

    std::string input;
    const std::vector<std::pair<const char*, const char*>> subs = {
        {"synth", "synthesise an RF signal file"},
        {"estimate", "estimate bandwidth, carrier and samples per symbol of a signal file"},
        {"convert", "convert a signal file to baseband frames"},
        {"make-dataset", "generate the labelled frame dataset"},
        {"train", "train the LSTM on a dataset"},
        {"eval", "evaluate a model on a dataset test split or a frame file"},
        {"pipeline", "signal file to predicted modulation"},
        {"bench", "single-frame inference latency"},
    };
    for (const auto& [name, help] : subs) {
        auto* sc = app.add_subcommand(name, help);
        if (std::string(name) != "synth" && std::string(name) != "make-dataset")
            sc->add_option("input", input, "input file or directory");
    }

    if (argc < 2) {
        std::cerr << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
        for (const auto& f : flags)
            if (f.value) cfg.set(f.key, *f.value);
        cfg.validate();
        return run(app.get_subcommands().front()->get_name(), cfg, input);
    } catch (const std::exception& e) {
        std::cerr << "blindmod: " << e.what() << '\n';
        return 1;
    }
}
