#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blindmod/lstm.hpp"
#include "blindmod/rbc.hpp"
#include "blindmod/sigsynth.hpp"

namespace blindmod {

/// Generation grid, in units of the RF sample rate.
struct GridSpec {
    std::vector<double> symbol_rates;
    std::vector<double> rolloffs;
    double carrier = 0.05;
    double snr_db = 25.0;
    /// Adds uniform +-2 dB to each signal's SNR.
    bool snr_jitter = false;

    std::size_t size() const { return symbol_rates.size() * rolloffs.size(); }

    /// R_s/f_s in {0.0100, 0.0105, ..., 0.0150}, rho in {0.1, ..., 0.9},
    /// f_c = 0.05 f_s, 25 dB.
    static GridSpec scaled_table();
};

/// Per-signal record of what was generated and what the estimator found.
struct SignalLog {
    std::size_t index = 0;
    std::uint16_t label = 0;
    std::uint32_t attempt = 0;
    std::uint64_t seed = 0;
    double symbol_rate = 0.0;
    double rho = 0.0;
    double carrier = 0.0;
    double snr_db = 0.0;
    double phase_offset = 0.0;
    double timing_error = 0.0;
    double est_carrier = 0.0;
    double est_bandwidth = 0.0;
    double est_sps = 0.0;
    double carrier_error = 0.0;
    double bandwidth_error = 0.0;
    bool within_tolerance = false;
    std::size_t first_frame = 0;
    std::size_t frame_count = 0;
};

struct GenerationFailure {
    std::size_t signal = 0;
    std::uint16_t label = 0;
    std::uint32_t attempt = 0;
    double symbol_rate = 0.0;
    double rho = 0.0;
    double snr_db = 0.0;
    std::string message;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

struct DatasetManifest {
    std::vector<std::string> classes;
    std::size_t frames_per_class = 1000;
    std::size_t frames_per_signal = 10;
    std::size_t frame_len = kDefaultFrameLength;
    std::size_t rf_length = 65536;
    double sample_rate = 1.0;
    GridSpec grid = GridSpec::scaled_table();

    std::size_t n_fft = 1024;
    std::size_t histogram_bins = 100;
    int decimation = 10;
    std::size_t filter_taps = kDefaultFilterTaps;
    double cutoff_margin = kDefaultCutoffMargin;
    double assumed_rolloff = 0.35;
    /// PE error bound, as a fraction of the sample rate, used for the log.
    double pe_tolerance = 1e-3;

    std::uint64_t seed = 1;
    std::array<double, 3> split_ratios = {0.6, 0.2, 0.2};

    // Filled by generation / splitting.
    DatasetSplit split;
    std::vector<std::uint64_t> frame_offsets;
    std::vector<std::size_t> frame_signal;
    std::vector<SignalLog> signals;
    std::vector<GenerationFailure> failures;

    /// All six schemes in canonical order.
    static DatasetManifest desk_default();

    std::size_t signals_per_class() const { return frames_per_class / frames_per_signal; }
    void validate() const;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Frame> frames;
    std::vector<std::uint16_t> labels;

    lstm::LabeledSet labeled(const std::vector<std::size_t>& indices) const;
};

/// Synthesises every signal of the manifest, estimates its carrier and
/// bandwidth, converts it to baseband and cuts frames. Signals whose
/// estimation or conversion fails are logged in `failures` and regenerated
/// with the next attempt seed. The returned manifest carries the PE log,
/// the frame offsets and a split made with `split_dataset`.
Dataset generate_dataset(const DatasetManifest& manifest);

/// Stratified, group-aware split: all frames of one signal land in the same
/// partition and each class is divided by the same ratios.
DatasetSplit split_dataset(const DatasetManifest& manifest, const std::array<double, 3>& ratios, std::uint64_t seed);

struct PeSummary {
    std::size_t signals = 0;
    std::size_t out_of_tolerance = 0;
    double max_carrier_error = 0.0;
    double max_bandwidth_error = 0.0;

    double fraction_out() const { return signals ? static_cast<double>(out_of_tolerance) / static_cast<double>(signals) : 0.0; }
};

PeSummary summarize_pe(const DatasetManifest& manifest);

/// Writes `frames.iqfr` and `manifest.json` into `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Checkpoint plus `<path>.json` holding the training config and history.
void save_model(const std::filesystem::path& path, const lstm::TrainResult& result, const lstm::TrainConfig& config,
                const std::vector<std::string>& classes);
/// Class names from the sidecar, or generic names when it is missing.
std::vector<std::string> model_class_names(const std::filesystem::path& path, std::size_t classes);

struct LatencyReport {
    std::size_t frames = 0;
    std::size_t repetitions = 0;
    double mean_us = 0.0;
    double median_us = 0.0;
    double min_us = 0.0;
    double frames_per_second = 0.0;
    double batched_us = 0.0;  // per frame when the whole set runs as one batch
    std::string machine;

    std::string to_text() const;
};

/// Single-frame inference latency; one warm-up pass precedes the timed ones.
LatencyReport benchmark_inference(const lstm::LstmNetwork<float>& net, const lstm::LabeledSet& frames,
                                  std::size_t repetitions);

}  // namespace blindmod
