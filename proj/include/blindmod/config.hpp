#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blindmod/dataharness.hpp"
#include "blindmod/lstm.hpp"
#include "blindmod/sigsynth.hpp"
#include "blindmod/specest.hpp"

namespace blindmod {

/// Every setting the command-line tool uses. Frequencies and rates are in
/// units of the RF sample rate unless `sample_rate` is changed.
///
/// File format is a flat TOML subset: `key = value` per line, `#` comments,
/// strings in double quotes, booleans `true`/`false`. Later lines win.
struct PipelineConfig {
    // signal synthesis
    std::string scheme = "QPSK";
    double snr_db = 25.0;
    double symbol_rate = 0.0125;
    double rolloff = 0.35;
    double carrier = 0.05;
    double sample_rate = 1.0;
    std::uint64_t rf_length = 65536;
    double freq_offset = 0.0;
    double phase_offset = 0.0;
    double timing_error = 0.0;

    // parameter estimation
    std::uint64_t n_fft = kDefaultNfft;
    std::uint64_t histogram_bins = kDefaultHistogramBins;
    double assumed_rolloff = kDefaultAssumedRolloff;

    // baseband conversion
    std::uint64_t decimation = 10;
    std::uint64_t filter_taps = kDefaultFilterTaps;
    double cutoff_margin = kDefaultCutoffMargin;
    std::uint64_t frame_len = kDefaultFrameLength;

    // dataset
    std::uint64_t frames_per_class = 1000;
    std::uint64_t frames_per_signal = 10;
    bool snr_jitter = false;
    double split_train = 0.6;
    double split_val = 0.2;
    double split_test = 0.2;

    // network and training
    std::uint64_t hidden = 128;
    std::uint64_t layers = 2;
    std::uint64_t epochs = 250;
    std::uint64_t batch = 400;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t shard_size = 100;
    std::uint64_t patience = 0;
    double target_accuracy = 0.0;
    bool keep_best = true;
    double clip_norm = 0.0;

    std::uint64_t bench_repetitions = 20;
    std::uint64_t seed = 1;

    // paths
    std::string out;
    std::string model = "model.lstm";
    std::string dataset = "dataset";
    std::string dump_spectrum;

    /// Assigns one field from its textual value. Throws FormatError for an
    /// unknown key or a value of the wrong type.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static std::vector<std::string> keys();
    static std::string describe(const std::string& key);

    /// Serialises every field, each preceded by its description.
    std::string to_text() const;
    /// Starts from defaults and applies the assignments in `text`.
    static PipelineConfig from_text(const std::string& text);
    static PipelineConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    void validate() const;

    SignalParams signal_params() const;
    EstimatorConfig estimator() const;
    lstm::TrainConfig train_config() const;
    lstm::NetworkDims network_dims(std::size_t classes) const;
    DatasetManifest manifest() const;
};

bool operator==(const PipelineConfig& a, const PipelineConfig& b);

}  // namespace blindmod
