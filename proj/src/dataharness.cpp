#include "blindmod/dataharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "blindmod/error.hpp"
#include "blindmod/iqfile.hpp"
#include "blindmod/parallel.hpp"
#include "blindmod/specest.hpp"

namespace blindmod {

using nlohmann::json;

GridSpec GridSpec::scaled_table() {
    GridSpec g;
    for (int k = 0; k <= 10; ++k) g.symbol_rates.push_back((200.0 + 10.0 * k) / 20000.0);
    for (int k = 1; k <= 9; ++k) g.rolloffs.push_back(k / 10.0);
    return g;
}

DatasetManifest DatasetManifest::desk_default() {
    DatasetManifest m;
    for (auto kind : kAllModulations) m.classes.emplace_back(ModulationScheme{kind}.name());
    return m;
}

void DatasetManifest::validate() const {
    auto fail = [](const std::string& what) { throw ParameterError("DatasetManifest: " + what); };
    if (classes.size() < 2) fail("need at least two classes");
    for (const auto& c : classes) ModulationScheme::parse(c);
    if (frames_per_class == 0 || frames_per_signal == 0) fail("frame counts must be positive");
    if (frames_per_class % frames_per_signal != 0) fail("frames_per_class must be a multiple of frames_per_signal");
    if (frame_len == 0) fail("frame_len must be positive");
    if (grid.symbol_rates.empty() || grid.rolloffs.empty()) fail("generation grid is empty");
    if (decimation < 1) fail("decimation must be >= 1");
    const double sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) fail("split ratios must sum to 1");
    for (double r : split_ratios)
        if (r < 0.0) fail("split ratios must be non-negative");
    const std::size_t baseband = rf_length / static_cast<std::size_t>(decimation);
    if (baseband / frame_len < frames_per_signal + 2)
        fail("rf_length too short: each signal must yield frames_per_signal interior frames");
}

lstm::LabeledSet Dataset::labeled(const std::vector<std::size_t>& indices) const {
    lstm::LabeledSet set;
    set.frame_len = manifest.frame_len;
    set.iq.reserve(indices.size() * manifest.frame_len * 2);
    for (auto k : indices) {
        if (k >= frames.size()) throw ParameterError("Dataset::labeled: index out of range");
        for (double v : frames[k].iq) set.iq.push_back(static_cast<float>(v));
        set.labels.push_back(labels[k]);
    }
    return set;
}

namespace {

struct SignalResult {
    SignalLog log;
    std::vector<Frame> frames;
    std::vector<GenerationFailure> failures;
};

constexpr std::uint32_t kMaxAttempts = 8;

SignalResult generate_signal(const DatasetManifest& m, std::size_t index, std::uint16_t label) {
    SignalResult out;
    const auto per_class = m.signals_per_class();
    const std::size_t j = index % per_class;
    const std::size_t point = j % m.grid.size();
    const auto scheme = ModulationScheme::parse(m.classes[label]);

    for (std::uint32_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const std::uint64_t seed = derive_seed(m.seed, index, attempt);
        std::mt19937_64 rng(derive_seed(seed, 0, 7));
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        SignalParams p;
        p.sample_rate = m.sample_rate;
        p.carrier = m.grid.carrier * m.sample_rate;
        p.symbol_rate = m.grid.symbol_rates[point / m.grid.rolloffs.size()] * m.sample_rate;
        p.rho = m.grid.rolloffs[point % m.grid.rolloffs.size()];
        p.phase_offset = std::numbers::pi * (2.0 * unit(rng) - 1.0) * 0.999;
        p.timing_error = unit(rng) - 0.5;
        p.snr_db = m.grid.snr_db + (m.grid.snr_jitter ? 4.0 * unit(rng) - 2.0 : 0.0);

        try {
            const auto rf = synthesize_rf(p, scheme, m.rf_length, seed);
            EstimatorConfig cfg{m.n_fft, m.histogram_bins, m.assumed_rolloff, m.decimation};
            const auto band = estimate_parameters(rf, cfg);
            const auto base = convert_to_baseband(rf, band.carrier, band.bandwidth, m.decimation, m.filter_taps,
                                                  m.cutoff_margin);
            auto all = extract_frames(base, m.frame_len);
            if (all.size() < m.frames_per_signal + 2)
                throw ParameterError("signal yields only " + std::to_string(all.size()) + " frames");

            // Evenly spaced interior frames; the first and last carry filter edge effects.
            const std::size_t interior = all.size() - 2;
            for (std::size_t k = 0; k < m.frames_per_signal; ++k)
                out.frames.push_back(std::move(all[1 + k * interior / m.frames_per_signal]));

            auto& log = out.log;
            log.index = index;
            log.label = label;
            log.attempt = attempt;
            log.seed = seed;
            log.symbol_rate = p.symbol_rate;
            log.rho = p.rho;
            log.carrier = p.carrier;
            log.snr_db = p.snr_db;
            log.phase_offset = p.phase_offset;
            log.timing_error = p.timing_error;
            log.est_carrier = band.carrier;
            log.est_bandwidth = band.bandwidth;
            log.est_sps = band.sps;
            log.carrier_error = band.carrier - p.carrier;
            log.bandwidth_error = band.bandwidth - p.bandwidth();
            const double tol = m.pe_tolerance * m.sample_rate;
            log.within_tolerance = std::abs(log.carrier_error) <= tol && std::abs(log.bandwidth_error) <= tol;
            log.frame_count = out.frames.size();
            return out;
        } catch (const Error& e) {
            out.frames.clear();
            out.failures.push_back({index, label, attempt, p.symbol_rate, p.rho, p.snr_db, e.what()});
        }
    }
    throw Error("generate_dataset: signal " + std::to_string(index) + " failed " + std::to_string(kMaxAttempts) +
                " attempts; last error: " + out.failures.back().message);
}

}  // namespace

Dataset generate_dataset(const DatasetManifest& manifest) {
    manifest.validate();
    Dataset data;
    data.manifest = manifest;
    auto& m = data.manifest;
    m.signals.clear();
    m.failures.clear();
    m.frame_offsets.clear();
    m.frame_signal.clear();

    const std::size_t per_class = m.signals_per_class();
    const std::size_t total = per_class * m.classes.size();
    std::vector<SignalResult> results(total);
    parallel_for(total, [&](std::size_t s) {
        results[s] = generate_signal(m, s, static_cast<std::uint16_t>(s / per_class));
    });

    for (std::size_t s = 0; s < total; ++s) {
        auto& r = results[s];
        r.log.first_frame = data.frames.size();
        for (auto& f : r.frames) {
            m.frame_signal.push_back(s);
            m.frame_offsets.push_back(frame_offset(static_cast<std::uint32_t>(m.frame_len), data.frames.size()));
            data.frames.push_back(std::move(f));
            data.labels.push_back(r.log.label);
        }
        m.signals.push_back(r.log);
        m.failures.insert(m.failures.end(), r.failures.begin(), r.failures.end());
    }
    m.split = split_dataset(m, m.split_ratios, m.seed);
    return data;
}

DatasetSplit split_dataset(const DatasetManifest& manifest, const std::array<double, 3>& ratios, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw ParameterError("split_dataset: ratios must be non-negative and sum to 1");
    if (manifest.signals.empty()) throw ParameterError("split_dataset: manifest has no generated signals");

    std::vector<std::vector<std::size_t>> groups(manifest.classes.size());
    for (std::size_t s = 0; s < manifest.signals.size(); ++s) groups[manifest.signals[s].label].push_back(s);

    std::mt19937_64 rng(derive_seed(seed, 0, 11));
    DatasetSplit split;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        auto& g = groups[c];
        std::shuffle(g.begin(), g.end(), rng);
        const auto n = g.size();
        const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[0]));
        const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1]));
        if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
            throw ParameterError("split_dataset: class '" + manifest.classes[c] + "' has " + std::to_string(n) +
                                 " signals, too few for a non-empty train/val/test partition");
        auto assign = [&](std::size_t from, std::size_t to, std::vector<std::size_t>& dst) {
            for (std::size_t k = from; k < to; ++k) {
                const auto& log = manifest.signals[g[k]];
                for (std::size_t f = 0; f < log.frame_count; ++f) dst.push_back(log.first_frame + f);
            }
        };
        assign(0, n_train, split.train);
        assign(n_train, n_train + n_val, split.val);
        assign(n_train + n_val, n, split.test);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

PeSummary summarize_pe(const DatasetManifest& manifest) {
    PeSummary s;
    for (const auto& log : manifest.signals) {
        ++s.signals;
        if (!log.within_tolerance) ++s.out_of_tolerance;
        s.max_carrier_error = std::max(s.max_carrier_error, std::abs(log.carrier_error));
        s.max_bandwidth_error = std::max(s.max_bandwidth_error, std::abs(log.bandwidth_error));
    }
    return s;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json to_json(const SignalLog& l) {
    return {{"index", l.index},           {"label", l.label},
            {"attempt", l.attempt},       {"seed", l.seed},
            {"symbol_rate", l.symbol_rate}, {"rho", l.rho},
            {"carrier", l.carrier},       {"snr_db", l.snr_db},
            {"phase_offset", l.phase_offset}, {"timing_error", l.timing_error},
            {"est_carrier", l.est_carrier}, {"est_bandwidth", l.est_bandwidth},
            {"est_sps", l.est_sps},       {"carrier_error", l.carrier_error},
            {"bandwidth_error", l.bandwidth_error}, {"within_tolerance", l.within_tolerance},
            {"first_frame", l.first_frame}, {"frame_count", l.frame_count}};
}

SignalLog signal_from_json(const json& j) {
    SignalLog l;
    j.at("index").get_to(l.index);
    j.at("label").get_to(l.label);
    j.at("attempt").get_to(l.attempt);
    j.at("seed").get_to(l.seed);
    j.at("symbol_rate").get_to(l.symbol_rate);
    j.at("rho").get_to(l.rho);
    j.at("carrier").get_to(l.carrier);
    j.at("snr_db").get_to(l.snr_db);
    j.at("phase_offset").get_to(l.phase_offset);
    j.at("timing_error").get_to(l.timing_error);
    j.at("est_carrier").get_to(l.est_carrier);
    j.at("est_bandwidth").get_to(l.est_bandwidth);
    j.at("est_sps").get_to(l.est_sps);
    j.at("carrier_error").get_to(l.carrier_error);
    j.at("bandwidth_error").get_to(l.bandwidth_error);
    j.at("within_tolerance").get_to(l.within_tolerance);
    j.at("first_frame").get_to(l.first_frame);
    j.at("frame_count").get_to(l.frame_count);
    return l;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
    json j;
    j["classes"] = m.classes;
    j["frames_per_class"] = m.frames_per_class;
    j["frames_per_signal"] = m.frames_per_signal;
    j["frame_len"] = m.frame_len;
    j["rf_length"] = m.rf_length;
    j["sample_rate"] = m.sample_rate;
    j["grid"] = {{"symbol_rates", m.grid.symbol_rates},
                 {"rolloffs", m.grid.rolloffs},
                 {"carrier", m.grid.carrier},
                 {"snr_db", m.grid.snr_db},
                 {"snr_jitter", m.grid.snr_jitter}};
    j["n_fft"] = m.n_fft;
    j["histogram_bins"] = m.histogram_bins;
    j["decimation"] = m.decimation;
    j["filter_taps"] = m.filter_taps;
    j["cutoff_margin"] = m.cutoff_margin;
    j["assumed_rolloff"] = m.assumed_rolloff;
    j["pe_tolerance"] = m.pe_tolerance;
    j["seed"] = m.seed;
    j["split_ratios"] = m.split_ratios;
    j["split"] = {{"train", m.split.train}, {"val", m.split.val}, {"test", m.split.test}};
    j["frame_offsets"] = m.frame_offsets;
    j["frame_signal"] = m.frame_signal;
    json signals = json::array();
    for (const auto& s : m.signals) signals.push_back(to_json(s));
    j["signals"] = std::move(signals);
    json failures = json::array();
    for (const auto& f : m.failures)
        failures.push_back({{"signal", f.signal},
                            {"label", f.label},
                            {"attempt", f.attempt},
                            {"symbol_rate", f.symbol_rate},
                            {"rho", f.rho},
                            {"snr_db", f.snr_db},
                            {"message", f.message}});
    j["failures"] = std::move(failures);
    const auto pe = summarize_pe(m);
    j["pe_summary"] = {{"signals", pe.signals},
                       {"out_of_tolerance", pe.out_of_tolerance},
                       {"fraction_out", pe.fraction_out()},
                       {"max_carrier_error", pe.max_carrier_error},
                       {"max_bandwidth_error", pe.max_bandwidth_error}};
    return j.dump(1);
}

DatasetManifest manifest_from_json(const std::string& text) {
    DatasetManifest m;
    try {
        const auto j = json::parse(text);
        j.at("classes").get_to(m.classes);
        j.at("frames_per_class").get_to(m.frames_per_class);
        j.at("frames_per_signal").get_to(m.frames_per_signal);
        j.at("frame_len").get_to(m.frame_len);
        j.at("rf_length").get_to(m.rf_length);
        j.at("sample_rate").get_to(m.sample_rate);
        const auto& g = j.at("grid");
        g.at("symbol_rates").get_to(m.grid.symbol_rates);
        g.at("rolloffs").get_to(m.grid.rolloffs);
        g.at("carrier").get_to(m.grid.carrier);
        g.at("snr_db").get_to(m.grid.snr_db);
        g.at("snr_jitter").get_to(m.grid.snr_jitter);
        j.at("n_fft").get_to(m.n_fft);
        j.at("histogram_bins").get_to(m.histogram_bins);
        j.at("decimation").get_to(m.decimation);
        j.at("filter_taps").get_to(m.filter_taps);
        j.at("cutoff_margin").get_to(m.cutoff_margin);
        j.at("assumed_rolloff").get_to(m.assumed_rolloff);
        j.at("pe_tolerance").get_to(m.pe_tolerance);
        j.at("seed").get_to(m.seed);
        j.at("split_ratios").get_to(m.split_ratios);
        j.at("split").at("train").get_to(m.split.train);
        j.at("split").at("val").get_to(m.split.val);
        j.at("split").at("test").get_to(m.split.test);
        j.at("frame_offsets").get_to(m.frame_offsets);
        j.at("frame_signal").get_to(m.frame_signal);
        for (const auto& s : j.at("signals")) m.signals.push_back(signal_from_json(s));
        for (const auto& f : j.at("failures")) {
            GenerationFailure g2;
            f.at("signal").get_to(g2.signal);
            f.at("label").get_to(g2.label);
            f.at("attempt").get_to(g2.attempt);
            f.at("symbol_rate").get_to(g2.symbol_rate);
            f.at("rho").get_to(g2.rho);
            f.at("snr_db").get_to(g2.snr_db);
            f.at("message").get_to(g2.message);
            m.failures.push_back(std::move(g2));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    return m;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
    std::filesystem::create_directories(dir);
    write_frame_file(dir / "frames.iqfr", frames_to_file(data.frames, data.labels));
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw Error("cannot write manifest in '" + dir.string() + "'");
    os << manifest_to_json(data.manifest) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw Error("no manifest.json in '" + dir.string() + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    Dataset data;
    data.manifest = manifest_from_json(buf.str());
    const auto file = read_frame_file(dir / "frames.iqfr");
    if (file.frame_len != data.manifest.frame_len) throw FormatError("frames.iqfr frame length disagrees with manifest");
    data.frames = file_to_frames(file);
    data.labels = file.labels;
    return data;
}

// ---------------------------------------------------------------------------
// Model sidecar

void save_model(const std::filesystem::path& path, const lstm::TrainResult& result, const lstm::TrainConfig& config,
                const std::vector<std::string>& classes) {
    lstm::save_checkpoint(path, result.net);
    json j;
    const auto& d = result.net.dims();
    j["dims"] = {{"input", d.input}, {"hidden", d.hidden}, {"layers", d.layers}, {"classes", d.classes}};
    j["classes"] = classes;
    j["train_config"] = {{"batch_size", config.batch_size},   {"learning_rate", config.learning_rate},
                         {"epochs", config.epochs},           {"beta1", config.beta1},
                         {"beta2", config.beta2},             {"adam_epsilon", config.adam_epsilon},
                         {"seed", config.seed},               {"shard_size", config.shard_size},
                         {"patience", config.patience},       {"target_accuracy", config.target_accuracy},
                         {"keep_best", config.keep_best},     {"clip_norm", config.clip_norm}};
    j["best_epoch"] = result.best_epoch;
    json history = json::array();
    for (const auto& e : result.history)
        history.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"val_loss", e.val_loss},
                           {"val_accuracy", e.val_accuracy}});
    j["history"] = std::move(history);
    std::ofstream os(path.string() + ".json", std::ios::trunc);
    if (!os) throw Error("cannot write model sidecar for '" + path.string() + "'");
    os << j.dump(1) << '\n';
}

std::vector<std::string> model_class_names(const std::filesystem::path& path, std::size_t classes) {
    std::vector<std::string> names;
    std::ifstream is(path.string() + ".json");
    if (is) {
        try {
            json::parse(is).at("classes").get_to(names);
        } catch (const json::exception&) {
            names.clear();
        }
    }
    if (names.size() != classes) {
        names.clear();
        for (std::size_t k = 0; k < classes; ++k) names.push_back("class" + std::to_string(k));
    }
    return names;
}

// ---------------------------------------------------------------------------
// Latency

namespace {

std::string machine_descriptor() {
    std::string cpu = "unknown CPU";
    std::ifstream info("/proc/cpuinfo");
    for (std::string line; std::getline(info, line);) {
        if (line.rfind("model name", 0) == 0) {
            cpu = line.substr(line.find(':') + 2);
            break;
        }
    }
    std::ostringstream os;
    os << cpu << "; " << std::thread::hardware_concurrency() << " hardware threads, " << worker_count()
       << " workers; compiler " << __VERSION__;
    return os.str();
}

}  // namespace

std::string LatencyReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "LSTM inference latency (" << frames << " frames x " << repetitions << " repetitions)\n"
       << "  per-frame mean   " << mean_us << " us\n"
       << "  per-frame median " << median_us << " us\n"
       << "  per-frame min    " << min_us << " us\n"
       << "  frames/sec       " << frames_per_second << "\n"
       << "  batched          " << batched_us << " us/frame\n"
       << "  machine          " << machine << "\n";
    return os.str();
}

LatencyReport benchmark_inference(const lstm::LstmNetwork<float>& net, const lstm::LabeledSet& frames,
                                  std::size_t repetitions) {
    if (repetitions < 10) throw ParameterError("benchmark_inference: need at least 10 repetitions");
    if (frames.size() == 0) throw ParameterError("benchmark_inference: no frames");
    using clock = std::chrono::steady_clock;

    lstm::ForwardCache<float> cache;
    lstm::Matrix<float> input;
    auto run_single = [&](std::size_t k) {
        const std::size_t id = k;
        lstm::pack_batch<float>(frames.iq, frames.frame_len, std::span<const std::size_t>(&id, 1), input);
        lstm::forward_batch(net, input, frames.frame_len, cache);
    };
    for (std::size_t k = 0; k < frames.size(); ++k) run_single(k);

    std::vector<double> per_frame;
    for (std::size_t r = 0; r < repetitions; ++r) {
        const auto t0 = clock::now();
        for (std::size_t k = 0; k < frames.size(); ++k) run_single(k);
        const auto t1 = clock::now();
        per_frame.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count() / static_cast<double>(frames.size()));
    }
    std::vector<std::size_t> all(frames.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    const auto t0 = clock::now();
    lstm::pack_batch<float>(frames.iq, frames.frame_len, all, input);
    lstm::forward_batch(net, input, frames.frame_len, cache);
    const auto t1 = clock::now();

    LatencyReport rep;
    rep.frames = frames.size();
    rep.repetitions = repetitions;
    std::sort(per_frame.begin(), per_frame.end());
    rep.min_us = per_frame.front();
    const auto n = per_frame.size();
    rep.median_us = n % 2 ? per_frame[n / 2] : 0.5 * (per_frame[n / 2 - 1] + per_frame[n / 2]);
    double sum = 0.0;
    for (double v : per_frame) sum += v;
    rep.mean_us = sum / static_cast<double>(n);
    rep.frames_per_second = 1e6 / rep.mean_us;
    rep.batched_us = std::chrono::duration<double, std::micro>(t1 - t0).count() / static_cast<double>(frames.size());
    rep.machine = machine_descriptor();
    return rep;
}

}  // namespace blindmod
