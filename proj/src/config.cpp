#include "blindmod/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

#include "blindmod/error.hpp"

namespace blindmod {

namespace {

using Member = std::variant<std::string PipelineConfig::*, double PipelineConfig::*, std::uint64_t PipelineConfig::*,
                            bool PipelineConfig::*>;

struct Field {
    const char* key;
    Member member;
    const char* doc;
};

using C = PipelineConfig;

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"scheme", &C::scheme, "modulation for synth: BPSK QPSK 8PSK 16QAM 64QAM 256QAM"},
        {"snr_db", &C::snr_db, "per-sample SNR of synthesised signals, dB"},
        {"symbol_rate", &C::symbol_rate, "symbol rate R_s"},
        {"rolloff", &C::rolloff, "RRC roll-off of synthesised signals"},
        {"carrier", &C::carrier, "carrier frequency f_c"},
        {"sample_rate", &C::sample_rate, "RF sample rate f_s; signal files do not store it"},
        {"rf_length", &C::rf_length, "samples per synthesised RF signal"},
        {"freq_offset", &C::freq_offset, "residual carrier frequency offset"},
        {"phase_offset", &C::phase_offset, "carrier phase offset, rad"},
        {"timing_error", &C::timing_error, "symbol timing error, fraction of a symbol"},
        {"n_fft", &C::n_fft, "periodogram segment length"},
        {"histogram_bins", &C::histogram_bins, "noise-floor histogram cells"},
        {"assumed_rolloff", &C::assumed_rolloff, "roll-off assumed by the samples-per-symbol estimate"},
        {"decimation", &C::decimation, "baseband decimation factor"},
        {"filter_taps", &C::filter_taps, "low-pass taps, odd"},
        {"cutoff_margin", &C::cutoff_margin, "low-pass cutoff as a multiple of half the bandwidth"},
        {"frame_len", &C::frame_len, "I/Q pairs per frame"},
        {"frames_per_class", &C::frames_per_class, "dataset frames per class"},
        {"frames_per_signal", &C::frames_per_signal, "frames cut from each generated signal"},
        {"snr_jitter", &C::snr_jitter, "add uniform +-2 dB to each dataset signal"},
        {"split_train", &C::split_train, "training fraction"},
        {"split_val", &C::split_val, "validation fraction"},
        {"split_test", &C::split_test, "test fraction"},
        {"hidden", &C::hidden, "LSTM hidden units"},
        {"layers", &C::layers, "stacked LSTM layers"},
        {"epochs", &C::epochs, "maximum training epochs"},
        {"batch", &C::batch, "mini-batch size"},
        {"lr", &C::lr, "Adam learning rate"},
        {"beta1", &C::beta1, "Adam beta1"},
        {"beta2", &C::beta2, "Adam beta2"},
        {"adam_epsilon", &C::adam_epsilon, "Adam epsilon"},
        {"shard_size", &C::shard_size, "samples per gradient shard"},
        {"patience", &C::patience, "early stop after this many epochs without improvement, 0 = off"},
        {"target_accuracy", &C::target_accuracy, "stop once validation accuracy reaches this, 0 = off"},
        {"keep_best", &C::keep_best, "keep the parameters of the best validation epoch"},
        {"clip_norm", &C::clip_norm, "global gradient-norm clip, 0 = off"},
        {"bench_repetitions", &C::bench_repetitions, "timed passes in bench"},
        {"seed", &C::seed, "master seed"},
        {"out", &C::out, "output path"},
        {"model", &C::model, "model checkpoint path"},
        {"dataset", &C::dataset, "dataset directory"},
        {"dump_spectrum", &C::dump_spectrum, "spectrum CSV written by estimate, empty = none"},
    };
    return table;
}

const Field& find(const std::string& key) {
    for (const auto& f : fields())
        if (key == f.key) return f;
    throw FormatError("unknown config key '" + key + "'");
}

std::string format_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".eni") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out + '"';
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const char* end = v.data() + v.size();
    auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) throw FormatError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const char* end = v.data() + v.size();
    auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end)
        throw FormatError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

// Accepts a quoted TOML basic string or a bare word (flags pass bare paths).
std::string parse_string(const std::string& key, const std::string& v) {
    if (v.empty() || v.front() != '"') return v;
    std::string out;
    std::size_t k = 1;
    for (; k < v.size(); ++k) {
        if (v[k] == '\\' && k + 1 < v.size()) {
            out += v[++k];
        } else if (v[k] == '"') {
            break;
        } else {
            out += v[k];
        }
    }
    if (k != v.size() - 1) throw FormatError("config key '" + key + "': malformed string " + v);
    return out;
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (in_string && ch == '\\') {
            ++k;
        } else if (ch == '"') {
            in_string = !in_string;
        } else if (ch == '#' && !in_string) {
            return line.substr(0, k);
        }
    }
    return line;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& raw) {
    const auto& f = find(key);
    const std::string value = trim(raw);
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
                this->*member = parse_string(key, value);
            } else if constexpr (std::is_same_v<T, double>) {
                this->*member = parse_double(key, value);
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                this->*member = parse_u64(key, value);
            } else {
                if (value == "true") {
                    this->*member = true;
                } else if (value == "false") {
                    this->*member = false;
                } else {
                    throw FormatError("config key '" + key + "': expected true or false, got '" + value + "'");
                }
            }
        },
        f.member);
}

std::string PipelineConfig::get(const std::string& key) const {
    const auto& f = find(key);
    return std::visit(
        [&](auto member) -> std::string {
            const auto& v = this->*member;
            using T = std::remove_cvref_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return quote(v);
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(v);
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                return std::to_string(v);
            } else {
                return v ? "true" : "false";
            }
        },
        f.member);
}

std::vector<std::string> PipelineConfig::keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
}

std::string PipelineConfig::describe(const std::string& key) { return find(key).doc; }

std::string PipelineConfig::to_text() const {
    std::ostringstream os;
    os << "# blindmod pipeline configuration\n";
    for (const auto& f : fields()) os << "\n# " << f.doc << '\n' << f.key << " = " << get(f.key) << '\n';
    return os.str();
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(is, line);) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') continue;  // table headers are accepted and ignored
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        try {
            cfg.set(key, line.substr(eq + 1));
        } catch (const FormatError& e) {
            throw FormatError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return from_text(buf.str());
}

void PipelineConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot write config file '" + path.string() + "'");
    os << to_text();
}

void PipelineConfig::validate() const {
    ModulationScheme::parse(scheme);
    signal_params().validate();
    if (decimation == 0) throw ParameterError("decimation must be >= 1");
    if (hidden == 0 || layers == 0) throw ParameterError("network needs hidden >= 1 and layers >= 1");
    train_config().validate();
}

SignalParams PipelineConfig::signal_params() const {
    SignalParams p;
    p.carrier = carrier;
    p.symbol_rate = symbol_rate;
    p.rho = rolloff;
    p.sample_rate = sample_rate;
    p.snr_db = snr_db;
    p.freq_offset = freq_offset;
    p.phase_offset = phase_offset;
    p.timing_error = timing_error;
    return p;
}

EstimatorConfig PipelineConfig::estimator() const {
    EstimatorConfig c;
    c.n_fft = n_fft;
    c.histogram_bins = histogram_bins;
    c.assumed_rolloff = assumed_rolloff;
    c.decimation = static_cast<int>(decimation);
    return c;
}

lstm::TrainConfig PipelineConfig::train_config() const {
    lstm::TrainConfig c;
    c.batch_size = batch;
    c.learning_rate = lr;
    c.epochs = epochs;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.adam_epsilon = adam_epsilon;
    c.seed = seed;
    c.shard_size = shard_size;
    c.patience = patience;
    c.target_accuracy = target_accuracy;
    c.keep_best = keep_best;
    c.clip_norm = clip_norm;
    return c;
}

lstm::NetworkDims PipelineConfig::network_dims(std::size_t classes) const {
    lstm::NetworkDims d;
    d.input = 2;
    d.hidden = hidden;
    d.layers = layers;
    d.classes = classes;
    return d;
}

DatasetManifest PipelineConfig::manifest() const {
    auto m = DatasetManifest::desk_default();
    m.frames_per_class = frames_per_class;
    m.frames_per_signal = frames_per_signal;
    m.frame_len = frame_len;
    m.rf_length = rf_length;
    m.sample_rate = sample_rate;
    m.grid.snr_db = snr_db;
    m.grid.snr_jitter = snr_jitter;
    m.n_fft = n_fft;
    m.histogram_bins = histogram_bins;
    m.decimation = static_cast<int>(decimation);
    m.filter_taps = filter_taps;
    m.cutoff_margin = cutoff_margin;
    m.assumed_rolloff = assumed_rolloff;
    m.seed = seed;
    m.split_ratios = {split_train, split_val, split_test};
    return m;
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
    for (const auto& key : PipelineConfig::keys())
        if (a.get(key) != b.get(key)) return false;
    return true;
}

}  // namespace blindmod
