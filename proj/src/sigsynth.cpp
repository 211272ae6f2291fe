#include "blindmod/sigsynth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "blindmod/error.hpp"

namespace blindmod {

namespace {

constexpr double kPi = std::numbers::pi;

unsigned gray(unsigned k) { return k ^ (k >> 1); }

std::vector<cplx> build_constellation(Modulation kind) {
    std::vector<cplx> points;
    switch (kind) {
    case Modulation::Bpsk:
        points = {cplx(1.0, 0.0), cplx(-1.0, 0.0)};
        break;
    case Modulation::Psk8: {
        points.resize(8);
        for (unsigned k = 0; k < 8; ++k)
            points[gray(k)] = std::polar(1.0, 2.0 * kPi * k / 8.0);
        break;
    }
    case Modulation::Qpsk:
    case Modulation::Qam16:
    case Modulation::Qam64:
    case Modulation::Qam256: {
        const int bits = ModulationScheme{kind}.bits_per_symbol();
        const unsigned half = static_cast<unsigned>(bits / 2);
        const unsigned levels = 1u << half;
        // Gray-labelled PAM per axis, highest amplitude at index 0.
        std::vector<double> pam(levels);
        for (unsigned k = 0; k < levels; ++k)
            pam[gray(k)] = static_cast<double>(levels - 1) - 2.0 * k;
        points.resize(std::size_t{1} << bits);
        for (unsigned label = 0; label < points.size(); ++label)
            points[label] = cplx(pam[label >> half], pam[label & (levels - 1)]);
        break;
    }
    }
    double power = 0.0;
    for (const auto& p : points) power += std::norm(p);
    const double norm = std::sqrt(power / static_cast<double>(points.size()));
    for (auto& p : points) p /= norm;
    return points;
}

void require_nonempty(const ComplexSignal& x, const char* what) {
    if (x.empty()) throw ParameterError(std::string(what) + ": empty signal");
}

// exp(j 2 pi f k / fs) with the cycle count reduced before scaling to radians,
// which keeps the phase exact for long signals.
cplx rotation(double cycles_per_sample, std::size_t k, double phase = 0.0) {
    const double cycles = cycles_per_sample * static_cast<double>(k);
    return std::polar(1.0, 2.0 * kPi * (cycles - std::floor(cycles)) + phase);
}

}  // namespace

double mean_power(const ComplexSignal& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : x.samples) acc += std::norm(s);
    return acc / static_cast<double>(x.size());
}

bool all_finite(const ComplexSignal& x) {
    return std::all_of(x.samples.begin(), x.samples.end(), [](const cplx& s) {
        return std::isfinite(s.real()) && std::isfinite(s.imag());
    });
}

int ModulationScheme::bits_per_symbol() const {
    switch (kind) {
    case Modulation::Bpsk: return 1;
    case Modulation::Qpsk: return 2;
    case Modulation::Psk8: return 3;
    case Modulation::Qam16: return 4;
    case Modulation::Qam64: return 6;
    case Modulation::Qam256: return 8;
    }
    return 0;
}

std::string_view ModulationScheme::name() const {
    switch (kind) {
    case Modulation::Bpsk: return "BPSK";
    case Modulation::Qpsk: return "QPSK";
    case Modulation::Psk8: return "8PSK";
    case Modulation::Qam16: return "16QAM";
    case Modulation::Qam64: return "64QAM";
    case Modulation::Qam256: return "256QAM";
    }
    return "?";
}

ModulationScheme ModulationScheme::parse(std::string_view text) {
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (auto kind : kAllModulations) {
        ModulationScheme scheme{kind};
        if (upper == scheme.name()) return scheme;
    }
    if (upper == "PSK8") return {Modulation::Psk8};
    if (upper == "QAM16") return {Modulation::Qam16};
    if (upper == "QAM64") return {Modulation::Qam64};
    if (upper == "QAM256") return {Modulation::Qam256};
    throw ParameterError("unknown modulation scheme '" + std::string(text) + "'");
}

const std::vector<cplx>& constellation(ModulationScheme scheme) {
    static const std::array<std::vector<cplx>, 6> tables = [] {
        std::array<std::vector<cplx>, 6> t;
        for (auto kind : kAllModulations) t[static_cast<std::size_t>(kind)] = build_constellation(kind);
        return t;
    }();
    return tables[static_cast<std::size_t>(scheme.kind)];
}

SymbolSequence map_symbols(std::span<const std::uint8_t> bits, ModulationScheme scheme) {
    const auto k = static_cast<std::size_t>(scheme.bits_per_symbol());
    if (bits.size() % k != 0) {
        std::ostringstream msg;
        msg << "map_symbols: " << bits.size() << " bits is not a multiple of " << k << " for "
            << scheme.name() << " (remainder " << bits.size() % k << ")";
        throw ParameterError(msg.str());
    }
    const auto& points = constellation(scheme);
    SymbolSequence out(bits.size() / k);
    for (std::size_t n = 0; n < out.size(); ++n) {
        unsigned label = 0;
        for (std::size_t b = 0; b < k; ++b) label = (label << 1) | (bits[n * k + b] & 1u);
        out[n] = points[label];
    }
    return out;
}

double rrc_pulse(double t, double rho) {
    if (std::abs(t) < 1e-12) return 1.0 - rho + 4.0 * rho / kPi;
    const double x = 4.0 * rho * t;
    if (std::abs(1.0 - x * x) < 1e-9) {
        const double a = kPi / (4.0 * rho);
        return rho / std::numbers::sqrt2 *
               ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
    }
    const double num = std::sin(kPi * t * (1.0 - rho)) + x * std::cos(kPi * t * (1.0 + rho));
    return num / (kPi * t * (1.0 - x * x));
}

int RrcFilter::grid_sps() const { return static_cast<int>(std::lround(sps)); }

double RrcFilter::evaluate(double t_symbols) const {
    if (std::abs(t_symbols) > 0.5 * span_symbols + 1e-12) return 0.0;
    return scale * rrc_pulse(t_symbols, rho);
}

RrcFilter rrc_taps(double rho, double sps, int span_symbols) {
    if (!(rho > 0.0 && rho < 1.0))
        throw ParameterError("rrc_taps: roll-off must lie in (0, 1), got " + std::to_string(rho));
    if (!(sps >= 2.0)) throw ParameterError("rrc_taps: sps must be >= 2, got " + std::to_string(sps));
    if (span_symbols < 4)
        throw ParameterError("rrc_taps: span must be >= 4 symbols, got " + std::to_string(span_symbols));

    RrcFilter f;
    f.rho = rho;
    f.sps = sps;
    f.span_symbols = span_symbols;
    const int grid = f.grid_sps();
    const int count = span_symbols * grid + 1;
    const int centre = count / 2;
    f.taps.resize(static_cast<std::size_t>(count));
    double energy = 0.0;
    for (int k = 0; k < count; ++k) {
        const double v = rrc_pulse(static_cast<double>(k - centre) / grid, rho);
        f.taps[static_cast<std::size_t>(k)] = v;
        energy += v * v;
    }
    f.scale = 1.0 / std::sqrt(energy);
    for (auto& v : f.taps) v *= f.scale;
    // Enforce exact even symmetry against rounding in the closed form.
    for (int k = 0; k < centre; ++k) {
        const double avg = 0.5 * (f.taps[k] + f.taps[count - 1 - k]);
        f.taps[k] = f.taps[count - 1 - k] = avg;
    }
    return f;
}

ComplexSignal synthesize_baseband(const SymbolSequence& symbols, const RrcFilter& filter,
                                  double epsilon, double sample_rate) {
    if (symbols.empty()) throw ParameterError("synthesize_baseband: empty symbol sequence");
    if (!(std::abs(epsilon) < 1.0))
        throw ParameterError("synthesize_baseband: |epsilon| must be < 1, got " + std::to_string(epsilon));

    const double sps = filter.sps;
    const double half_span = 0.5 * filter.span_symbols;
    const auto n_sym = static_cast<double>(symbols.size());
    const auto length = static_cast<std::size_t>(std::floor((n_sym - 1.0 + filter.span_symbols) * sps + 1e-9)) + 1;

    ComplexSignal out;
    out.sample_rate = sample_rate;
    out.samples.assign(length, cplx{});
    const auto last = static_cast<long>(symbols.size()) - 1;
    for (std::size_t k = 0; k < length; ++k) {
        // Time in symbols relative to the first pulse centre.
        const double tau = static_cast<double>(k) / sps - half_span - epsilon;
        const long n_lo = std::max(0L, static_cast<long>(std::ceil(tau - half_span - 1e-12)));
        const long n_hi = std::min(last, static_cast<long>(std::floor(tau + half_span + 1e-12)));
        cplx acc{};
        for (long n = n_lo; n <= n_hi; ++n) acc += symbols[static_cast<std::size_t>(n)] * filter.evaluate(tau - n);
        out.samples[k] = acc;
    }
    return out;
}

ComplexSignal upconvert(const ComplexSignal& x, double carrier, double occupied_bandwidth) {
    const double half = 0.5 * occupied_bandwidth;
    const double nyquist = 0.5 * x.sample_rate;
    if (carrier != 0.0 || occupied_bandwidth > 0.0) {
        if (carrier + half >= nyquist) {
            std::ostringstream msg;
            msg << "upconvert: upper band edge f_c + B/2 = " << carrier + half
                << " must be below f_s/2 = " << nyquist;
            throw ParameterError(msg.str());
        }
        if (carrier != 0.0 && carrier - half <= 0.0) {
            std::ostringstream msg;
            msg << "upconvert: lower band edge f_c - B/2 = " << carrier - half << " must be above 0";
            throw ParameterError(msg.str());
        }
    }
    ComplexSignal out = x;
    if (carrier == 0.0) return out;
    const double step = carrier / x.sample_rate;
    for (std::size_t k = 0; k < out.size(); ++k) out.samples[k] *= rotation(step, k);
    return out;
}

ComplexSignal add_awgn(const ComplexSignal& x, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0) return x;
    require_nonempty(x, "add_awgn");
    const double power = mean_power(x);
    if (!(power > 0.0)) throw ParameterError("add_awgn: signal has zero power");
    const double sigma = std::sqrt(0.5 * power / std::pow(10.0, snr_db / 10.0));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    ComplexSignal out = x;
    for (auto& s : out.samples) {
        const double re = normal(rng);
        const double im = normal(rng);
        s += cplx(re, im);
    }
    return out;
}

ComplexSignal apply_carrier_impairment(const ComplexSignal& x, double freq_offset, double phase_offset) {
    ComplexSignal out = x;
    if (freq_offset == 0.0 && phase_offset == 0.0) return out;
    const double step = freq_offset / x.sample_rate;
    for (std::size_t k = 0; k < out.size(); ++k) out.samples[k] *= rotation(step, k, phase_offset);
    return out;
}

void SignalParams::validate() const {
    auto fail = [](const std::string& what) { throw ParameterError("SignalParams: " + what); };
    if (!(sample_rate > 0.0)) fail("sample rate must be positive");
    if (!(symbol_rate > 0.0)) fail("symbol rate must be positive");
    if (!(rho > 0.0 && rho < 1.0)) fail("roll-off must lie in (0, 1)");
    if (!(std::abs(phase_offset) < kPi)) fail("|theta_e| must be < pi");
    if (!(std::abs(freq_offset) < symbol_rate)) fail("|f_e| must be below the symbol rate");
    if (!(std::abs(timing_error) < 1.0)) fail("|epsilon| must be < 1");
    if (!(carrier + 0.5 * bandwidth() < 0.5 * sample_rate)) fail("f_c + B/2 must be below f_s/2");
    if (!(carrier - 0.5 * bandwidth() > 0.0)) fail("f_c - B/2 must be above 0");
    if (!(sps() >= 2.0)) fail("sample rate must be at least twice the symbol rate");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
    // splitmix64 finaliser over a combined key.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(master) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

ComplexSignal synthesize_rf(const SignalParams& params, ModulationScheme scheme,
                            std::size_t num_samples, std::uint64_t seed, int span_symbols) {
    params.validate();
    if (num_samples == 0) throw ParameterError("synthesize_rf: num_samples must be positive");
    const double sps = params.sps();
    // Skip the ramp-up of the first span so every kept sample is steady state.
    const auto skip = static_cast<std::size_t>(std::ceil(span_symbols * sps));
    const auto n_sym = static_cast<std::size_t>(std::ceil(static_cast<double>(num_samples + skip) / sps)) + 1;

    std::mt19937_64 bit_rng(derive_seed(seed, 0, 1));
    std::vector<std::uint8_t> bits(n_sym * static_cast<std::size_t>(scheme.bits_per_symbol()));
    for (auto& b : bits) b = static_cast<std::uint8_t>(bit_rng() >> 63);

    const auto filter = rrc_taps(params.rho, sps, span_symbols);
    auto base = synthesize_baseband(map_symbols(bits, scheme), filter, params.timing_error, params.sample_rate);
    base.samples.erase(base.samples.begin(), base.samples.begin() + static_cast<std::ptrdiff_t>(skip));
    base.samples.resize(num_samples);

    auto impaired = apply_carrier_impairment(base, params.freq_offset, params.phase_offset);
    auto rf = upconvert(impaired, params.carrier, params.bandwidth());
    return add_awgn(rf, params.snr_db, derive_seed(seed, 0, 2));
}

}  // namespace blindmod
