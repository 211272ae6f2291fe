#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blindmod/signal.hpp"

namespace blindmod {

enum class Modulation : std::uint8_t { Bpsk, Qpsk, Psk8, Qam16, Qam64, Qam256 };

inline constexpr std::array<Modulation, 6> kAllModulations = {
    Modulation::Bpsk,  Modulation::Qpsk,  Modulation::Psk8,
    Modulation::Qam16, Modulation::Qam64, Modulation::Qam256};

struct ModulationScheme {
    Modulation kind = Modulation::Bpsk;

    int bits_per_symbol() const;
    int order() const { return 1 << bits_per_symbol(); }
    std::string_view name() const;

    /// Parses "BPSK", "QPSK", "8PSK", "16QAM", ... (case-insensitive; the
    /// "PSK8" / "QAM16" spellings are accepted too).
    static ModulationScheme parse(std::string_view text);
};

/// Constellation indexed by the Gray-coded bit label (MSB first). Unit
/// average power.
const std::vector<cplx>& constellation(ModulationScheme scheme);

using SymbolSequence = std::vector<cplx>;

/// Gray-coded mapping of a bit stream (one bit per byte, values 0/1).
SymbolSequence map_symbols(std::span<const std::uint8_t> bits, ModulationScheme scheme);

/// Root-raised-cosine pulse sampled on an integer oversampled grid.
///
/// `taps` holds span_symbols * round(sps) + 1 samples centred on the
/// main lobe, scaled to unit energy (the self-convolution peaks at 1).
/// `evaluate` gives the same scaled pulse at any time offset in symbols,
/// which is how fractional sps and timing errors are realised.
struct RrcFilter {
    double rho = 0.35;
    double sps = 8.0;
    int span_symbols = 10;
    std::vector<double> taps;
    double scale = 1.0;

    int grid_sps() const;
    double evaluate(double t_symbols) const;
};

/// Unscaled closed-form RRC impulse response at `t` symbol periods (unit
/// energy in continuous time). Singular points use their analytic limits.
double rrc_pulse(double t, double rho);

RrcFilter rrc_taps(double rho, double sps, int span_symbols = 10);

/// Sum over n of a_n g(k/sps - n - epsilon), offset so that the first
/// pulse starts at sample 0. Output length floor((N - 1 + span) * sps) + 1.
ComplexSignal synthesize_baseband(const SymbolSequence& symbols, const RrcFilter& filter,
                                  double epsilon, double sample_rate = 1.0);

/// Multiplies by exp(j 2 pi f_c k / f_s). `occupied_bandwidth` is used only
/// to check that the shifted band stays inside (0, f_s/2).
ComplexSignal upconvert(const ComplexSignal& x, double carrier, double occupied_bandwidth = 0.0);

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Adds circular complex Gaussian noise with variance P/10^(snr/10) per
/// sample, P being the measured mean power of `x`. `kNoNoise` returns x.
ComplexSignal add_awgn(const ComplexSignal& x, double snr_db, std::uint64_t seed);

/// Multiplies by exp(j (2 pi f_e k / f_s + theta_e)).
ComplexSignal apply_carrier_impairment(const ComplexSignal& x, double freq_offset, double phase_offset);

/// Generation and impairment parameters of one RF-domain signal.
struct SignalParams {
    double carrier = 0.05;
    double symbol_rate = 0.0125;
    double rho = 0.35;
    double sample_rate = 1.0;
    double snr_db = 25.0;
    double freq_offset = 0.0;
    double phase_offset = 0.0;
    double timing_error = 0.0;

    double bandwidth() const { return (1.0 + rho) * symbol_rate; }
    double sps() const { return sample_rate / symbol_rate; }
    /// Throws ParameterError describing the first violated constraint.
    void validate() const;
};

/// Random bits -> symbols -> RRC shaping -> carrier impairment -> upconvert
/// -> AWGN. Produces at least `num_samples` samples (truncated to exactly
/// that many). Fully determined by (params, scheme, num_samples, seed).
ComplexSignal synthesize_rf(const SignalParams& params, ModulationScheme scheme,
                            std::size_t num_samples, std::uint64_t seed, int span_symbols = 10);

/// Derives an independent stream seed from a master seed and an index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0);

}  // namespace blindmod
