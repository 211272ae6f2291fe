#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "blindmod/signal.hpp"

namespace blindmod {

/// Averaged periodogram in dB. Bin n (0-based) sits at frequency n f_s / N.
struct PowerSpectrum {
    std::vector<double> p_db;
    std::size_t n_fft = 0;
    std::size_t segments_used = 0;
    double sample_rate = 1.0;

    double bin_frequency(std::size_t index0) const {
        return static_cast<double>(index0) * sample_rate / static_cast<double>(n_fft);
    }
};

/// Occupied band and the parameters derived from it. Bin indices are
/// 1-based: index n covers frequency (n - 1) f_s / N.
struct BandEstimate {
    double noise_floor_db = 0.0;
    double peak_db = 0.0;
    double threshold_db = 0.0;
    std::size_t band_start = 0;
    std::size_t band_end = 0;
    std::size_t band_width_bins = 0;
    std::size_t center_bin = 0;
    double bandwidth = 0.0;
    double carrier = 0.0;
    double sps = 0.0;
};

inline constexpr std::size_t kDefaultNfft = 1024;
inline constexpr std::size_t kDefaultHistogramBins = 100;
inline constexpr double kDefaultAssumedRolloff = 0.35;

/// Blackman window, w(n) = 0.42 - 0.5 cos(2 pi n/(N-1)) + 0.08 cos(4 pi n/(N-1)).
std::vector<double> blackman_window(std::size_t n_fft);

/// Splits x into floor(L/N) non-overlapping segments, windows each one,
/// averages |DFT|^2 / N across segments and converts to dB. Trailing
/// samples that do not fill a segment are ignored.
PowerSpectrum averaged_periodogram(const ComplexSignal& x, std::size_t n_fft = kDefaultNfft);

/// Histogram mode of the spectrum: the midpoint of the most populated of
/// `n_bins` equal cells spanning [min, max]. Ties go to the lower cell.
double estimate_noise_floor(const PowerSpectrum& spec, std::size_t n_bins = kDefaultHistogramBins);

/// Contiguous run of bins at or above (P_v + P_max)/2 that contains the
/// spectral peak. Only the index fields (and levels) are populated.
BandEstimate detect_band(const PowerSpectrum& spec, double noise_floor_db);

/// B = f_s M / N.
double estimate_bandwidth(const BandEstimate& band, const PowerSpectrum& spec);

/// f_c = (N_c - 1) f_s / N. Throws if the band touches either spectrum edge.
double estimate_carrier(const BandEstimate& band, const PowerSpectrum& spec);

/// sps = f_s_baseband / (B / (1 + rho)); not rounded.
double estimate_sps(double bandwidth, double rho, double baseband_rate);

struct EstimatorConfig {
    std::size_t n_fft = kDefaultNfft;
    std::size_t histogram_bins = kDefaultHistogramBins;
    double assumed_rolloff = kDefaultAssumedRolloff;
    int decimation = 10;
};

/// Runs the whole estimator chain and fills every BandEstimate field.
BandEstimate estimate_parameters(const ComplexSignal& x, const EstimatorConfig& config,
                                 PowerSpectrum* spectrum_out = nullptr);

/// CSV with header `bin_index,frequency,power_db`; bin_index is 1-based.
void write_spectrum_csv(std::ostream& os, const PowerSpectrum& spec);

}  // namespace blindmod
