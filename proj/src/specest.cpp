#include "blindmod/specest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "blindmod/error.hpp"
#include "blindmod/fft.hpp"

namespace blindmod {

namespace {
constexpr double kPowerFloor = 1e-30;
}

std::vector<double> blackman_window(std::size_t n_fft) {
    if (n_fft < 4) throw ParameterError("blackman_window: N must be >= 4, got " + std::to_string(n_fft));
    std::vector<double> w(n_fft);
    const double denom = static_cast<double>(n_fft - 1);
    for (std::size_t n = 0; n < n_fft; ++n) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(n) / denom;
        w[n] = -0.5 * std::cos(a) + 0.42 + 0.08 * std::cos(2.0 * a);
    }
    // Exact symmetry; cos(2 pi (N-1-n)/(N-1)) rounds differently from cos(2 pi n/(N-1)).
    for (std::size_t n = 0; n < n_fft / 2; ++n) w[n_fft - 1 - n] = w[n];
    return w;
}

PowerSpectrum averaged_periodogram(const ComplexSignal& x, std::size_t n_fft) {
    const auto window = blackman_window(n_fft);
    if (x.size() < n_fft) {
        std::ostringstream msg;
        msg << "averaged_periodogram: need at least " << n_fft << " samples for one segment, got " << x.size();
        throw ParameterError(msg.str());
    }
    PowerSpectrum spec;
    spec.n_fft = n_fft;
    spec.sample_rate = x.sample_rate;
    spec.segments_used = x.size() / n_fft;

    std::vector<double> acc(n_fft, 0.0);
    std::vector<cplx> segment(n_fft);
    for (std::size_t s = 0; s < spec.segments_used; ++s) {
        for (std::size_t n = 0; n < n_fft; ++n) segment[n] = x.samples[s * n_fft + n] * window[n];
        const auto spectrum = fft(segment);
        for (std::size_t k = 0; k < n_fft; ++k) acc[k] += std::norm(spectrum[k]);
    }
    const double scale = 1.0 / (static_cast<double>(n_fft) * static_cast<double>(spec.segments_used));
    spec.p_db.resize(n_fft);
    for (std::size_t k = 0; k < n_fft; ++k) spec.p_db[k] = 10.0 * std::log10(std::max(acc[k] * scale, kPowerFloor));
    return spec;
}

double estimate_noise_floor(const PowerSpectrum& spec, std::size_t n_bins) {
    if (n_bins < 10) throw ParameterError("estimate_noise_floor: need at least 10 histogram cells");
    if (spec.p_db.empty()) throw ParameterError("estimate_noise_floor: empty spectrum");
    const auto [lo_it, hi_it] = std::minmax_element(spec.p_db.begin(), spec.p_db.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi - lo < 1e-9) return lo;

    const double width = (hi - lo) / static_cast<double>(n_bins);
    std::vector<std::size_t> counts(n_bins, 0);
    for (double p : spec.p_db) {
        auto cell = static_cast<std::size_t>((p - lo) / width);
        counts[std::min(cell, n_bins - 1)]++;
    }
    // max_element returns the first maximum, i.e. the lowest modal cell.
    const auto mode = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return lo + (static_cast<double>(mode) + 0.5) * width;
}

BandEstimate detect_band(const PowerSpectrum& spec, double noise_floor_db) {
    const auto& p = spec.p_db;
    if (p.empty()) throw ParameterError("detect_band: empty spectrum");
    const auto peak_it = std::max_element(p.begin(), p.end());
    const double peak = *peak_it;
    if (!(noise_floor_db < peak)) throw ParameterError("detect_band: noise floor must lie below the spectral peak");

    BandEstimate band;
    band.noise_floor_db = noise_floor_db;
    band.peak_db = peak;
    band.threshold_db = 0.5 * (noise_floor_db + peak);

    auto lo = static_cast<std::size_t>(peak_it - p.begin());
    auto hi = lo;
    while (lo > 0 && p[lo - 1] >= band.threshold_db) --lo;
    while (hi + 1 < p.size() && p[hi + 1] >= band.threshold_db) ++hi;
    if (lo == 0 && hi + 1 == p.size())
        throw DegenerateResultError("detect_band: band fills spectrum (every bin is above the threshold)");

    band.band_start = lo + 1;
    band.band_end = hi + 1;
    band.band_width_bins = hi - lo + 1;
    band.center_bin = (band.band_start + band.band_end + 1) / 2;
    return band;
}

double estimate_bandwidth(const BandEstimate& band, const PowerSpectrum& spec) {
    if (band.band_width_bins < 1) throw ParameterError("estimate_bandwidth: empty band");
    return spec.sample_rate * static_cast<double>(band.band_width_bins) / static_cast<double>(spec.n_fft);
}

double estimate_carrier(const BandEstimate& band, const PowerSpectrum& spec) {
    if (band.band_width_bins < 1 || band.band_start < 1 || band.band_end > spec.n_fft)
        throw ParameterError("estimate_carrier: invalid band indices");
    if (band.band_start == 1 || band.band_end == spec.n_fft)
        throw DegenerateResultError("estimate_carrier: band touches the spectrum edge (wraparound)");
    return static_cast<double>(band.center_bin - 1) / static_cast<double>(spec.n_fft) * spec.sample_rate;
}

double estimate_sps(double bandwidth, double rho, double baseband_rate) {
    if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("estimate_sps: roll-off must lie in (0, 1)");
    if (!(bandwidth > 0.0)) throw ParameterError("estimate_sps: bandwidth must be positive");
    const double symbol_rate = bandwidth / (1.0 + rho);
    return baseband_rate / symbol_rate;
}

BandEstimate estimate_parameters(const ComplexSignal& x, const EstimatorConfig& config,
                                 PowerSpectrum* spectrum_out) {
    if (config.decimation < 1) throw ParameterError("estimate_parameters: decimation must be >= 1");
    auto spec = averaged_periodogram(x, config.n_fft);
    const double floor_db = estimate_noise_floor(spec, config.histogram_bins);
    auto band = detect_band(spec, floor_db);
    band.bandwidth = estimate_bandwidth(band, spec);
    band.carrier = estimate_carrier(band, spec);
    band.sps = estimate_sps(band.bandwidth, config.assumed_rolloff, spec.sample_rate / config.decimation);
    if (spectrum_out) *spectrum_out = std::move(spec);
    return band;
}

void write_spectrum_csv(std::ostream& os, const PowerSpectrum& spec) {
    os << "bin_index,frequency,power_db\n";
    const auto old_precision = os.precision(12);
    for (std::size_t k = 0; k < spec.p_db.size(); ++k)
        os << k + 1 << ',' << spec.bin_frequency(k) << ',' << spec.p_db[k] << '\n';
    os.precision(old_precision);
}

}  // namespace blindmod
