#include "blindmod/rbc.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "blindmod/error.hpp"
#include "blindmod/specest.hpp"

namespace blindmod {

LowpassFilter design_lowpass(double cutoff, std::size_t num_taps) {
    if (!(cutoff > 0.0 && cutoff < 0.5))
        throw ParameterError("design_lowpass: cutoff must lie in (0, 0.5), got " + std::to_string(cutoff));
    if (num_taps % 2 == 0) throw ParameterError("design_lowpass: tap count must be odd, got " + std::to_string(num_taps));
    if (num_taps < 31) throw ParameterError("design_lowpass: need at least 31 taps, got " + std::to_string(num_taps));

    const auto window = blackman_window(num_taps);
    const auto centre = static_cast<long>(num_taps / 2);
    LowpassFilter f;
    f.cutoff = cutoff;
    f.taps.resize(num_taps);
    double sum = 0.0;
    for (std::size_t k = 0; k < num_taps; ++k) {
        const double m = static_cast<double>(static_cast<long>(k) - centre);
        const double ideal = m == 0.0 ? 2.0 * cutoff
                                      : std::sin(2.0 * std::numbers::pi * cutoff * m) / (std::numbers::pi * m);
        f.taps[k] = ideal * window[k];
        sum += f.taps[k];
    }
    for (auto& t : f.taps) t /= sum;
    return f;
}

ComplexSignal mix_down(const ComplexSignal& x, double carrier_estimate) {
    ComplexSignal out = x;
    if (carrier_estimate == 0.0) return out;
    const double step = carrier_estimate / x.sample_rate;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double cycles = step * static_cast<double>(k);
        out.samples[k] *= std::polar(1.0, -2.0 * std::numbers::pi * (cycles - std::floor(cycles)));
    }
    return out;
}

ComplexSignal filter_decimate(const ComplexSignal& x, const LowpassFilter& filter, int factor) {
    if (factor < 1) throw ParameterError("filter_decimate: factor must be >= 1");
    if (filter.taps.empty()) throw ParameterError("filter_decimate: empty filter");
    const double bound = 0.5 / factor;
    if (filter.cutoff > bound + 1e-12) {
        std::ostringstream msg;
        msg << "filter_decimate: cutoff " << filter.cutoff << " exceeds the aliasing bound 0.5/" << factor << " = "
            << bound;
        throw ParameterError(msg.str());
    }
    const auto n = static_cast<long>(x.size());
    const auto taps = static_cast<long>(filter.taps.size());
    const long centre = taps / 2;

    ComplexSignal out;
    out.sample_rate = x.sample_rate / factor;
    out.samples.resize(x.size() / static_cast<std::size_t>(factor));
    for (std::size_t m = 0; m < out.size(); ++m) {
        const long k = static_cast<long>(m) * factor;
        // y[k] = sum_j h[j] x[k + centre - j], zero outside [0, n).
        const long j_lo = std::max(0L, k + centre - (n - 1));
        const long j_hi = std::min(taps - 1, k + centre);
        cplx acc{};
        for (long j = j_lo; j <= j_hi; ++j) acc += filter.taps[static_cast<std::size_t>(j)] * x.samples[k + centre - j];
        out.samples[m] = acc;
    }
    return out;
}

std::vector<Frame> extract_frames(const ComplexSignal& x, std::size_t frame_len) {
    if (frame_len == 0) throw ParameterError("extract_frames: frame length must be positive");
    if (x.size() < frame_len) {
        std::ostringstream msg;
        msg << "extract_frames: signal of " << x.size() << " samples is shorter than one frame (" << frame_len << ")";
        throw ParameterError(msg.str());
    }
    std::vector<Frame> frames(x.size() / frame_len);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        double power = 0.0;
        for (std::size_t t = 0; t < frame_len; ++t) power += std::norm(x.samples[f * frame_len + t]);
        power /= static_cast<double>(frame_len);
        if (!(power > 0.0) || !std::isfinite(power))
            throw ParameterError("extract_frames: frame " + std::to_string(f) + " has zero power and cannot be normalised");
        const double gain = 1.0 / std::sqrt(power);
        auto& iq = frames[f].iq;
        iq.resize(2 * frame_len);
        for (std::size_t t = 0; t < frame_len; ++t) {
            const cplx s = x.samples[f * frame_len + t] * gain;
            iq[2 * t] = s.real();
            iq[2 * t + 1] = s.imag();
        }
    }
    return frames;
}

double conversion_cutoff(double bandwidth, double sample_rate, double margin) {
    return 0.5 * bandwidth * margin / sample_rate;
}

ComplexSignal convert_to_baseband(const ComplexSignal& rf, double carrier_estimate, double bandwidth_estimate,
                                  int decimation, std::size_t num_taps, double margin) {
    const auto filter = design_lowpass(conversion_cutoff(bandwidth_estimate, rf.sample_rate, margin), num_taps);
    return filter_decimate(mix_down(rf, carrier_estimate), filter, decimation);
}

}  // namespace blindmod
