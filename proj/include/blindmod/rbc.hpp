#pragma once

#include <cstddef>
#include <vector>

#include "blindmod/signal.hpp"

namespace blindmod {

/// Linear-phase FIR low-pass. `cutoff` is a fraction of the sample rate.
struct LowpassFilter {
    std::vector<double> taps;
    double cutoff = 0.0;

    std::size_t num_taps() const { return taps.size(); }
};

/// Fixed-length I/Q frame stored as interleaved (I, Q) pairs, one row per
/// time step.
struct Frame {
    std::vector<double> iq;

    std::size_t length() const { return iq.size() / 2; }
    double i(std::size_t t) const { return iq[2 * t]; }
    double q(std::size_t t) const { return iq[2 * t + 1]; }
};

inline constexpr std::size_t kDefaultFrameLength = 128;
inline constexpr std::size_t kDefaultFilterTaps = 255;
inline constexpr double kDefaultCutoffMargin = 1.25;

/// Blackman-windowed sinc, normalised to unity DC gain.
LowpassFilter design_lowpass(double cutoff, std::size_t num_taps);

/// Multiplies by exp(-j 2 pi f_c k / f_s).
ComplexSignal mix_down(const ComplexSignal& x, double carrier_estimate);

/// Same-length zero-padded convolution followed by keeping every
/// `factor`-th sample (starting at sample 0).
ComplexSignal filter_decimate(const ComplexSignal& x, const LowpassFilter& filter, int factor);

/// Non-overlapping frames, each scaled to unit mean I^2 + Q^2. A trailing
/// partial frame is dropped.
std::vector<Frame> extract_frames(const ComplexSignal& x, std::size_t frame_len = kDefaultFrameLength);

/// Normalised low-pass cutoff used ahead of decimation: (B/2) * margin / f_s.
double conversion_cutoff(double bandwidth, double sample_rate, double margin = kDefaultCutoffMargin);

/// mix_down -> design_lowpass -> filter_decimate with the given estimates.
ComplexSignal convert_to_baseband(const ComplexSignal& rf, double carrier_estimate, double bandwidth_estimate,
                                  int decimation, std::size_t num_taps = kDefaultFilterTaps,
                                  double margin = kDefaultCutoffMargin);

}  // namespace blindmod
