#pragma once

#include <complex>
#include <vector>

namespace blindmod {

using cplx = std::complex<double>;

/// Uniformly sampled complex sequence. Frequencies elsewhere in the library
/// are expressed in the same unit as `sample_rate`.
struct ComplexSignal {
    std::vector<cplx> samples;
    double sample_rate = 1.0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

/// Mean of |x|^2 over all samples (0 for an empty signal).
double mean_power(const ComplexSignal& x);

/// True when every sample is finite.
bool all_finite(const ComplexSignal& x);

}  // namespace blindmod
