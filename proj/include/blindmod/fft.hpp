#pragma once

#include <vector>

#include "blindmod/signal.hpp"

namespace blindmod {

/// Forward DFT X[k] = sum_n x[n] exp(-j 2 pi n k / N), backed by FFTW.
/// Safe to call from several threads.
std::vector<cplx> fft(const std::vector<cplx>& x);

}  // namespace blindmod
