#include "blindmod/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

namespace blindmod {

namespace {

struct PlanCache {
    std::mutex mutex;
    std::map<std::size_t, fftw_plan> plans;

    ~PlanCache() {
        for (auto& [n, plan] : plans) fftw_destroy_plan(plan);
    }

    fftw_plan get(std::size_t n) {
        std::lock_guard lock(mutex);
        if (auto it = plans.find(n); it != plans.end()) return it->second;
        // Planning needs scratch arrays; execution later uses fftw_execute_dft
        // on caller buffers, which is thread-safe.
        auto* in = fftw_alloc_complex(n);
        auto* out = fftw_alloc_complex(n);
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_FORWARD,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        plans.emplace(n, plan);
        return plan;
    }
};

PlanCache& cache() {
    static PlanCache instance;
    return instance;
}

}  // namespace

std::vector<cplx> fft(const std::vector<cplx>& x) {
    std::vector<cplx> in = x;
    std::vector<cplx> out(x.size());
    if (x.empty()) return out;
    fftw_plan plan = cache().get(x.size());
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

}  // namespace blindmod
