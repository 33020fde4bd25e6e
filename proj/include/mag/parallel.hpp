#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mag {

// Execution policy for the data-parallel kernels (rollout batches, randomized
// audits, Monte-Carlo evaluation). threads == 1 selects the serial reference
// path; threads == 0 lets OpenMP pick; threads > 1 pins the team size.
//
// Every parallel call site derives one child SeedKey per index and writes
// only its own output slot, so results are identical between the serial and
// OpenMP paths regardless of schedule.
struct ExecPolicy {
    int threads = 1;

    bool serial() const { return threads == 1; }

    static ExecPolicy serial_ref() { return ExecPolicy{1}; }
    static ExecPolicy openmp(int n_threads = 0) { return ExecPolicy{n_threads}; }
};

template <class Body>
void parallel_for(const ExecPolicy& exec, std::size_t n, Body&& body) {
    if (exec.serial()) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
    if (exec.threads > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(exec.threads)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            body(static_cast<std::size_t>(i));
    } else {
#pragma omp parallel for schedule(dynamic, 1)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            body(static_cast<std::size_t>(i));
    }
#else
    for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace mag
