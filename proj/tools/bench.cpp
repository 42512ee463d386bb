// Timing comparison between the OpenMP kernels and their serial references.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cassikit/cassi.hpp"
#include "cassikit/pipeline.hpp"
#include "cassikit/priors.hpp"
#include "cassikit/random.hpp"
#include "cassikit/ssm.hpp"
#include "cassikit/tensor.hpp"

namespace {

using namespace cassikit;

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct Entry {
    std::string name;
    double serial_s;
    double parallel_s;
    double max_diff;
};

template <typename SerialFn, typename ParallelFn, typename DiffFn>
Entry bench(const std::string& name, int reps, SerialFn serial, ParallelFn parallel,
            DiffFn diff) {
    // warm-up, also captures the outputs for the equivalence column
    auto s_out = serial();
    auto p_out = parallel();

    double t0 = now_s();
    for (int i = 0; i < reps; ++i) serial();
    const double t_serial = (now_s() - t0) / reps;

    t0 = now_s();
    for (int i = 0; i < reps; ++i) parallel();
    const double t_parallel = (now_s() - t0) / reps;

    return {name, t_serial, t_parallel, diff(s_out, p_out)};
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif

    Rng rng(7);
    const int w = 256, h = 256, c = 28, step = 2;
    HsiCube cube(w, h, c);
    for (double& v : cube.data) v = rng.unit();
    CodedAperture mask = random_binary_mask(w, h, 0.5, 11);
    SensingOperator op(mask, step, c);
    Measurement y = op.forward(cube);

    std::vector<Entry> entries;

    entries.push_back(bench(
        "cassi.forward", 5, [&] { return ref::forward(op, cube); },
        [&] { return op.forward(cube); },
        [](const Measurement& a, const Measurement& b) { return max_abs_diff(a.values, b.values); }));

    entries.push_back(bench(
        "cassi.adjoint", 5, [&] { return ref::adjoint(op, y); },
        [&] { return op.adjoint(y); },
        [](const HsiCube& a, const HsiCube& b) { return max_abs_diff(a.data, b.data); }));

    for (int mode = 1; mode <= 3; ++mode)
        entries.push_back(bench(
            "tensor.unfold_mode_" + std::to_string(mode), 5,
            [&, mode] { return ref::unfold_mode_k(cube, mode); },
            [&, mode] { return unfold_mode_k(cube, mode); },
            [](const ModeKMatrix& a, const ModeKMatrix& b) { return max_abs_diff(a.data, b.data); }));

    entries.push_back(bench(
        "priors.tv_prox", 2,
        [&] {
            TvConfig cfg;
            return ref::tv_prox(cube, 0.05, cfg);
        },
        [&] {
            TvConfig cfg;
            return tv_prox(cube, 0.05, cfg);
        },
        [](const HsiCube& a, const HsiCube& b) { return max_abs_diff(a.data, b.data); }));

    {
        const int len = 1 << 16, d = 16, n = 16;
        SsmParams params = SsmParams::seeded(d, n, SsmParams::default_dt_rank(d), 3);
        Sequence seq;
        seq.length = len;
        seq.feature_dim = d;
        seq.data.resize(static_cast<std::size_t>(len) * d);
        for (double& v : seq.data) v = rng.uniform(-1.0, 1.0);
        entries.push_back(bench(
            "ssm.scan_L65536", 3, [&] { return selective_scan(params, seq); },
            [&] { return selective_scan_chunked(params, seq, 1024); },
            [](const Sequence& a, const Sequence& b) { return max_abs_diff(a.data, b.data); }));
    }

    std::printf("%-24s %12s %12s %9s %10s\n", "kernel", "serial (s)", "parallel (s)",
                "speedup", "max diff");
    for (const auto& e : entries)
        std::printf("%-24s %12.4f %12.4f %8.2fx %10.2e\n", e.name.c_str(), e.serial_s,
                    e.parallel_s, e.serial_s / e.parallel_s, e.max_diff);
    return 0;
}
