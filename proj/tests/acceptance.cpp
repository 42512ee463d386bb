// Acceptance suite: one pass/fail line per criterion, tolerances and runtime
// budgets enforced as stated. Exit code 0 only if every criterion holds.
#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cassikit/io.hpp"
#include "cassikit/metrics.hpp"
#include "cassikit/nn.hpp"
#include "cassikit/pipeline.hpp"
#include "cassikit/priors.hpp"
#include "cassikit/random.hpp"
#include "cassikit/selfcheck.hpp"
#include "cassikit/solver.hpp"
#include "cassikit/ssm.hpp"
#include "cassikit/tensor.hpp"

using namespace cassikit;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int g_failures = 0;

void criterion(int number, const std::string& title, double time_budget_s,
               const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = fn();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = out.pass;
    std::string note = out.detail;
    if (time_budget_s > 0.0 && elapsed >= time_budget_s) {
        pass = false;
        note += " [over time budget]";
    }
    std::printf("%s criterion %2d: %s - %s (%.2f s)\n", pass ? "PASS" : "FAIL", number,
                title.c_str(), note.c_str(), elapsed);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

HsiCube random_cube(int w, int h, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    HsiCube cube(w, h, c);
    for (double& v : cube.data) v = rng.uniform(lo, hi);
    return cube;
}

SensingOperator random_operator(int w, int h, int c, int step, Rng& rng) {
    CodedAperture mask(w, h);
    for (double& v : mask.values) v = rng.unit() < 0.5 ? 1.0 : 0.0;
    return SensingOperator(std::move(mask), step, c);
}

// ---------------------------------------------------------------- criteria

Outcome adjoint_correctness() {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(1001, "adj" + std::to_string(trial)));
        const int w = rng.uniform_int(2, 16), h = rng.uniform_int(2, 16);
        const int c = rng.uniform_int(1, 8), step = rng.uniform_int(0, 3);
        SensingOperator op = random_operator(w, h, c, step, rng);
        HsiCube x = random_cube(w, h, c, rng);
        Measurement y(w, op.shifted_height());
        for (double& v : y.values) v = rng.uniform(-1.0, 1.0);
        const double lhs = dot(op.forward(x), y);
        const double rhs = dot(x, op.adjoint(y));
        worst = std::max(worst, std::abs(lhs - rhs) /
                                    std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
    }
    return {worst <= 1e-10, "100 configs, worst relative gap " + fmt(worst)};
}

Outcome data_step_exactness() {
    const int shapes[][3] = {{2, 2, 1}, {3, 4, 2}, {4, 3, 3}, {5, 5, 4},
                             {8, 8, 4}, {8, 6, 3}, {6, 8, 2}, {7, 5, 4}};
    double worst = 0.0;
    for (const auto& s : shapes)
        for (double mu : {0.01, 1.0, 100.0})
            for (int trial = 0; trial < 20; ++trial) {
                Rng rng(derive_seed(1002, std::to_string(s[0] * 100 + s[1] * 10 + s[2]) +
                                              fmt(mu) + std::to_string(trial)));
                SensingOperator op = random_operator(s[0], s[1], s[2], trial % 3, rng);
                HsiCube z_hat = random_cube(s[0], s[1], s[2], rng);
                Measurement y(s[0], op.shifted_height());
                for (double& v : y.values) v = rng.uniform(-1.0, 1.0);

                Eigen::MatrixXd a = op.densify();
                Eigen::MatrixXd lhs = a.transpose() * a;
                lhs.diagonal().array() += mu;
                Eigen::VectorXd expect =
                    lhs.ldlt().solve(a.transpose() * vec(y) + mu * vec(z_hat));
                Eigen::VectorXd got = vec(data_step(op, y, z_hat, mu));
                worst = std::max(worst,
                                 (got - expect).norm() / std::max(expect.norm(), 1e-300));
            }
    return {worst <= 1e-8, "480 dense solves, worst relative gap " + fmt(worst)};
}

Outcome gram_structure() {
    double worst_off = 0.0, worst_diag = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng(derive_seed(1003, "gram" + std::to_string(trial)));
        const int w = rng.uniform_int(2, 6), h = rng.uniform_int(2, 6);
        const int c = rng.uniform_int(1, 4), step = rng.uniform_int(0, 2);
        CodedAperture mask(w, h);
        for (double& v : mask.values)
            v = trial % 2 ? rng.unit() : (rng.unit() < 0.5 ? 1.0 : 0.0);
        SensingOperator op(mask, step, c);

        Eigen::MatrixXd a = op.densify();
        Eigen::MatrixXd gram = a * a.transpose();
        const std::vector<double>& diag = op.phi_phit_diag();
        for (Eigen::Index i = 0; i < gram.rows(); ++i)
            for (Eigen::Index j = 0; j < gram.cols(); ++j) {
                if (i == j)
                    worst_diag = std::max(
                        worst_diag, std::abs(gram(i, j) - diag[static_cast<std::size_t>(i)]));
                else
                    worst_off = std::max(worst_off, std::abs(gram(i, j)));
            }
    }
    const bool pass = worst_off == 0.0 && worst_diag <= 1e-12;
    return {pass, "off-diagonal max " + fmt(worst_off) + ", diagonal gap " + fmt(worst_diag)};
}

Outcome acceleration_property() {
    const double mu = 10.0, tau = 0.1, lambda = tau / mu, tol = 1e-6;
    const int cap = 1000, trials = 50;
    int wins = 0;
    std::vector<double> reductions;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(derive_seed(1004, "acc" + std::to_string(trial)));
        SensingOperator op = random_operator(8, 8, 3, 1, rng);
        HsiCube truth = random_cube(8, 8, 3, rng, 0.0, 1.0);
        Measurement y = op.forward(truth);

        Eigen::MatrixXd a = op.densify();
        Eigen::MatrixXd lhs = a.transpose() * a;
        lhs.diagonal().array() += mu * lambda / (1.0 + lambda);
        Eigen::VectorXd x_star = lhs.ldlt().solve(a.transpose() * vec(y));
        const double scale = x_star.norm();

        auto stages_needed = [&](BetaMode mode) {
            QuadraticProx prox(lambda);
            SolverConfig cfg;
            cfg.stages = cap;
            cfg.mu_schedule = SolverConfig::constant_schedule(cap, mu);
            cfg.eta_schedule = SolverConfig::constant_schedule(cap, 0.0);
            cfg.beta_mode = mode;
            int reached = cap;
            auto obs = [&](int stage, const HsiCube& x) {
                if (reached < cap) return;
                if ((vec(x) - x_star).norm() / scale <= tol) reached = stage + 1;
            };
            run(cfg, op, y, prox, obs);
            return reached;
        };
        const int k_zero = stages_needed(BetaMode::zero);
        const int k_nest = stages_needed(BetaMode::nesterov);
        if (k_nest <= k_zero) ++wins;
        reductions.push_back(1.0 - static_cast<double>(k_nest) / k_zero);
    }
    std::sort(reductions.begin(), reductions.end());
    const double median = reductions[reductions.size() / 2];
    const double rate = static_cast<double>(wins) / trials;
    return {rate >= 0.9 && median >= 0.2,
            "win rate " + fmt(rate) + ", median stage reduction " + fmt(median)};
}

Outcome scan_kernel() {
    // chunked vs sequential over the stated grid
    double worst_chunk = 0.0;
    for (int len : {1, 7, 64, 257}) {
        SsmParams p = SsmParams::seeded(3, 4, 2, derive_seed(1005, "p" + std::to_string(len)));
        Rng rng(derive_seed(1005, "s" + std::to_string(len)));
        Sequence seq;
        seq.length = len;
        seq.feature_dim = 3;
        seq.data.resize(static_cast<std::size_t>(len) * 3);
        for (double& v : seq.data) v = rng.uniform(-1.0, 1.0);
        Sequence base = selective_scan(p, seq);
        for (int chunk : {1, 16, len}) {
            Sequence got = selective_scan_chunked(p, seq, chunk);
            double diff = 0.0, scale = 1e-300;
            for (std::size_t i = 0; i < base.data.size(); ++i) {
                diff = std::max(diff, std::abs(base.data[i] - got.data[i]));
                scale = std::max({scale, std::abs(base.data[i]), std::abs(got.data[i])});
            }
            worst_chunk = std::max(worst_chunk, diff / scale);
        }
    }

    // analytic backward vs central finite differences, 20 instances
    const double h = 1e-5;
    double worst_grad = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        SsmParams p = SsmParams::seeded(2, 3, 2, derive_seed(1006, std::to_string(trial)));
        Rng rng(derive_seed(1007, std::to_string(trial)));
        Sequence seq;
        seq.length = 8;
        seq.feature_dim = 2;
        seq.data.resize(16);
        for (double& v : seq.data) v = rng.uniform(-1.0, 1.0);
        Sequence g = seq;
        for (double& v : g.data) v = rng.uniform(-1.0, 1.0);

        auto loss = [&]() {
            Sequence y = selective_scan(p, seq);
            double acc = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i) acc += g.data[i] * y.data[i];
            return acc;
        };
        auto fd_of = [&](std::vector<double>& block) {
            std::vector<double> fd(block.size());
            for (std::size_t i = 0; i < block.size(); ++i) {
                const double keep = block[i];
                block[i] = keep + h;
                const double up = loss();
                block[i] = keep - h;
                const double dn = loss();
                block[i] = keep;
                fd[i] = (up - dn) / (2.0 * h);
            }
            return fd;
        };
        auto gap = [](const std::vector<double>& a, const std::vector<double>& f) {
            double na = 0.0, nf = 0.0, nd = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                na += a[i] * a[i];
                nf += f[i] * f[i];
                nd += (a[i] - f[i]) * (a[i] - f[i]);
            }
            return std::sqrt(nd) / std::max({std::sqrt(na), std::sqrt(nf), 1e-8});
        };
        ScanGradients grads = scan_backward(p, seq, g);
        worst_grad = std::max(worst_grad, gap(grads.grad_params.a_log, fd_of(p.a_log)));
        worst_grad = std::max(worst_grad, gap(grads.grad_params.d_skip, fd_of(p.d_skip)));
        worst_grad = std::max(worst_grad, gap(grads.grad_params.w_proj, fd_of(p.w_proj)));
        worst_grad = std::max(worst_grad, gap(grads.grad_params.w_dt, fd_of(p.w_dt)));
        worst_grad = std::max(worst_grad, gap(grads.grad_seq.data, fd_of(seq.data)));
    }

    // transition factor range over 1e5 random discretizations
    Rng rng(derive_seed(1008, "abar"));
    bool range_ok = true;
    for (int trial = 0; trial < 100'000 && range_ok; ++trial) {
        SsmParams p =
            SsmParams::seeded(2, 2, 1, derive_seed(1008, std::to_string(trial % 128)));
        DiscretizedStep step =
            discretize(p, {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)});
        for (double a : step.a_bar) range_ok = range_ok && a > 0.0 && a < 1.0;
    }

    const bool pass = worst_chunk <= 1e-12 && worst_grad <= 1e-5 && range_ok;
    return {pass, "chunk gap " + fmt(worst_chunk) + ", gradient gap " + fmt(worst_grad) +
                      ", A_bar in (0,1): " + (range_ok ? "yes" : "no")};
}

Outcome mode_k_and_directions() {
    Rng rng(derive_seed(1009, "modes"));
    bool ok = true;

    const int shapes[][3] = {{2, 3, 4}, {5, 4, 3}, {1, 6, 2}};
    for (const auto& s : shapes) {
        HsiCube x = random_cube(s[0], s[1], s[2], rng);
        for (int k = 1; k <= 3; ++k)
            ok = ok && fold_mode_k(unfold_mode_k(x, k), {x.w, x.h, x.c}, k).data == x.data;
    }

    HsiCube x = random_cube(3, 4, 2, rng);
    for (ScanDirection d : all_scan_directions())
        ok = ok && inverse_sequence(sequence_from_direction(x, d)).data == x.data;

    // brute-force walker on the 2x2x2 cube
    HsiCube tiny(2, 2, 2);
    for (std::size_t i = 0; i < tiny.data.size(); ++i) tiny.data[i] = static_cast<double>(i);
    for (ScanDirection d : all_scan_directions()) {
        std::vector<std::array<int, 2>> order;
        for (int slow = 0; slow < 2; ++slow)
            for (int fast = 0; fast < 2; ++fast) order.push_back({fast, slow});
        if (d.path == 1 || d.path == 3)
            for (auto& o : order) o[0] = 1 - o[0];
        if (d.path == 2 || d.path == 3) std::reverse(order.begin(), order.end());
        Sequence seq = sequence_from_direction(tiny, d);
        for (std::size_t t = 0; t < order.size(); ++t)
            for (int f = 0; f < 2; ++f) {
                int i1, i2, i3;
                switch (d.mode) {
                    case 1: i1 = f; i2 = order[t][0]; i3 = order[t][1]; break;
                    case 2: i1 = order[t][0]; i2 = f; i3 = order[t][1]; break;
                    default: i1 = order[t][0]; i2 = order[t][1]; i3 = f; break;
                }
                ok = ok && seq.at(static_cast<int>(t), f) == tiny.at(i1, i2, i3);
            }
    }
    return {ok, "round trips bit-exact, walker oracle agrees"};
}

Outcome rank_witness() {
    bool ok = true;
    std::string note = "ranks 1..3 recovered in every mode";
    for (int r = 1; r <= 3; ++r) {
        Rng rng(derive_seed(1010, "rank" + std::to_string(r)));
        const int w = 6, h = 7, c = 5;
        auto orthonormal = [&rng](int n, int k) {
            Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(
                n, k, [&rng](Eigen::Index, Eigen::Index) { return rng.gaussian(); });
            return Eigen::MatrixXd(Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ() *
                                   Eigen::MatrixXd::Identity(n, k));
        };
        Eigen::MatrixXd fw = orthonormal(w, r), fh = orthonormal(h, r), fc = orthonormal(c, r);
        HsiCube cube(w, h, c);
        for (int j = 0; j < r; ++j)
            for (int ch = 0; ch < c; ++ch)
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx)
                        cube.at(xx, yy, ch) += fw(xx, j) * fh(yy, j) * fc(ch, j);
        for (int mode = 1; mode <= 3; ++mode) {
            const std::vector<double> s = mode_singular_values(cube, mode);
            int above = 0;
            for (double v : s)
                if (v > 1e-8 * s[0]) ++above;
            if (above != r) {
                ok = false;
                note = "rank " + std::to_string(r) + " mode " + std::to_string(mode) +
                       " reported " + std::to_string(above);
            }
        }
    }
    return {ok, note};
}

Outcome end_to_end_reconstruction() {
    HsiCube scene = synthetic_scene(32, 32, 8, 424242);
    CodedAperture mask = random_binary_mask(32, 32, 0.5, 99);
    SensingOperator op(mask, 1, 8);
    Measurement y = op.simulate_measurement(scene, 0.01, 1);

    SolverConfig cfg;
    cfg.stages = 50;
    cfg.mu_schedule = SolverConfig::constant_schedule(50, 1e-3);
    cfg.eta_schedule = SolverConfig::geometric_schedule(50, 0.05, 0.93);
    cfg.beta_mode = BetaMode::nesterov;
    TvConfig tv;
    tv.variant = TvConfig::Variant::anisotropic;
    TvProx prox(tv);

    HsiCube x0 = initialize(op, y);
    auto [x, state] = run(cfg, op, y, prox);
    const double psnr0 = psnr(scene, x0);
    const double psnr1 = psnr(scene, x);
    const double s = ssim(scene, x);
    return {psnr1 >= psnr0 + 5.0 && s >= 0.85,
            "PSNR " + fmt(psnr0) + " -> " + fmt(psnr1) + " dB, SSIM " + fmt(s)};
}

Outcome neural_blocks() {
    bool ok = true;
    std::string note = "shapes, residual identity, determinism, solver smoke";

    const int shapes[][3] = {{8, 8, 4}, {13, 17, 4}, {32, 32, 8}};
    for (const auto& s : shapes) {
        auto store = std::make_shared<WeightStore>(derive_seed(1011, "w"));
        MmbDenoiser den(store, MmbConfig{});
        Rng rng(derive_seed(1011, "x"));
        HsiCube x = random_cube(s[0], s[1], s[2], rng, 0.0, 1.0);
        HsiCube out = den.denoise(x, 0.05);
        ok = ok && out.w == s[0] && out.h == s[1] && out.c == s[2] && out.all_finite();
    }

    {
        auto store = std::make_shared<WeightStore>(derive_seed(1012, "w"));
        MmbDenoiser den(store, MmbConfig{});
        Rng rng(derive_seed(1012, "x"));
        HsiCube x = random_cube(8, 8, 4, rng, 0.0, 1.0);
        den.zero_output_projections(4);
        ok = ok && den.denoise(x, 0.3).data == x.data;
    }

    {
        Rng rng(derive_seed(1013, "x"));
        HsiCube x = random_cube(9, 10, 4, rng, 0.0, 1.0);
        auto s1 = std::make_shared<WeightStore>(321);
        auto s2 = std::make_shared<WeightStore>(321);
        ok = ok && MmbDenoiser(s1, MmbConfig{}).denoise(x, 0.1).data ==
                       MmbDenoiser(s2, MmbConfig{}).denoise(x, 0.1).data;
    }

    {
        HsiCube scene = synthetic_scene(16, 16, 4, 7);
        CodedAperture mask = random_binary_mask(16, 16, 0.5, 8);
        SensingOperator op(mask, 1, 4);
        Measurement y = op.simulate_measurement(scene, 0.01, 2);
        auto store = std::make_shared<WeightStore>(9);
        MmbDenoiser den(store, MmbConfig{});
        SolverConfig cfg;
        cfg.stages = 3;
        cfg.mu_schedule = SolverConfig::constant_schedule(3, 0.01);
        cfg.eta_schedule = SolverConfig::constant_schedule(3, 0.05);
        auto [x, state] = run(cfg, op, y, den);
        ok = ok && state.k == 3 && x.all_finite();
        for (const auto& rec : state.residual_history)
            ok = ok && std::isfinite(rec.fidelity) && std::isfinite(rec.rel_change);
    }
    return {ok, note};
}

Outcome interfaces() {
    // file-format round trips are exercised by the selfcheck suite below;
    // here we additionally require the suite to pass and to cover 1-9.
    const auto results = run_selfcheck(1);
    bool formats_seen = false;
    std::vector<bool> covered(10, false);
    int failures = 0;
    for (const auto& r : results) {
        if (!r.pass) ++failures;
        if (r.name == "io.format_roundtrip" && r.pass) formats_seen = true;
        for (int c : r.criteria)
            if (c >= 1 && c <= 9) covered[static_cast<std::size_t>(c)] = true;
    }
    bool all_covered = true;
    std::string missing;
    for (int c = 1; c <= 9; ++c)
        if (!covered[static_cast<std::size_t>(c)]) {
            all_covered = false;
            missing += " " + std::to_string(c);
        }
    const bool pass = failures == 0 && formats_seen && all_covered;
    std::string note = "selfcheck " + std::to_string(results.size()) + " checks, " +
                       std::to_string(failures) + " failing";
    if (!all_covered) note += "; uncovered criteria:" + missing;
    return {pass, note};
}

} // namespace

int main() {
    criterion(1, "adjoint correctness", 2.0, adjoint_correctness);
    criterion(2, "closed-form data step equals dense solve", 10.0, data_step_exactness);
    criterion(3, "measurement-space Gram is diagonal", 0.0, gram_structure);
    criterion(4, "momentum accelerates convergence", 30.0, acceleration_property);
    criterion(5, "scan kernel: chunking, backward, transition range", 20.0, scan_kernel);
    criterion(6, "mode-k folds and 12-direction serializations", 0.0, mode_k_and_directions);
    criterion(7, "per-mode rank witness", 0.0, rank_witness);
    criterion(8, "desk-scale TV reconstruction", 60.0, end_to_end_reconstruction);
    criterion(9, "neural blocks", 0.0, neural_blocks);
    criterion(10, "interfaces and selfcheck coverage", 0.0, interfaces);

    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failing\n", g_failures);
    return 1;
}
