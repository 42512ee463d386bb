#include "cassikit/selfcheck.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cassikit/io.hpp"
#include "cassikit/metrics.hpp"
#include "cassikit/nn.hpp"
#include "cassikit/pipeline.hpp"
#include "cassikit/priors.hpp"
#include "cassikit/random.hpp"
#include "cassikit/solver.hpp"
#include "cassikit/ssm.hpp"
#include "cassikit/tensor.hpp"

namespace cassikit {

namespace {

HsiCube random_cube(int w, int h, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
    HsiCube cube(w, h, c);
    for (double& v : cube.data) v = rng.uniform(lo, hi);
    return cube;
}

Measurement random_measurement(int w, int h, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Measurement m(w, h);
    for (double& v : m.values) v = rng.uniform(lo, hi);
    return m;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

double rel_linf(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, scale = 1e-300;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return diff / scale;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------------- tensor

CheckResult check_mode_roundtrip(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "roundtrip"));
    const int shapes[][3] = {{2, 3, 4}, {5, 4, 3}, {1, 6, 2}, {4, 4, 4}, {3, 1, 5}};
    bool ok = true;
    for (const auto& s : shapes) {
        HsiCube x = random_cube(s[0], s[1], s[2], rng, -1.0, 1.0);
        for (int k = 1; k <= 3 && ok; ++k) {
            ModeKMatrix m = unfold_mode_k(x, k);
            ok = ok && m.data == ref::unfold_mode_k(x, k).data;
            HsiCube back = fold_mode_k(m, {x.w, x.h, x.c}, k);
            ok = ok && back.data == x.data;
        }
    }
    return {"tensor.mode_roundtrip", ok, "fold(unfold) bit-exact, modes 1-3", {6}};
}

CheckResult check_unfold_multiset(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "multiset"));
    HsiCube x = random_cube(4, 5, 3, rng, -2.0, 2.0);
    std::vector<double> base = x.data;
    std::sort(base.begin(), base.end());
    bool ok = true;
    for (int k = 1; k <= 3; ++k) {
        std::vector<double> vals = unfold_mode_k(x, k).data;
        std::sort(vals.begin(), vals.end());
        ok = ok && vals == base;
    }
    return {"tensor.unfold_multiset", ok, "value multiset preserved by matricization", {}};
}

CheckResult check_shift_adjoint(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "shift"));
    double worst = 0.0;
    bool ok = true;
    for (int step : {0, 1, 2}) {
        HsiCube x = random_cube(4, 5, 3, rng, -1.0, 1.0);
        HsiCube y(4, 5 + step * 2, 3);
        for (double& v : y.data) v = rng.uniform(-1.0, 1.0);
        HsiCube sx = shift_cube(x, step);
        HsiCube uy = unshift_cube(y, step, 5);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < sx.data.size(); ++i) lhs += sx.data[i] * y.data[i];
        for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * uy.data[i];
        worst = std::max(worst, rel_err(lhs, rhs));
        ok = ok && unshift_cube(sx, step, x.h).data == x.data;
        ok = ok && sx.data == ref::shift_cube(x, step).data;
    }
    ok = ok && worst <= 1e-12;
    return {"tensor.shift_adjoint", ok, "dot-product gap " + fmt(worst), {}};
}

CheckResult check_svd_covariance(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "svdcov"));
    HsiCube x = random_cube(5, 4, 3, rng, -1.0, 1.0);
    HsiCube xt(x.h, x.w, x.c);
    for (int ch = 0; ch < x.c; ++ch)
        for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx) xt.at(yy, xx, ch) = x.at(xx, yy, ch);
    const bool ok = mode_singular_values(x, 1) == mode_singular_values(xt, 2) &&
                    mode_singular_values(x, 2) == mode_singular_values(xt, 1);
    return {"tensor.svd_covariance", ok, "W-H transpose swaps mode-1/2 spectra exactly", {}};
}

CheckResult check_rank_witness(std::uint64_t seed) {
    bool ok = true;
    std::string detail;
    for (int r = 1; r <= 3; ++r) {
        const int w = 6, h = 7, c = 5;
        // orthonormal factors per mode keep the rank exactly r in every mode
        Rng rng(derive_seed(seed, "rank" + std::to_string(r)));
        Eigen::MatrixXd fw = Eigen::MatrixXd::NullaryExpr(
            w, r, [&rng](Eigen::Index, Eigen::Index) { return rng.gaussian(); });
        Eigen::MatrixXd fh = Eigen::MatrixXd::NullaryExpr(
            h, r, [&rng](Eigen::Index, Eigen::Index) { return rng.gaussian(); });
        Eigen::MatrixXd fc = Eigen::MatrixXd::NullaryExpr(
            c, r, [&rng](Eigen::Index, Eigen::Index) { return rng.gaussian(); });
        fw = Eigen::HouseholderQR<Eigen::MatrixXd>(fw).householderQ() *
             Eigen::MatrixXd::Identity(w, r);
        fh = Eigen::HouseholderQR<Eigen::MatrixXd>(fh).householderQ() *
             Eigen::MatrixXd::Identity(h, r);
        fc = Eigen::HouseholderQR<Eigen::MatrixXd>(fc).householderQ() *
             Eigen::MatrixXd::Identity(c, r);

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
                detail = "mode " + std::to_string(mode) + " rank " + std::to_string(r) +
                         " reported " + std::to_string(above);
            }
        }
    }
    if (detail.empty()) detail = "rank 1..3 recovered in every mode";
    return {"tensor.rank_witness", ok, detail, {7}};
}

// ---------------------------------------------------------------------- cassi

SensingOperator random_operator(int w, int h, int c, int step, Rng& rng, double density = 0.5) {
    CodedAperture mask(w, h);
    for (double& v : mask.values) v = rng.unit() < density ? 1.0 : 0.0;
    return SensingOperator(std::move(mask), step, c);
}

CheckResult check_forward_linearity(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "linear"));
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        SensingOperator op = random_operator(5, 6, 3, trial % 3, rng);
        HsiCube x1 = random_cube(5, 6, 3, rng, -1.0, 1.0);
        HsiCube x2 = random_cube(5, 6, 3, rng, -1.0, 1.0);
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        HsiCube mix = x1;
        for (std::size_t i = 0; i < mix.data.size(); ++i)
            mix.data[i] = a * x1.data[i] + b * x2.data[i];
        Measurement lhs = op.forward(mix);
        Measurement f1 = op.forward(x1), f2 = op.forward(x2);
        std::vector<double> rhs(f1.values.size());
        for (std::size_t i = 0; i < rhs.size(); ++i)
            rhs[i] = a * f1.values[i] + b * f2.values[i];
        worst = std::max(worst, rel_linf(lhs.values, rhs));
    }
    const bool ok = worst <= 1e-12;
    return {"cassi.linearity", ok, "max deviation " + fmt(worst), {}};
}

CheckResult check_adjoint(std::uint64_t seed) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(seed, "adjoint" + std::to_string(trial)));
        const int w = rng.uniform_int(2, 16);
        const int h = rng.uniform_int(2, 16);
        const int c = rng.uniform_int(1, 8);
        const int step = rng.uniform_int(0, 3);
        SensingOperator op = random_operator(w, h, c, step, rng);
        HsiCube x = random_cube(w, h, c, rng, -1.0, 1.0);
        Measurement y = random_measurement(w, op.shifted_height(), rng);
        const double lhs = dot(op.forward(x), y);
        const double rhs = dot(x, op.adjoint(y));
        worst = std::max(worst, rel_err(lhs, rhs));
    }
    const bool ok = worst <= 1e-10;
    return {"cassi.adjoint", ok, "100 configs, worst dot-product gap " + fmt(worst), {1}};
}

CheckResult check_gram_diagonal(std::uint64_t seed) {
    bool ok = true;
    double worst_off = 0.0;
    for (int trial = 0; trial < 8; ++trial) {
        Rng rng(derive_seed(seed, "gram" + std::to_string(trial)));
        const int w = rng.uniform_int(2, 6);
        const int h = rng.uniform_int(2, 6);
        const int c = rng.uniform_int(1, 4);
        const int step = rng.uniform_int(0, 2);
        CodedAperture mask(w, h);
        for (double& v : mask.values) v = trial % 2 ? rng.unit() : (rng.unit() < 0.5 ? 1.0 : 0.0);
        SensingOperator op(mask, step, c);
        Eigen::MatrixXd a = op.densify();
        Eigen::MatrixXd gram = a * a.transpose();
        const std::vector<double>& diag = op.phi_phit_diag();
        for (Eigen::Index i = 0; i < gram.rows(); ++i)
            for (Eigen::Index j = 0; j < gram.cols(); ++j) {
                if (i == j)
                    ok = ok && rel_err(gram(i, j), diag[static_cast<std::size_t>(i)]) <= 1e-14;
                else
                    worst_off = std::max(worst_off, std::abs(gram(i, j)));
            }
    }
    ok = ok && worst_off == 0.0;
    return {"cassi.gram_diagonal", ok,
            "off-diagonal max " + fmt(worst_off) + " (must be exactly zero)", {3}};
}

CheckResult check_gram_coverage(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "coverage"));
    SensingOperator op = random_operator(6, 5, 3, 2, rng, 0.4);
    const std::vector<double>& diag = op.phi_phit_diag();
    bool ok = true;
    for (int yy = 0; yy < op.shifted_height() && ok; ++yy)
        for (int xx = 0; xx < op.width() && ok; ++xx) {
            double cover = 0.0;
            for (int n = 0; n < op.channels(); ++n)
                cover += std::abs(op.shifted_mask(xx, yy, n));
            const double d = diag[static_cast<std::size_t>(yy) * op.width() + xx];
            ok = d >= 0.0 && ((cover == 0.0) == (d == 0.0));
        }
    return {"cassi.gram_coverage", ok, "diag >= 0, zero exactly off the mask support", {}};
}

// ---------------------------------------------------------------------- solver

Eigen::VectorXd dense_normal_solve(const SensingOperator& op, const Measurement& y,
                                   const HsiCube& z_hat, double mu) {
    Eigen::MatrixXd a = op.densify();
    Eigen::MatrixXd lhs = a.transpose() * a;
    lhs.diagonal().array() += mu;
    Eigen::VectorXd rhs = a.transpose() * vec(y) + mu * vec(z_hat);
    return lhs.ldlt().solve(rhs);
}

CheckResult check_data_step_oracle(std::uint64_t seed) {
    const int shapes[][3] = {{2, 2, 1}, {3, 4, 2}, {4, 3, 3}, {5, 5, 4},
                             {8, 8, 4}, {8, 6, 3}, {6, 8, 2}, {7, 5, 4}};
    double worst = 0.0;
    for (const auto& s : shapes)
        for (double mu : {0.01, 1.0, 100.0})
            for (int trial = 0; trial < 5; ++trial) {
                Rng rng(derive_seed(seed, "dstep" + std::to_string(s[0] * 100 + s[1] * 10 + s[2]) +
                                              fmt(mu) + std::to_string(trial)));
                SensingOperator op = random_operator(s[0], s[1], s[2], trial % 3, rng);
                HsiCube z_hat = random_cube(s[0], s[1], s[2], rng, -1.0, 1.0);
                Measurement y = random_measurement(s[0], op.shifted_height(), rng);
                HsiCube x = data_step(op, y, z_hat, mu);
                Eigen::VectorXd expect = dense_normal_solve(op, y, z_hat, mu);
                Eigen::VectorXd got = vec(x);
                worst = std::max(worst, (got - expect).norm() /
                                            std::max(expect.norm(), 1e-300));
            }
    const bool ok = worst <= 1e-8;
    return {"solver.data_step_oracle", ok, "worst gap vs dense solve " + fmt(worst), {2}};
}

CheckResult check_hqs_monotone(std::uint64_t seed) {
    bool ok = true;
    double worst_rise = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(derive_seed(seed, "mono" + std::to_string(trial)));
        SensingOperator op = random_operator(6, 5, 3, 1, rng);
        HsiCube truth = random_cube(6, 5, 3, rng);
        Measurement y = op.simulate_measurement(truth, 0.02, trial);
        const double mu = 1.0, tau = 0.3;
        const double lambda = tau / mu;
        const double tau_eff = mu * lambda / (1.0 + lambda);
        QuadraticProx prox(lambda);

        SolverConfig cfg;
        cfg.stages = 60;
        cfg.mu_schedule = SolverConfig::constant_schedule(60, mu);
        cfg.eta_schedule = SolverConfig::constant_schedule(60, 0.0);
        cfg.tau = tau;
        cfg.beta_mode = BetaMode::zero;

        std::vector<double> objective;
        auto observer = [&](int, const HsiCube& x) {
            Measurement fx = op.forward(x);
            double fid = 0.0;
            for (std::size_t i = 0; i < fx.values.size(); ++i) {
                const double d = y.values[i] - fx.values[i];
                fid += d * d;
            }
            objective.push_back(0.5 * fid + 0.5 * tau_eff * dot(x, x));
        };
        run_hqs(cfg, op, y, prox, observer);
        for (std::size_t i = 1; i < objective.size(); ++i) {
            const double rise = objective[i] - objective[i - 1];
            worst_rise = std::max(worst_rise, rise);
            ok = ok && rise <= 1e-10 * std::max(1.0, std::abs(objective[i - 1]));
        }
    }
    return {"solver.hqs_monotone", ok, "worst objective rise " + fmt(worst_rise), {}};
}

struct AccelInstance {
    SensingOperator op;
    Measurement y;
    Eigen::VectorXd x_star;
};

AccelInstance make_quadratic_instance(std::uint64_t seed, double mu, double tau) {
    Rng rng(seed);
    SensingOperator op = random_operator(8, 8, 3, 1, rng);
    HsiCube truth = random_cube(8, 8, 3, rng);
    Measurement y = op.forward(truth);
    const double lambda = tau / mu;
    const double tau_eff = mu * lambda / (1.0 + lambda);
    Eigen::MatrixXd a = op.densify();
    Eigen::MatrixXd lhs = a.transpose() * a;
    lhs.diagonal().array() += tau_eff;
    Eigen::VectorXd x_star = lhs.ldlt().solve(a.transpose() * vec(y));
    return {std::move(op), std::move(y), std::move(x_star)};
}

int stages_to_tolerance(const AccelInstance& inst, BetaMode mode, double mu, double tau,
                        int cap, double tol) {
    QuadraticProx prox(tau / mu);
    SolverConfig cfg;
    cfg.stages = cap;
    cfg.mu_schedule = SolverConfig::constant_schedule(cap, mu);
    cfg.eta_schedule = SolverConfig::constant_schedule(cap, 0.0);
    cfg.tau = tau;
    cfg.beta_mode = mode;

    int reached = cap;
    const double scale = inst.x_star.norm();
    auto observer = [&](int stage, const HsiCube& x) {
        if (reached < cap) return;
        if ((vec(x) - inst.x_star).norm() / scale <= tol) reached = stage + 1;
    };
    run(cfg, inst.op, inst.y, prox, observer);
    return reached;
}

CheckResult check_acceleration(std::uint64_t seed) {
    // Large data-step penalty makes the plain iteration genuinely slow, so
    // the extrapolation has something to accelerate.
    const double mu = 10.0, tau = 0.1, tol = 1e-6;
    const int cap = 1000, trials = 50;
    int wins = 0;
    std::vector<double> reductions;
    for (int trial = 0; trial < trials; ++trial) {
        AccelInstance inst =
            make_quadratic_instance(derive_seed(seed, "accel" + std::to_string(trial)), mu, tau);
        const int k_zero = stages_to_tolerance(inst, BetaMode::zero, mu, tau, cap, tol);
        const int k_nest = stages_to_tolerance(inst, BetaMode::nesterov, mu, tau, cap, tol);
        if (k_nest <= k_zero) ++wins;
        reductions.push_back(1.0 - static_cast<double>(k_nest) / k_zero);
    }
    std::sort(reductions.begin(), reductions.end());
    const double median = reductions[reductions.size() / 2];
    const double win_rate = static_cast<double>(wins) / trials;
    const bool ok = win_rate >= 0.9 && median >= 0.2;
    return {"solver.acceleration", ok,
            "win rate " + fmt(win_rate) + ", median stage reduction " + fmt(median), {4}};
}

CheckResult check_run_determinism(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "runrep"));
    SensingOperator op = random_operator(6, 6, 3, 1, rng);
    HsiCube truth = random_cube(6, 6, 3, rng);
    Measurement y = op.simulate_measurement(truth, 0.01, 7);
    QuadraticProx prox(0.2);
    SolverConfig cfg;
    cfg.stages = 15;
    cfg.mu_schedule = SolverConfig::geometric_schedule(15, 1.0, 0.9);
    cfg.eta_schedule = SolverConfig::constant_schedule(15, 0.0);
    auto [x1, s1] = run(cfg, op, y, prox);
    auto [x2, s2] = run(cfg, op, y, prox);
    const bool ok = x1.data == x2.data && s1.residual_history.size() == s2.residual_history.size();
    return {"solver.run_determinism", ok, "repeat runs bit-identical", {}};
}

CheckResult check_beta_schedule(std::uint64_t) {
    // independent evaluation of the t-recurrence
    double t = 1.0;
    std::vector<double> expect;
    for (int k = 0; k < 4; ++k) {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        expect.push_back((t - 1.0) / t_next);
        t = t_next;
    }
    bool ok = beta_schedule(BetaMode::nesterov, 0) == 0.0;
    for (int k = 0; k < 4; ++k)
        ok = ok && rel_err(beta_schedule(BetaMode::nesterov, k) + 1e-300,
                           expect[static_cast<std::size_t>(k)] + 1e-300) <= 1e-12;

    BetaSequence seq(BetaMode::nesterov);
    double prev = -1.0;
    for (int k = 0; k < 1'000'000 && ok; ++k) {
        const double b = seq.next();
        ok = b >= prev && b < 1.0;
        prev = b;
    }
    return {"solver.beta_schedule", ok, "nondecreasing, < 1 over 1e6 stages", {}};
}

// ---------------------------------------------------------------------- ssm

CheckResult check_abar_range(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "abar"));
    bool ok = true;
    double lo = 1.0, hi = 0.0;
    for (int trial = 0; trial < 100'000 && ok; ++trial) {
        SsmParams p = SsmParams::seeded(2, 2, 1, derive_seed(seed, "abarp" + std::to_string(trial % 64)));
        std::vector<double> x{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
        DiscretizedStep step = discretize(p, x);
        for (double a : step.a_bar) {
            ok = ok && a > 0.0 && a < 1.0;
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
    }
    return {"ssm.abar_range", ok, "range (" + fmt(lo) + ", " + fmt(hi) + ") strictly inside (0,1)",
            {5}};
}

CheckResult check_chunk_equivalence(std::uint64_t seed) {
    double worst = 0.0;
    for (int len : {1, 7, 64, 257}) {
        SsmParams p = SsmParams::seeded(3, 4, 2, derive_seed(seed, "chunkp" + std::to_string(len)));
        Rng rng(derive_seed(seed, "chunks" + std::to_string(len)));
        Sequence seq;
        seq.length = len;
        seq.feature_dim = 3;
        seq.data.resize(static_cast<std::size_t>(len) * 3);
        for (double& v : seq.data) v = rng.uniform(-1.0, 1.0);
        Sequence base = selective_scan(p, seq);
        for (int chunk : {1, 16, len}) {
            Sequence got = selective_scan_chunked(p, seq, chunk);
            worst = std::max(worst, rel_linf(base.data, got.data));
        }
    }
    const bool ok = worst <= 1e-12;
    return {"ssm.chunk_equivalence", ok, "worst chunked-vs-sequential gap " + fmt(worst), {5}};
}

double scan_loss(const SsmParams& p, const Sequence& seq, const Sequence& g) {
    Sequence y = selective_scan(p, seq);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) loss += g.data[i] * y.data[i];
    return loss;
}

double block_rel(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double na = 0.0, nf = 0.0, nd = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        na += analytic[i] * analytic[i];
        nf += fd[i] * fd[i];
        nd += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
    }
    return std::sqrt(nd) / std::max({std::sqrt(na), std::sqrt(nf), 1e-8});
}

CheckResult check_gradcheck(std::uint64_t seed) {
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        SsmParams p = SsmParams::seeded(2, 3, 2, derive_seed(seed, "gc" + std::to_string(trial)));
        Rng rng(derive_seed(seed, "gcs" + std::to_string(trial)));
        Sequence seq;
        seq.length = 8;
        seq.feature_dim = 2;
        seq.data.resize(16);
        for (double& v : seq.data) v = rng.uniform(-1.0, 1.0);
        Sequence g = seq;
        for (double& v : g.data) v = rng.uniform(-1.0, 1.0);

        ScanGradients grads = scan_backward(p, seq, g);

        auto fd_block = [&](std::vector<double>& target) {
            std::vector<double> fd(target.size());
            for (std::size_t i = 0; i < target.size(); ++i) {
                const double keep = target[i];
                target[i] = keep + h;
                const double up = scan_loss(p, seq, g);
                target[i] = keep - h;
                const double dn = scan_loss(p, seq, g);
                target[i] = keep;
                fd[i] = (up - dn) / (2.0 * h);
            }
            return fd;
        };

        worst = std::max(worst, block_rel(grads.grad_params.a_log, fd_block(p.a_log)));
        worst = std::max(worst, block_rel(grads.grad_params.d_skip, fd_block(p.d_skip)));
        worst = std::max(worst, block_rel(grads.grad_params.w_proj, fd_block(p.w_proj)));
        worst = std::max(worst, block_rel(grads.grad_params.w_dt, fd_block(p.w_dt)));
        worst = std::max(worst, block_rel(grads.grad_seq.data, fd_block(seq.data)));
    }
    const bool ok = worst <= 1e-5;
    return {"ssm.gradcheck", ok, "worst blockwise gap vs central differences " + fmt(worst), {5}};
}

CheckResult check_directions(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "dirs"));
    HsiCube x = random_cube(3, 4, 2, rng, -1.0, 1.0);
    bool ok = true;
    for (ScanDirection d : all_scan_directions()) {
        Sequence seq = sequence_from_direction(x, d);
        ok = ok && inverse_sequence(seq).data == x.data;
    }

    // independent index walker on a 2x2x2 cube
    HsiCube tiny(2, 2, 2);
    for (std::size_t i = 0; i < tiny.data.size(); ++i) tiny.data[i] = static_cast<double>(i);
    for (ScanDirection d : all_scan_directions()) {
        std::vector<std::array<int, 2>> grid; // (fast, slow) pairs in path order
        for (int slow = 0; slow < 2; ++slow)
            for (int fast = 0; fast < 2; ++fast) grid.push_back({fast, slow});
        if (d.path == 1 || d.path == 3)
            for (auto& g : grid) g[0] = 1 - g[0];
        if (d.path == 2 || d.path == 3) std::reverse(grid.begin(), grid.end());

        Sequence seq = sequence_from_direction(tiny, d);
        for (std::size_t t = 0; t < grid.size(); ++t)
            for (int f = 0; f < 2; ++f) {
                int i1, i2, i3;
                switch (d.mode) {
                    case 1: i1 = f; i2 = grid[t][0]; i3 = grid[t][1]; break;
                    case 2: i1 = grid[t][0]; i2 = f; i3 = grid[t][1]; break;
                    default: i1 = grid[t][0]; i2 = grid[t][1]; i3 = f; break;
                }
                ok = ok && seq.at(static_cast<int>(t), f) == tiny.at(i1, i2, i3);
            }
    }
    return {"ssm.directions", ok, "12 serializations invert bit-exactly; walker agrees", {6}};
}

CheckResult check_reversal_equivariance(std::uint64_t seed) {
    // memoryless limit: huge a_log collapses the transition to zero
    SsmParams p = SsmParams::seeded(3, 2, 2, derive_seed(seed, "rev"));
    for (double& v : p.a_log) v = 40.0;
    Rng rng(derive_seed(seed, "revseq"));
    Sequence seq;
    seq.length = 11;
    seq.feature_dim = 3;
    seq.data.resize(33);
    for (double& v : seq.data) v = rng.uniform(-1.0, 1.0);

    Sequence rev = seq;
    for (int t = 0; t < seq.length; ++t)
        for (int d = 0; d < 3; ++d) rev.at(t, d) = seq.at(seq.length - 1 - t, d);

    Sequence y = selective_scan(p, seq);
    Sequence yr = selective_scan(p, rev);
    bool ok = true;
    for (int t = 0; t < seq.length; ++t)
        for (int d = 0; d < 3; ++d) ok = ok && y.at(t, d) == yr.at(seq.length - 1 - t, d);
    return {"ssm.reversal_equivariance", ok, "memoryless scan commutes with reversal", {}};
}

// ---------------------------------------------------------------------- nn

CheckResult check_nn_shapes(std::uint64_t seed) {
    bool ok = true;
    const int shapes[][3] = {{8, 8, 4}, {13, 17, 4}, {32, 32, 8}};
    for (const auto& s : shapes) {
        auto store = std::make_shared<WeightStore>(derive_seed(seed, "nns"));
        MmbDenoiser den(store, MmbConfig{});
        Rng rng(derive_seed(seed, "nnsi"));
        HsiCube x = random_cube(s[0], s[1], s[2], rng);
        HsiCube out = den.denoise(x, 0.05);
        ok = ok && out.w == s[0] && out.h == s[1] && out.c == s[2];
    }
    return {"nn.shape_preservation", ok, "denoiser preserves 8x8x4, 13x17x4, 32x32x8", {9}};
}

CheckResult check_nn_determinism(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "nnd"));
    HsiCube x = random_cube(9, 10, 4, rng);
    auto s1 = std::make_shared<WeightStore>(derive_seed(seed, "nndw"));
    auto s2 = std::make_shared<WeightStore>(derive_seed(seed, "nndw"));
    HsiCube a = MmbDenoiser(s1, MmbConfig{}).denoise(x, 0.1);
    HsiCube b = MmbDenoiser(s2, MmbConfig{}).denoise(x, 0.1);
    const bool ok = a.data == b.data;
    return {"nn.determinism", ok, "same seed gives bit-identical forward pass", {9}};
}

CheckResult check_nn_residual_identity(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "nnr"));
    HsiCube x = random_cube(8, 8, 4, rng);
    auto store = std::make_shared<WeightStore>(derive_seed(seed, "nnrw"));
    MmbDenoiser den(store, MmbConfig{});
    den.zero_output_projections(4);
    HsiCube out = den.denoise(x, 0.3);
    const bool ok = out.data == x.data;
    return {"nn.residual_identity", ok, "zeroed output projections give the identity map", {9}};
}

CheckResult check_attention_rows(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "attn"));
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = rng.uniform_int(1, 8), cols = rng.uniform_int(1, 12);
        std::vector<double> m(static_cast<std::size_t>(rows) * cols);
        for (double& v : m) v = rng.uniform(-30.0, 30.0);
        detail::softmax_rows(m, rows, cols);
        for (int r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (int c = 0; c < cols; ++c) {
                ok = ok && m[static_cast<std::size_t>(r) * cols + c] >= 0.0;
                sum += m[static_cast<std::size_t>(r) * cols + c];
            }
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    ok = ok && worst <= 1e-6;
    return {"nn.attention_rows", ok, "row sums within " + fmt(worst) + " of 1", {}};
}

CheckResult check_nn_stability(std::uint64_t seed) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        WeightStore store(derive_seed(seed, "stab" + std::to_string(trial)));
        Rng rng(derive_seed(seed, "stabi" + std::to_string(trial)));
        HsiCube x = random_cube(8, 8, 8, rng);
        MambaITConfig cfg;
        cfg.channels = 8;
        HsiCube out = mmit_block(x, store, "blk", cfg);
        for (double v : out.data) worst = std::max(worst, std::abs(v));
        if (!out.all_finite()) worst = std::numeric_limits<double>::infinity();
    }
    const bool ok = worst < 1e3;
    return {"nn.stability", ok, "max |output| " + fmt(worst) + " over 20 seeded blocks", {}};
}

// ---------------------------------------------------------------------- priors

CheckResult check_nonexpansive(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "nonexp"));
    bool ok = true;
    double worst = 0.0;
    TvConfig tv;
    for (int trial = 0; trial < 10; ++trial) {
        HsiCube a = random_cube(7, 6, 2, rng, -1.0, 1.0);
        HsiCube b = random_cube(7, 6, 2, rng, -1.0, 1.0);
        HsiCube diff = a;
        for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= b.data[i];
        const double gap = norm(diff);

        for (int which = 0; which < 2; ++which) {
            HsiCube pa = which ? soft_threshold(a, 0.2) : tv_prox(a, 0.3, tv);
            HsiCube pb = which ? soft_threshold(b, 0.2) : tv_prox(b, 0.3, tv);
            HsiCube pd = pa;
            for (std::size_t i = 0; i < pd.data.size(); ++i) pd.data[i] -= pb.data[i];
            const double ratio = norm(pd) / std::max(gap, 1e-300);
            worst = std::max(worst, ratio);
            ok = ok && ratio <= 1.0 + 1e-9;
        }
    }
    return {"priors.nonexpansive", ok, "worst expansion ratio " + fmt(worst), {}};
}

CheckResult check_soft_optimality(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "softopt"));
    HsiCube v = random_cube(6, 6, 2, rng, -2.0, 2.0);
    const double theta = 0.7;
    HsiCube z = soft_threshold(v, theta);
    bool ok = true;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double u = v.data[i] - z.data[i]; // must be a subgradient of theta|z|
        if (z.data[i] != 0.0)
            ok = ok && std::abs(u - theta * (z.data[i] > 0 ? 1.0 : -1.0)) <= 1e-12;
        else
            ok = ok && std::abs(u) <= theta + 1e-12;
    }
    return {"priors.soft_optimality", ok, "elementwise subgradient condition holds", {}};
}

CheckResult check_tv_energy(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "tve"));
    bool ok = true;
    double worst = 0.0;
    for (auto variant : {TvConfig::Variant::isotropic, TvConfig::Variant::anisotropic}) {
        TvConfig cfg;
        cfg.variant = variant;
        for (int trial = 0; trial < 5; ++trial) {
            HsiCube v = random_cube(8, 7, 2, rng);
            const double eta = 0.2;
            const double lambda = cfg.lambda_scale * eta;
            HsiCube z = tv_prox(v, eta, cfg);
            HsiCube d = z;
            for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] -= v.data[i];
            const double at_z = 0.5 * dot(d, d) + lambda * total_variation(z, variant);
            const double at_v = lambda * total_variation(v, variant);
            worst = std::max(worst, at_z - at_v);
            ok = ok && at_z <= at_v + 1e-10;
        }
    }
    return {"priors.tv_energy", ok, "worst energy excess " + fmt(worst), {}};
}

// ---------------------------------------------------------------------- io

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CheckResult check_formats(std::uint64_t seed) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("selfcheck_fmt_" + std::to_string(seed));
    fs::create_directories(dir);
    Rng rng(derive_seed(seed, "fmt"));
    bool ok = true;

    HsiCube cube = random_cube(4, 5, 3, rng);
    cube.wavelengths = {450.0, 550.0, 650.0};
    const std::string cube_path = (dir / "a.hsi").string();
    write_cube(cube_path, cube);
    const std::string bytes1 = slurp(cube_path);
    write_cube(cube_path, read_cube(cube_path));
    ok = ok && slurp(cube_path) == bytes1;

    CodedAperture mask = random_binary_mask(5, 4, 0.5, 11);
    const std::string mask_path = (dir / "m.msk").string();
    write_mask(mask_path, mask);
    const std::string bytes2 = slurp(mask_path);
    write_mask(mask_path, read_mask(mask_path));
    ok = ok && slurp(mask_path) == bytes2;

    Measurement meas = random_measurement(4, 6, rng);
    const std::string meas_path = (dir / "y.mea").string();
    write_measurement(meas_path, meas);
    const std::string bytes3 = slurp(meas_path);
    write_measurement(meas_path, read_measurement(meas_path));
    ok = ok && slurp(meas_path) == bytes3;

    WeightStore store(derive_seed(seed, "fmtw"));
    store.get("a.w", {3, 4});
    store.get("b.v", {5}, WeightStore::Init::ones);
    const std::string w_path = (dir / "w.mjw").string();
    store.save(w_path);
    const std::string bytes4 = slurp(w_path);
    WeightStore::load(w_path).save(w_path);
    ok = ok && slurp(w_path) == bytes4;

    fs::remove_all(dir);
    return {"io.format_roundtrip", ok, "all four formats write-read-write byte-identical", {10}};
}

CheckResult check_pipeline_determinism(std::uint64_t seed) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("selfcheck_pipe_" + std::to_string(seed));
    fs::create_directories(dir);

    RunConfig cfg;
    cfg.stages = 3;
    cfg.prox = "tv";
    cfg.mu0 = 0.01;
    cfg.eta0 = 0.05;
    cfg.tau = 1.0;
    cfg.seed = 123;

    HsiCube scene = synthetic_scene(12, 12, 3, 5);
    CodedAperture mask = random_binary_mask(12, 12, 0.5, 6);
    SensingOperator op(mask, cfg.step, scene.c);
    Measurement y = op.simulate_measurement(scene, 0.01, cfg.seed);

    auto run_once = [&](const std::string& tag) {
        auto prox = make_prox(cfg);
        auto [x, state] = run(cfg.to_solver_config(), op, y, *prox);
        const std::string cube_path = (dir / ("x_" + tag + ".hsi")).string();
        const std::string hist_path = (dir / ("h_" + tag + ".csv")).string();
        write_cube(cube_path, x);
        write_text_file(hist_path, convergence_csv(state.residual_history));
        return slurp(cube_path) + "|" + slurp(hist_path);
    };
    const bool ok = run_once("a") == run_once("b");
    fs::remove_all(dir);
    return {"io.pipeline_determinism", ok, "repeat seeded pipeline writes identical bytes", {}};
}

CheckResult check_e2e_reconstruction(std::uint64_t) {
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
    const bool ok = psnr1 >= psnr0 + 5.0 && s >= 0.85;
    return {"e2e.reconstruction", ok,
            "PSNR " + fmt(psnr0) + " -> " + fmt(psnr1) + " dB, SSIM " + fmt(s), {8}};
}

} // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
    std::vector<CheckResult> results;
    results.push_back(check_mode_roundtrip(seed));
    results.push_back(check_unfold_multiset(seed));
    results.push_back(check_shift_adjoint(seed));
    results.push_back(check_svd_covariance(seed));
    results.push_back(check_rank_witness(seed));
    results.push_back(check_forward_linearity(seed));
    results.push_back(check_adjoint(seed));
    results.push_back(check_gram_diagonal(seed));
    results.push_back(check_gram_coverage(seed));
    results.push_back(check_data_step_oracle(seed));
    results.push_back(check_hqs_monotone(seed));
    results.push_back(check_acceleration(seed));
    results.push_back(check_run_determinism(seed));
    results.push_back(check_beta_schedule(seed));
    results.push_back(check_abar_range(seed));
    results.push_back(check_chunk_equivalence(seed));
    results.push_back(check_gradcheck(seed));
    results.push_back(check_directions(seed));
    results.push_back(check_reversal_equivariance(seed));
    results.push_back(check_nn_shapes(seed));
    results.push_back(check_nn_determinism(seed));
    results.push_back(check_nn_residual_identity(seed));
    results.push_back(check_attention_rows(seed));
    results.push_back(check_nn_stability(seed));
    results.push_back(check_nonexpansive(seed));
    results.push_back(check_soft_optimality(seed));
    results.push_back(check_tv_energy(seed));
    results.push_back(check_formats(seed));
    results.push_back(check_pipeline_determinism(seed));
    results.push_back(check_e2e_reconstruction(seed));
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return true;
}

} // namespace cassikit
