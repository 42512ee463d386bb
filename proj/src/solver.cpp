#include "cassikit/solver.hpp"

#include <algorithm>
#include <cmath>

namespace cassikit {

std::vector<double> SolverConfig::constant_schedule(int k, double value) {
    return std::vector<double>(static_cast<std::size_t>(std::max(k, 0)), value);
}

std::vector<double> SolverConfig::geometric_schedule(int k, double v0, double rho) {
    std::vector<double> s(static_cast<std::size_t>(std::max(k, 0)));
    double v = v0;
    for (auto& e : s) {
        e = v;
        v *= rho;
    }
    return s;
}

void SolverConfig::validate() const {
    if (stages < 1) throw ParameterError("solver requires at least one stage");
    if (static_cast<int>(mu_schedule.size()) != stages)
        throw ParameterError("mu schedule length must equal stage count");
    if (static_cast<int>(eta_schedule.size()) != stages)
        throw ParameterError("eta schedule length must equal stage count");
    for (double mu : mu_schedule)
        if (!(mu > 0.0) || !std::isfinite(mu))
            throw ParameterError("mu schedule entries must be positive and finite");
    for (double eta : eta_schedule)
        if (!(eta >= 0.0) || !std::isfinite(eta))
            throw ParameterError("eta schedule entries must be non-negative and finite");
    if (beta_mode == BetaMode::constant &&
        !(beta_constant >= 0.0 && beta_constant < 1.0))
        throw ParameterError("constant beta must lie in [0, 1)");
    if (!(tolerance >= 0.0)) throw ParameterError("tolerance must be non-negative");
    if (!(tau > 0.0)) throw ParameterError("tau must be positive");
}

double BetaSequence::next() {
    switch (mode_) {
        case BetaMode::zero: return 0.0;
        case BetaMode::constant: return constant_;
        case BetaMode::nesterov: {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_ * t_));
            const double beta = (t_ - 1.0) / t_next;
            t_ = t_next;
            return beta;
        }
    }
    return 0.0;
}

double beta_schedule(BetaMode mode, int k, double constant) {
    if (k < 0) throw ParameterError("stage index must be non-negative");
    BetaSequence seq(mode, constant);
    double beta = 0.0;
    for (int i = 0; i <= k; ++i) beta = seq.next();
    return beta;
}

HsiCube data_step(const SensingOperator& op, const Measurement& y,
                  const HsiCube& z_hat, double mu) {
    if (!(mu > 0.0)) throw ParameterError("data step requires mu > 0");
    Measurement residual = op.forward(z_hat); // throws ShapeError on bad dims
    if (y.w != residual.w || y.h != residual.h)
        throw ShapeError("measurement dimensions do not match sensing operator");

    const std::vector<double>& r = op.phi_phit_diag();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(residual.values.size()); ++i)
        residual.values[i] = (y.values[i] - residual.values[i]) / (mu + r[i]);

    HsiCube correction = op.adjoint(residual);
    HsiCube x = z_hat;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(x.data.size()); ++i)
        x.data[i] += correction.data[i];
    return x;
}

HsiCube momentum_step(const HsiCube& z_next, const HsiCube& z_prev, double beta) {
    if (!z_next.same_dims(z_prev)) throw ShapeError("momentum operands differ in shape");
    HsiCube out = z_next;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(out.data.size()); ++i)
        out.data[i] += beta * (z_next.data[i] - z_prev.data[i]);
    return out;
}

HsiCube initialize(const SensingOperator& op, const Measurement& y) {
    constexpr double kEps = 1e-6;
    Measurement scaled = y;
    const std::vector<double>& r = op.phi_phit_diag();
    for (std::size_t i = 0; i < scaled.values.size(); ++i)
        scaled.values[i] /= std::max(r[i], kEps);
    return op.adjoint(scaled);
}

double dot(const HsiCube& a, const HsiCube& b) {
    if (!a.same_dims(b)) throw ShapeError("dot operands differ in shape");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double norm(const HsiCube& a) { return std::sqrt(dot(a, a)); }

double dot(const Measurement& a, const Measurement& b) {
    if (!a.same_dims(b)) throw ShapeError("dot operands differ in shape");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

double norm(const Measurement& a) { return std::sqrt(dot(a, a)); }

namespace {

double fidelity(const SensingOperator& op, const Measurement& y, const HsiCube& x) {
    Measurement fx = op.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < fx.values.size(); ++i) {
        const double d = y.values[i] - fx.values[i];
        s += d * d;
    }
    return 0.5 * s;
}

std::pair<HsiCube, SolverState> run_impl(const SolverConfig& config,
                                         const SensingOperator& op, const Measurement& y,
                                         const ProxOperator& prox, BetaMode beta_mode,
                                         const StageObserver& observer) {
    config.validate();
    y.validate();

    SolverState state;
    state.z = initialize(op, y);
    state.z_hat = state.z;
    state.x = state.z;
    state.residual_history.reserve(static_cast<std::size_t>(config.stages));

    BetaSequence betas(beta_mode, config.beta_constant);
    for (int k = 0; k < config.stages; ++k) {
        HsiCube x_next = data_step(op, y, state.z_hat, config.mu_schedule[k]);
        if (!x_next.all_finite())
            throw DivergenceError("solver diverged: non-finite x at stage " +
                                  std::to_string(k));

        HsiCube z_next = prox.denoise(x_next, config.eta_schedule[k]);
        if (!z_next.same_dims(x_next))
            throw ShapeError("prox changed cube dimensions at stage " + std::to_string(k));
        if (!z_next.all_finite())
            throw DivergenceError("solver diverged: non-finite z at stage " +
                                  std::to_string(k));

        const double beta = betas.next();
        HsiCube z_hat_next = momentum_step(z_next, state.z, beta);

        const double x_norm = norm(state.x);
        HsiCube diff = x_next;
        for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= state.x.data[i];
        const double rel = norm(diff) / std::max(x_norm, 1e-300);

        state.x = std::move(x_next);
        state.z = std::move(z_next);
        state.z_hat = std::move(z_hat_next);
        state.k = k + 1;
        state.residual_history.push_back({k, fidelity(op, y, state.x), rel});

        if (observer) observer(k, state.x);
        // stage 0 is excluded: the normalized initialization is data-step
        // stationary for binary masks, so its change is spuriously zero
        if (k >= 1 && config.tolerance > 0.0 && rel < config.tolerance) break;
    }
    return {state.x, std::move(state)};
}

} // namespace

std::pair<HsiCube, SolverState> run(const SolverConfig& config, const SensingOperator& op,
                                    const Measurement& y, const ProxOperator& prox,
                                    const StageObserver& observer) {
    return run_impl(config, op, y, prox, config.beta_mode, observer);
}

std::pair<HsiCube, SolverState> run_hqs(const SolverConfig& config, const SensingOperator& op,
                                        const Measurement& y, const ProxOperator& prox,
                                        const StageObserver& observer) {
    return run_impl(config, op, y, prox, BetaMode::zero, observer);
}

} // namespace cassikit
