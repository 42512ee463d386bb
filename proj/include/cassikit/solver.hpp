#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cassikit/cassi.hpp"
#include "cassikit/tensor.hpp"

namespace cassikit {

enum class BetaMode { nesterov, constant, zero };

/// Pluggable proximal step: maps the data-step output to a denoised cube of
/// the same dimensions. Implementations must be deterministic given (v, eta)
/// and their weights, and safe for concurrent read-only use.
class ProxOperator {
public:
    virtual ~ProxOperator() = default;
    virtual HsiCube denoise(const HsiCube& v, double eta) const = 0;
};

/// Prox that returns its input unchanged.
class IdentityProx final : public ProxOperator {
public:
    HsiCube denoise(const HsiCube& v, double /*eta*/) const override { return v; }
};

/// Exact prox of lambda/2 * ||z||^2: v / (1 + lambda). The convex-quadratic
/// fixture used by the convergence and acceleration harnesses.
class QuadraticProx final : public ProxOperator {
public:
    explicit QuadraticProx(double lambda) : lambda_(lambda) {}
    HsiCube denoise(const HsiCube& v, double /*eta*/) const override {
        HsiCube out = v;
        const double s = 1.0 / (1.0 + lambda_);
        for (double& e : out.data) e *= s;
        return out;
    }

private:
    double lambda_;
};

struct SolverConfig {
    int stages = 1;
    std::vector<double> mu_schedule;  // K positive penalties
    BetaMode beta_mode = BetaMode::nesterov;
    double beta_constant = 0.0;       // used by BetaMode::constant, in [0,1)
    std::string prox_tag = "identity";
    double tau = 1.0;                 // regularization weight
    std::vector<double> eta_schedule; // K non-negative denoiser noise levels
    double tolerance = 0.0;           // early stop on relative change; 0 disables

    static std::vector<double> constant_schedule(int k, double value);
    static std::vector<double> geometric_schedule(int k, double v0, double rho);

    void validate() const;
};

struct StageRecord {
    int stage;          // 0-based, the stage that produced this record
    double fidelity;    // 0.5 * ||y - Phi x||^2
    double rel_change;  // ||x_next - x_prev|| / ||x_prev||
};

struct SolverState {
    HsiCube x;
    HsiCube z;
    HsiCube z_hat;
    int k = 0; // completed stages
    std::vector<StageRecord> residual_history;
};

/// Extrapolation coefficient for stage k (0-based): the Nesterov t-sequence
/// t0 = 1, t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2, beta = (t_k - 1) / t_{k+1}.
/// Incremental form; run() advances one of these per stage.
class BetaSequence {
public:
    BetaSequence(BetaMode mode, double constant = 0.0)
        : mode_(mode), constant_(constant) {}

    double next();

private:
    BetaMode mode_;
    double constant_;
    double t_ = 1.0;
};

/// beta_{k+1} for stage index k, evaluated from scratch.
double beta_schedule(BetaMode mode, int k, double constant = 0.0);

/// Closed-form minimizer of 0.5||y - Phi x||^2 + mu/2 ||x - z_hat||^2,
/// computed in measurement space: x = z_hat + Phi^T[(y - Phi z_hat) ./ (mu + r)]
/// with r = diag(Phi Phi^T). The division lives in measurement space; this is
/// the only placement with matching dimensions and it equals the dense
/// normal-equations solve exactly.
HsiCube data_step(const SensingOperator& op, const Measurement& y,
                  const HsiCube& z_hat, double mu);

/// z_hat = z_next + beta * (z_next - z_prev).
HsiCube momentum_step(const HsiCube& z_next, const HsiCube& z_prev, double beta);

/// Diagonal-normalized backprojection: adjoint(y ./ max(r, 1e-6)).
HsiCube initialize(const SensingOperator& op, const Measurement& y);

using StageObserver = std::function<void(int stage, const HsiCube& x)>;

/// Accelerated HQS loop. Per stage k: data step with z_hat_k, prox with
/// eta_k, extrapolation with beta_{k+1}. Stops early when the relative
/// change drops below config.tolerance. Throws DivergenceError naming the
/// stage if an iterate goes non-finite.
std::pair<HsiCube, SolverState> run(const SolverConfig& config, const SensingOperator& op,
                                    const Measurement& y, const ProxOperator& prox,
                                    const StageObserver& observer = {});

/// Plain HQS baseline: run() with the extrapolation forced off.
std::pair<HsiCube, SolverState> run_hqs(const SolverConfig& config, const SensingOperator& op,
                                        const Measurement& y, const ProxOperator& prox,
                                        const StageObserver& observer = {});

double dot(const HsiCube& a, const HsiCube& b);
double norm(const HsiCube& a);
double dot(const Measurement& a, const Measurement& b);
double norm(const Measurement& a);

} // namespace cassikit
