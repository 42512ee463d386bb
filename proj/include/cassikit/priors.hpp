#pragma once

#include "cassikit/solver.hpp"
#include "cassikit/tensor.hpp"

namespace cassikit {

/// Elementwise sign(v) * max(|v| - theta, 0); the exact prox of theta*||.||_1.
HsiCube soft_threshold(const HsiCube& v, double theta);

struct TvConfig {
    enum class Variant { isotropic, anisotropic };

    int inner_iterations = 20;
    Variant variant = Variant::isotropic;
    double lambda_scale = 1.0; // TV weight is lambda_scale * eta
};

/// Approximate minimizer of 0.5||z - v||^2 + lambda(eta) * TV(z), solved per
/// spectral channel by projected gradient on the dual with step 1/8 and a
/// fixed iteration budget. Deterministic; channels run in parallel.
HsiCube tv_prox(const HsiCube& v, double eta, const TvConfig& config);

class SoftThresholdProx final : public ProxOperator {
public:
    explicit SoftThresholdProx(double scale = 1.0) : scale_(scale) {}
    HsiCube denoise(const HsiCube& v, double eta) const override {
        return soft_threshold(v, scale_ * eta);
    }

private:
    double scale_;
};

class TvProx final : public ProxOperator {
public:
    explicit TvProx(TvConfig config = {}) : config_(config) {}
    HsiCube denoise(const HsiCube& v, double eta) const override {
        return tv_prox(v, eta, config_);
    }

private:
    TvConfig config_;
};

/// Anisotropic total variation of the cube, summed over channels; the energy
/// term the dual iteration targets (isotropic variant uses the 2-norm of the
/// per-pixel gradient instead).
double total_variation(const HsiCube& x, TvConfig::Variant variant);

namespace ref {
HsiCube tv_prox(const HsiCube& v, double eta, const TvConfig& config);
} // namespace ref

} // namespace cassikit
