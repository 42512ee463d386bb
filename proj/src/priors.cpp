#include "cassikit/priors.hpp"

#include <algorithm>
#include <cmath>

namespace cassikit {

HsiCube soft_threshold(const HsiCube& v, double theta) {
    if (!(theta >= 0.0)) throw ParameterError("soft threshold requires theta >= 0");
    HsiCube out = v;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(out.data.size()); ++i) {
        const double x = out.data[i];
        const double mag = std::abs(x) - theta;
        out.data[i] = mag > 0.0 ? std::copysign(mag, x) : 0.0;
    }
    return out;
}

namespace {

// Chambolle-style dual projected gradient for one channel:
//   p <- (p + (1/8) grad(div p - v/lambda)) / (1 + (1/8) |grad(...)|)
//   z  = v - lambda div p
// Forward differences with Neumann boundary; |.| is per-component for the
// anisotropic variant and the per-pixel vector norm for the isotropic one.
void tv_channel(const double* v, double* z, int w, int h, double lambda,
                int iterations, TvConfig::Variant variant) {
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (lambda <= 0.0) {
        std::copy(v, v + n, z);
        return;
    }

    std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0);
    const double tau = 1.0 / 8.0;

    for (int it = 0; it < iterations; ++it) {
        // divergence of p (adjoint of forward differences)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                double d = 0.0;
                if (x < w - 1) d += px[i];
                if (x > 0) d -= px[i - 1];
                if (y < h - 1) d += py[i];
                if (y > 0) d -= py[i - w];
                div[i] = d;
            }

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double here = div[i] - v[i] / lambda;
                const double gx =
                    x < w - 1 ? (div[i + 1] - v[i + 1] / lambda) - here : 0.0;
                const double gy =
                    y < h - 1 ? (div[i + w] - v[i + w] / lambda) - here : 0.0;
                if (variant == TvConfig::Variant::isotropic) {
                    const double mag = std::sqrt(gx * gx + gy * gy);
                    const double denom = 1.0 + tau * mag;
                    px[i] = (px[i] + tau * gx) / denom;
                    py[i] = (py[i] + tau * gy) / denom;
                } else {
                    px[i] = (px[i] + tau * gx) / (1.0 + tau * std::abs(gx));
                    py[i] = (py[i] + tau * gy) / (1.0 + tau * std::abs(gy));
                }
            }
    }

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double d = 0.0;
            if (x < w - 1) d += px[i];
            if (x > 0) d -= px[i - 1];
            if (y < h - 1) d += py[i];
            if (y > 0) d -= py[i - w];
            z[i] = v[i] - lambda * d;
        }
}

} // namespace

HsiCube tv_prox(const HsiCube& v, double eta, const TvConfig& config) {
    if (config.inner_iterations < 1)
        throw ParameterError("TV prox requires at least one inner iteration");
    if (!(eta >= 0.0)) throw ParameterError("TV prox requires eta >= 0");
    const double lambda = config.lambda_scale * eta;
    HsiCube out(v.w, v.h, v.c);
    out.wavelengths = v.wavelengths;

#pragma omp parallel for
    for (int ch = 0; ch < v.c; ++ch) {
        const std::size_t base = static_cast<std::size_t>(ch) * v.h * v.w;
        tv_channel(&v.data[base], &out.data[base], v.w, v.h, lambda,
                   config.inner_iterations, config.variant);
    }
    return out;
}

double total_variation(const HsiCube& x, TvConfig::Variant variant) {
    double tv = 0.0;
    for (int ch = 0; ch < x.c; ++ch)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                const double gx = xx < x.w - 1 ? x.at(xx + 1, y, ch) - x.at(xx, y, ch) : 0.0;
                const double gy = y < x.h - 1 ? x.at(xx, y + 1, ch) - x.at(xx, y, ch) : 0.0;
                tv += variant == TvConfig::Variant::isotropic
                          ? std::sqrt(gx * gx + gy * gy)
                          : std::abs(gx) + std::abs(gy);
            }
    return tv;
}

namespace ref {

HsiCube tv_prox(const HsiCube& v, double eta, const TvConfig& config) {
    if (config.inner_iterations < 1)
        throw ParameterError("TV prox requires at least one inner iteration");
    if (!(eta >= 0.0)) throw ParameterError("TV prox requires eta >= 0");
    const double lambda = config.lambda_scale * eta;
    HsiCube out(v.w, v.h, v.c);
    out.wavelengths = v.wavelengths;
    for (int ch = 0; ch < v.c; ++ch) {
        const std::size_t base = static_cast<std::size_t>(ch) * v.h * v.w;
        tv_channel(&v.data[base], &out.data[base], v.w, v.h, lambda,
                   config.inner_iterations, config.variant);
    }
    return out;
}

} // namespace ref
} // namespace cassikit
