#include "cassikit/cassi.hpp"

#include <algorithm>
#include <cmath>

#include "cassikit/random.hpp"

namespace cassikit {

void CodedAperture::validate() const {
    if (w <= 0 || h <= 0) throw ShapeError("mask dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(w) * h)
        throw ShapeError("mask value count does not match W*H");
    for (double v : values)
        if (!std::isfinite(v) || v < 0.0)
            throw NumericError("mask values must be finite and non-negative");
}

void Measurement::validate() const {
    if (w <= 0 || h <= 0) throw ShapeError("measurement dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(w) * h)
        throw ShapeError("measurement value count does not match W*H");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("measurement contains non-finite entries");
}

SensingOperator::SensingOperator(CodedAperture mask, int step, int channels)
    : mask_(std::move(mask)), step_(step), channels_(channels) {
    mask_.validate();
    if (step_ < 0) throw ParameterError("dispersion step must be non-negative");
    if (channels_ <= 0) throw ParameterError("channel count must be positive");

    shifted_h_ = mask_.h + step_ * (channels_ - 1);
    shifted_mask_ = HsiCube(mask_.w, shifted_h_, channels_);
    for (int n = 0; n < channels_; ++n)
        for (int y = 0; y < mask_.h; ++y)
            for (int x = 0; x < mask_.w; ++x)
                shifted_mask_.at(x, y + step_ * n, n) = mask_.at(x, y);

    gram_diag_.assign(static_cast<std::size_t>(mask_.w) * shifted_h_, 0.0);
    for (int n = 0; n < channels_; ++n)
        for (int y = 0; y < shifted_h_; ++y)
            for (int x = 0; x < mask_.w; ++x) {
                double m = shifted_mask_.at(x, y, n);
                gram_diag_[static_cast<std::size_t>(y) * mask_.w + x] += m * m;
            }
}

void SensingOperator::check_cube(const HsiCube& x) const {
    if (x.w != mask_.w || x.h != mask_.h || x.c != channels_)
        throw ShapeError("cube dimensions do not match sensing operator");
}

void SensingOperator::check_measurement(const Measurement& y) const {
    if (y.w != mask_.w || y.h != shifted_h_)
        throw ShapeError("measurement dimensions do not match sensing operator");
}

Measurement SensingOperator::forward(const HsiCube& x) const {
    check_cube(x);
    const int w = mask_.w, h = mask_.h;
    Measurement y(w, shifted_h_);

    // Gather form: each output pixel sums its covering bands in ascending
    // band order, so the result is bit-identical to the serial scatter.
#pragma omp parallel for
    for (int yy = 0; yy < shifted_h_; ++yy) {
        // bands with yy - step*n in [0, h)
        int n_lo = 0, n_hi = channels_ - 1;
        if (step_ > 0) {
            n_lo = std::max(0, (yy - h + step_) / step_);
            n_hi = std::min(channels_ - 1, yy / step_);
        }
        for (int xx = 0; xx < w; ++xx) {
            double acc = 0.0;
            for (int n = n_lo; n <= n_hi; ++n) {
                const int src = yy - step_ * n;
                acc += x.at(xx, src, n) * mask_.at(xx, src);
            }
            y.at(xx, yy) = acc;
        }
    }
    return y;
}

HsiCube SensingOperator::adjoint(const Measurement& y) const {
    check_measurement(y);
    const int w = mask_.w, h = mask_.h;
    HsiCube out(w, h, channels_);

#pragma omp parallel for
    for (int n = 0; n < channels_; ++n) {
        const int d = step_ * n;
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                out.at(xx, yy, n) = y.at(xx, yy + d) * mask_.at(xx, yy);
    }
    return out;
}

Measurement SensingOperator::simulate_measurement(const HsiCube& x, double noise_sigma,
                                                  std::uint64_t seed) const {
    if (!(noise_sigma >= 0.0))
        throw ParameterError("noise sigma must be non-negative");
    Measurement y = forward(x);
    if (noise_sigma > 0.0) {
        Rng rng(seed);
        for (double& v : y.values) v += noise_sigma * rng.gaussian();
    }
    return y;
}

Eigen::MatrixXd SensingOperator::densify() const {
    const std::size_t rows = static_cast<std::size_t>(mask_.w) * shifted_h_;
    const std::size_t cols = static_cast<std::size_t>(mask_.w) * mask_.h * channels_;
    if (rows * cols > 10'000'000ULL)
        throw CapacityError("densify: matrix would exceed the 1e7-entry guard");

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(cols));
    const int w = mask_.w, h = mask_.h;
    for (int n = 0; n < channels_; ++n)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const std::size_t col = (static_cast<std::size_t>(n) * h + yy) * w + xx;
                const std::size_t row =
                    static_cast<std::size_t>(yy + step_ * n) * w + xx;
                a(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
                    mask_.at(xx, yy);
            }
    return a;
}

Eigen::VectorXd vec(const HsiCube& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data.data(),
                                             static_cast<Eigen::Index>(x.data.size()));
}

Eigen::VectorXd vec(const Measurement& y) {
    return Eigen::Map<const Eigen::VectorXd>(y.values.data(),
                                             static_cast<Eigen::Index>(y.values.size()));
}

namespace ref {

Measurement forward(const SensingOperator& op, const HsiCube& x) {
    if (x.w != op.width() || x.h != op.height() || x.c != op.channels())
        throw ShapeError("cube dimensions do not match sensing operator");
    Measurement y(op.width(), op.shifted_height());
    for (int n = 0; n < op.channels(); ++n)
        for (int yy = 0; yy < op.height(); ++yy)
            for (int xx = 0; xx < op.width(); ++xx)
                y.at(xx, yy + op.step() * n) += x.at(xx, yy, n) * op.mask().at(xx, yy);
    return y;
}

HsiCube adjoint(const SensingOperator& op, const Measurement& y) {
    if (y.w != op.width() || y.h != op.shifted_height())
        throw ShapeError("measurement dimensions do not match sensing operator");
    HsiCube out(op.width(), op.height(), op.channels());
    for (int n = 0; n < op.channels(); ++n)
        for (int yy = 0; yy < op.height(); ++yy)
            for (int xx = 0; xx < op.width(); ++xx)
                out.at(xx, yy, n) = y.at(xx, yy + op.step() * n) * op.mask().at(xx, yy);
    return out;
}

} // namespace ref
} // namespace cassikit
