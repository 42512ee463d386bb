#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cassikit/tensor.hpp"

namespace cassikit {

/// Physical mask in the aperture plane, row-major W*H, finite non-negative
/// values (binary masks are the common special case).
struct CodedAperture {
    int w = 0;
    int h = 0;
    std::vector<double> values;

    CodedAperture() = default;
    CodedAperture(int width, int height, double fill = 0.0)
        : w(width), h(height), values(static_cast<std::size_t>(width) * height, fill) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * w + x]; }

    void validate() const;
};

/// Single 2D sensor frame, W x H~ with H~ = H + step*(C-1).
struct Measurement {
    int w = 0;
    int h = 0;
    std::vector<double> values;

    Measurement() = default;
    Measurement(int width, int height, double fill = 0.0)
        : w(width), h(height), values(static_cast<std::size_t>(width) * height, fill) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * w + x]; }

    bool same_dims(const Measurement& o) const { return w == o.w && h == o.h; }
    void validate() const;
};

/// SD-CASSI sensing operator: per-band mask modulation, dispersion shift along
/// H, band summation. Holds the shifted mask M~ so that forward, adjoint and
/// diag(Phi Phi^T) never materialize the sensing matrix. Immutable after
/// construction and safe for concurrent use.
class SensingOperator {
public:
    SensingOperator(CodedAperture mask, int step, int channels);

    int width() const { return mask_.w; }
    int height() const { return mask_.h; }
    int shifted_height() const { return shifted_h_; }
    int channels() const { return channels_; }
    int step() const { return step_; }
    const CodedAperture& mask() const { return mask_; }

    /// Shifted mask value M~(x, y, n), y over the shifted height.
    double shifted_mask(int x, int y, int n) const {
        return shifted_mask_.at(x, y, n);
    }

    /// Y = sum_n shift(x)(:,:,n) .* M~(:,:,n).
    Measurement forward(const HsiCube& x) const;

    /// Phi^T y realized structurally: per-band product with M~, then unshift.
    HsiCube adjoint(const Measurement& y) const;

    /// diag(Phi Phi^T), entry per measurement pixel: sum_n M~(i,n)^2.
    const std::vector<double>& phi_phit_diag() const { return gram_diag_; }

    /// forward() plus i.i.d. zero-mean Gaussian noise of std noise_sigma,
    /// fully determined by the seed.
    Measurement simulate_measurement(const HsiCube& x, double noise_sigma,
                                     std::uint64_t seed) const;

    /// Dense (W*H~) x (W*H*C) matrix with A*vec(x) = vec(forward(x)).
    /// Test-oracle path; guarded to at most 1e7 entries.
    Eigen::MatrixXd densify() const;

private:
    void check_cube(const HsiCube& x) const;
    void check_measurement(const Measurement& y) const;

    CodedAperture mask_;
    int step_ = 0;
    int channels_ = 0;
    int shifted_h_ = 0;
    HsiCube shifted_mask_;          // W x H~ x C
    std::vector<double> gram_diag_; // W * H~
};

/// Flattened cube vector in storage order; the vec() convention shared by
/// densify() and the dense test oracles.
Eigen::VectorXd vec(const HsiCube& x);
Eigen::VectorXd vec(const Measurement& y);

namespace ref {
// Serial scatter-style references for the parallel gather kernels.
Measurement forward(const SensingOperator& op, const HsiCube& x);
HsiCube adjoint(const SensingOperator& op, const Measurement& y);
} // namespace ref

} // namespace cassikit
