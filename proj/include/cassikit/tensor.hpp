#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "cassikit/errors.hpp"

namespace cassikit {

/// Dense 3D hyperspectral cube, W (columns) x H (rows) x C (spectral bands).
/// Storage is channel-major: channel outermost, then row, then column, so
/// element (w, h, ch) lives at data[(ch*H + h)*W + w] and the mode-3
/// unfolding is a plain reinterpretation of the buffer.
struct HsiCube {
    int w = 0;
    int h = 0;
    int c = 0;
    std::vector<double> data;
    std::vector<double> wavelengths; // empty, or C ascending values in nm

    HsiCube() = default;
    HsiCube(int width, int height, int channels, double fill = 0.0)
        : w(width), h(height), c(channels),
          data(static_cast<std::size_t>(width) * height * channels, fill) {
        if (width <= 0 || height <= 0 || channels <= 0)
            throw ShapeError("HsiCube dimensions must be positive");
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int x, int y, int ch) const {
        return (static_cast<std::size_t>(ch) * h + y) * w + x;
    }
    double& at(int x, int y, int ch) { return data[index(x, y, ch)]; }
    double at(int x, int y, int ch) const { return data[index(x, y, ch)]; }

    bool same_dims(const HsiCube& o) const { return w == o.w && h == o.h && c == o.c; }

    bool all_finite() const;

    // Throws ShapeError/NumericError/ParameterError on any invariant violation.
    void validate() const;
};

/// Mode-k matricization of a cube. Rows index dimension k; columns enumerate
/// the remaining two dimensions in ascending-mode order, first one fastest.
struct ModeKMatrix {
    int mode = 1; // 1, 2 or 3
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // row-major
    std::array<int, 3> source_dims{0, 0, 0}; // (W, H, C)

    double& at(int r, int col) { return data[static_cast<std::size_t>(r) * cols + col]; }
    double at(int r, int col) const { return data[static_cast<std::size_t>(r) * cols + col]; }
};

ModeKMatrix unfold_mode_k(const HsiCube& cube, int k);
HsiCube fold_mode_k(const ModeKMatrix& m, std::array<int, 3> dims, int k);

/// Singular values of the mode-k unfolding, descending, length min(rows, cols).
std::vector<double> mode_singular_values(const HsiCube& cube, int k);

/// Dispersion shift: channel n is displaced by step*n rows; output height
/// grows to H + step*(C-1), uncovered positions are zero.
HsiCube shift_cube(const HsiCube& cube, int step);

/// Exact linear adjoint of shift_cube; channel n reads back the window
/// [step*n, step*n + target_h).
HsiCube unshift_cube(const HsiCube& cube, int step, int target_h);

namespace ref {
// Serial reference implementations, kept for testing the parallel kernels
// and for the benchmark harness.
ModeKMatrix unfold_mode_k(const HsiCube& cube, int k);
HsiCube fold_mode_k(const ModeKMatrix& m, std::array<int, 3> dims, int k);
HsiCube shift_cube(const HsiCube& cube, int step);
HsiCube unshift_cube(const HsiCube& cube, int step, int target_h);
} // namespace ref

} // namespace cassikit
