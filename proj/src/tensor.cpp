#include "cassikit/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace cassikit {

bool HsiCube::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void HsiCube::validate() const {
    if (w <= 0 || h <= 0 || c <= 0)
        throw ShapeError("HsiCube dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(w) * h * c)
        throw ShapeError("HsiCube data length does not match W*H*C");
    if (!all_finite())
        throw NumericError("HsiCube contains non-finite entries");
    if (!wavelengths.empty()) {
        if (static_cast<int>(wavelengths.size()) != c)
            throw ShapeError("wavelength list length does not match channel count");
        for (std::size_t i = 1; i < wavelengths.size(); ++i)
            if (!(wavelengths[i] > wavelengths[i - 1]))
                throw ParameterError("wavelengths must be strictly ascending");
    }
}

namespace {

void check_mode(int k) {
    if (k < 1 || k > 3) throw ParameterError("mode out of range, expected 1..3");
}

// Index law: element (i1,i2,i3) of a (W,H,C) cube sits at row i_k and column
// sum_{j != k} i_j * J_j with J_j the product of the dimensions before j,
// skipping k. Spelled out per mode:
//   mode 1: row i1, col i2 + i3*H
//   mode 2: row i2, col i1 + i3*W
//   mode 3: row i3, col i1 + i2*W
struct ColSplit {
    int fast; // size of the fast column index
};

ColSplit col_split(int k, int w, int h) {
    switch (k) {
        case 1: return {h};
        case 2: return {w};
        default: return {w};
    }
}

} // namespace

ModeKMatrix unfold_mode_k(const HsiCube& cube, int k) {
    check_mode(k);
    const int w = cube.w, h = cube.h, c = cube.c;
    ModeKMatrix m;
    m.mode = k;
    m.source_dims = {w, h, c};
    m.rows = (k == 1) ? w : (k == 2) ? h : c;
    m.cols = static_cast<int>(cube.size() / m.rows);
    m.data.resize(cube.size());

    const ColSplit cs = col_split(k, w, h);
    const std::size_t rows = m.rows, cols = m.cols;

#pragma omp parallel for
    for (long long col = 0; col < static_cast<long long>(cols); ++col) {
        const int a = static_cast<int>(col % cs.fast);
        const int b = static_cast<int>(col / cs.fast);
        for (std::size_t r = 0; r < rows; ++r) {
            int i1, i2, i3;
            switch (k) {
                case 1: i1 = static_cast<int>(r); i2 = a; i3 = b; break;
                case 2: i1 = a; i2 = static_cast<int>(r); i3 = b; break;
                default: i1 = a; i2 = b; i3 = static_cast<int>(r); break;
            }
            m.data[r * cols + col] = cube.data[(static_cast<std::size_t>(i3) * h + i2) * w + i1];
        }
    }
    return m;
}

HsiCube fold_mode_k(const ModeKMatrix& m, std::array<int, 3> dims, int k) {
    check_mode(k);
    if (k != m.mode) throw ShapeError("fold mode does not match matrix mode");
    const auto [w, h, c] = dims;
    if (w <= 0 || h <= 0 || c <= 0) throw ShapeError("fold target dims must be positive");
    const std::size_t total = static_cast<std::size_t>(w) * h * c;
    if (m.data.size() != total ||
        static_cast<std::size_t>(m.rows) * m.cols != total ||
        m.rows != ((k == 1) ? w : (k == 2) ? h : c))
        throw ShapeError("matrix shape incompatible with fold target dims");

    HsiCube cube(w, h, c);
    const ColSplit cs = col_split(k, w, h);
    const std::size_t cols = m.cols;

#pragma omp parallel for
    for (long long col = 0; col < static_cast<long long>(cols); ++col) {
        const int a = static_cast<int>(col % cs.fast);
        const int b = static_cast<int>(col / cs.fast);
        for (int r = 0; r < m.rows; ++r) {
            int i1, i2, i3;
            switch (k) {
                case 1: i1 = r; i2 = a; i3 = b; break;
                case 2: i1 = a; i2 = r; i3 = b; break;
                default: i1 = a; i2 = b; i3 = r; break;
            }
            cube.data[(static_cast<std::size_t>(i3) * h + i2) * w + i1] =
                m.data[static_cast<std::size_t>(r) * cols + col];
        }
    }
    return cube;
}

std::vector<double> mode_singular_values(const HsiCube& cube, int k) {
    check_mode(k);
    if (!cube.all_finite())
        throw NumericError("mode_singular_values: non-finite input");
    ModeKMatrix m = unfold_mode_k(cube, k);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        mat(m.data.data(), m.rows, m.cols);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
    const auto& s = svd.singularValues();
    return std::vector<double>(s.data(), s.data() + s.size());
}

HsiCube shift_cube(const HsiCube& cube, int step) {
    if (step < 0) throw ParameterError("shift step must be non-negative");
    const int w = cube.w, h = cube.h, c = cube.c;
    const int out_h = h + step * (c - 1);
    HsiCube out(w, out_h, c);

#pragma omp parallel for
    for (int n = 0; n < c; ++n) {
        const int d = step * n;
        for (int y = 0; y < h; ++y) {
            const double* src = &cube.data[(static_cast<std::size_t>(n) * h + y) * w];
            double* dst = &out.data[(static_cast<std::size_t>(n) * out_h + y + d) * w];
            for (int x = 0; x < w; ++x) dst[x] = src[x];
        }
    }
    return out;
}

HsiCube unshift_cube(const HsiCube& cube, int step, int target_h) {
    if (step < 0) throw ParameterError("unshift step must be non-negative");
    if (target_h <= 0) throw ShapeError("unshift target height must be positive");
    const int w = cube.w, c = cube.c;
    if (cube.h != target_h + step * (c - 1))
        throw ShapeError("unshift: input height does not equal target_h + step*(C-1)");
    HsiCube out(w, target_h, c);

#pragma omp parallel for
    for (int n = 0; n < c; ++n) {
        const int d = step * n;
        for (int y = 0; y < target_h; ++y) {
            const double* src = &cube.data[(static_cast<std::size_t>(n) * cube.h + y + d) * w];
            double* dst = &out.data[(static_cast<std::size_t>(n) * target_h + y) * w];
            for (int x = 0; x < w; ++x) dst[x] = src[x];
        }
    }
    return out;
}

namespace ref {

ModeKMatrix unfold_mode_k(const HsiCube& cube, int k) {
    check_mode(k);
    const int w = cube.w, h = cube.h, c = cube.c;
    ModeKMatrix m;
    m.mode = k;
    m.source_dims = {w, h, c};
    m.rows = (k == 1) ? w : (k == 2) ? h : c;
    m.cols = static_cast<int>(cube.size() / m.rows);
    m.data.resize(cube.size());
    for (int i3 = 0; i3 < c; ++i3)
        for (int i2 = 0; i2 < h; ++i2)
            for (int i1 = 0; i1 < w; ++i1) {
                int r, col;
                switch (k) {
                    case 1: r = i1; col = i2 + i3 * h; break;
                    case 2: r = i2; col = i1 + i3 * w; break;
                    default: r = i3; col = i1 + i2 * w; break;
                }
                m.data[static_cast<std::size_t>(r) * m.cols + col] = cube.at(i1, i2, i3);
            }
    return m;
}

HsiCube fold_mode_k(const ModeKMatrix& m, std::array<int, 3> dims, int k) {
    check_mode(k);
    if (k != m.mode) throw ShapeError("fold mode does not match matrix mode");
    const auto [w, h, c] = dims;
    if (m.data.size() != static_cast<std::size_t>(w) * h * c)
        throw ShapeError("matrix shape incompatible with fold target dims");
    HsiCube cube(w, h, c);
    for (int i3 = 0; i3 < c; ++i3)
        for (int i2 = 0; i2 < h; ++i2)
            for (int i1 = 0; i1 < w; ++i1) {
                int r, col;
                switch (k) {
                    case 1: r = i1; col = i2 + i3 * h; break;
                    case 2: r = i2; col = i1 + i3 * w; break;
                    default: r = i3; col = i1 + i2 * w; break;
                }
                cube.at(i1, i2, i3) = m.data[static_cast<std::size_t>(r) * m.cols + col];
            }
    return cube;
}

HsiCube shift_cube(const HsiCube& cube, int step) {
    if (step < 0) throw ParameterError("shift step must be non-negative");
    HsiCube out(cube.w, cube.h + step * (cube.c - 1), cube.c);
    for (int n = 0; n < cube.c; ++n)
        for (int y = 0; y < cube.h; ++y)
            for (int x = 0; x < cube.w; ++x)
                out.at(x, y + step * n, n) = cube.at(x, y, n);
    return out;
}

HsiCube unshift_cube(const HsiCube& cube, int step, int target_h) {
    if (step < 0) throw ParameterError("unshift step must be non-negative");
    if (cube.h != target_h + step * (cube.c - 1))
        throw ShapeError("unshift: input height does not equal target_h + step*(C-1)");
    HsiCube out(cube.w, target_h, cube.c);
    for (int n = 0; n < cube.c; ++n)
        for (int y = 0; y < target_h; ++y)
            for (int x = 0; x < cube.w; ++x)
                out.at(x, y, n) = cube.at(x, y + step * n, n);
    return out;
}

} // namespace ref
} // namespace cassikit
