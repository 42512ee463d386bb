#include <Eigen/Dense>
#include <cmath>
#include <doctest.h>

#include "cassikit/cassi.hpp"
#include "cassikit/random.hpp"
#include "cassikit/solver.hpp"

using namespace cassikit;

namespace {

HsiCube random_cube(int w, int h, int c, std::uint64_t seed, double lo = 0.0,
                    double hi = 1.0) {
    Rng rng(seed);
    HsiCube cube(w, h, c);
    for (double& v : cube.data) v = rng.uniform(lo, hi);
    return cube;
}

CodedAperture binary_mask(int w, int h, std::uint64_t seed, double density = 0.5) {
    Rng rng(seed);
    CodedAperture mask(w, h);
    for (double& v : mask.values) v = rng.unit() < density ? 1.0 : 0.0;
    return mask;
}

CodedAperture ones_mask(int w, int h) {
    CodedAperture mask(w, h);
    for (double& v : mask.values) v = 1.0;
    return mask;
}

} // namespace

TEST_CASE("all-ones mask with one channel and no dispersion is identity sensing") {
    SensingOperator op(ones_mask(4, 3), 0, 1);
    HsiCube x = random_cube(4, 3, 1, 2);
    Measurement y = op.forward(x);
    CHECK(y.values == x.data);
    HsiCube back = op.adjoint(y);
    CHECK(back.data == x.data);
}

TEST_CASE("zero cube maps to zero measurement and back") {
    SensingOperator op(binary_mask(5, 4, 3), 1, 3);
    HsiCube zero(5, 4, 3);
    Measurement y = op.forward(zero);
    for (double v : y.values) CHECK(v == 0.0);
    Measurement zy(5, op.shifted_height());
    HsiCube back = op.adjoint(zy);
    for (double v : back.data) CHECK(v == 0.0);
}

TEST_CASE("shifted mask obeys its defining relation") {
    CodedAperture mask = binary_mask(4, 3, 7);
    SensingOperator op(mask, 2, 3);
    CHECK(op.shifted_height() == 3 + 2 * 2);
    for (int n = 0; n < 3; ++n)
        for (int y = 0; y < op.shifted_height(); ++y)
            for (int x = 0; x < 4; ++x) {
                const int src = y - 2 * n;
                const double expect = (src >= 0 && src < 3) ? mask.at(x, src) : 0.0;
                CHECK(op.shifted_mask(x, y, n) == expect);
            }
}

TEST_CASE("forward matches the densified operator") {
    SensingOperator op(binary_mask(4, 4, 11), 1, 3);
    HsiCube x = random_cube(4, 4, 3, 5, -1.0, 1.0);
    Eigen::VectorXd via_dense = op.densify() * vec(x);
    Eigen::VectorXd direct = vec(op.forward(x));
    CHECK((via_dense - direct).norm() <= 1e-12 * std::max(1.0, direct.norm()));
}

TEST_CASE("densify columns equal forward applied to basis cubes") {
    SensingOperator op(binary_mask(3, 3, 13, 0.6), 1, 2);
    Eigen::MatrixXd a = op.densify();
    for (int j = 0; j < a.cols(); ++j) {
        HsiCube e(3, 3, 2);
        e.data[static_cast<std::size_t>(j)] = 1.0;
        Eigen::VectorXd col = vec(op.forward(e));
        CHECK((a.col(j) - col).norm() == 0.0);
    }
}

TEST_CASE("densify transpose realizes the adjoint") {
    SensingOperator op(binary_mask(4, 3, 17), 2, 3);
    Rng rng(23);
    Measurement y(4, op.shifted_height());
    for (double& v : y.values) v = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd via_dense = op.densify().transpose() * vec(y);
    Eigen::VectorXd direct = vec(op.adjoint(y));
    CHECK((via_dense - direct).norm() <= 1e-12 * std::max(1.0, direct.norm()));
}

TEST_CASE("densify refuses oversized operators") {
    SensingOperator op(ones_mask(200, 200), 2, 28);
    CHECK_THROWS_AS(op.densify(), CapacityError);
}

TEST_CASE("adjoint dot-product identity holds over 100 seeded configurations") {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(99, "adjoint" + std::to_string(trial)));
        const int w = rng.uniform_int(2, 16), h = rng.uniform_int(2, 16);
        const int c = rng.uniform_int(1, 8), step = rng.uniform_int(0, 3);
        SensingOperator op(binary_mask(w, h, rng.next_u64()), step, c);
        HsiCube x(w, h, c);
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        Measurement y(w, op.shifted_height());
        for (double& v : y.values) v = rng.uniform(-1.0, 1.0);
        const double lhs = dot(op.forward(x), y);
        const double rhs = dot(x, op.adjoint(y));
        worst = std::max(worst,
                         std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("forward is linear") {
    SensingOperator op(binary_mask(5, 5, 31), 1, 4);
    HsiCube x1 = random_cube(5, 5, 4, 1, -1.0, 1.0);
    HsiCube x2 = random_cube(5, 5, 4, 2, -1.0, 1.0);
    HsiCube mix(5, 5, 4);
    for (std::size_t i = 0; i < mix.data.size(); ++i)
        mix.data[i] = 1.75 * x1.data[i] - 0.5 * x2.data[i];
    Measurement lhs = op.forward(mix);
    Measurement f1 = op.forward(x1), f2 = op.forward(x2);
    for (std::size_t i = 0; i < lhs.values.size(); ++i) {
        const double rhs = 1.75 * f1.values[i] - 0.5 * f2.values[i];
        CHECK(std::abs(lhs.values[i] - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("parallel forward/adjoint equal the serial scatter reference") {
    SensingOperator op(binary_mask(6, 5, 41), 2, 4);
    HsiCube x = random_cube(6, 5, 4, 3, -1.0, 1.0);
    Measurement y = op.forward(x);
    CHECK(y.values == ref::forward(op, x).values);
    CHECK(op.adjoint(y).data == ref::adjoint(op, y).data);
}

TEST_CASE("gram diagonal counts covering channels for binary masks") {
    CodedAperture mask = binary_mask(5, 4, 43);
    SensingOperator op(mask, 1, 3);
    const std::vector<double>& diag = op.phi_phit_diag();
    for (int y = 0; y < op.shifted_height(); ++y)
        for (int x = 0; x < 5; ++x) {
            int count = 0;
            for (int n = 0; n < 3; ++n) {
                const int src = y - n;
                if (src >= 0 && src < 4 && mask.at(x, src) == 1.0) ++count;
            }
            CHECK(diag[static_cast<std::size_t>(y) * 5 + x] == static_cast<double>(count));
        }
}

TEST_CASE("densified gram is exactly diagonal and matches phi_phit_diag") {
    for (int trial = 0; trial < 6; ++trial) {
        Rng rng(derive_seed(7, "gram" + std::to_string(trial)));
        const int w = rng.uniform_int(2, 6), h = rng.uniform_int(2, 6);
        const int c = rng.uniform_int(1, 4), step = rng.uniform_int(0, 2);
        CodedAperture mask(w, h);
        for (double& v : mask.values) v = trial % 2 ? rng.unit() : (rng.unit() < 0.5 ? 1.0 : 0.0);
        SensingOperator op(mask, step, c);
        Eigen::MatrixXd a = op.densify();
        Eigen::MatrixXd gram = a * a.transpose();
        const std::vector<double>& diag = op.phi_phit_diag();
        for (Eigen::Index i = 0; i < gram.rows(); ++i)
            for (Eigen::Index j = 0; j < gram.cols(); ++j) {
                if (i == j)
                    CHECK(gram(i, j) ==
                          doctest::Approx(diag[static_cast<std::size_t>(i)]).epsilon(1e-14));
                else
                    CHECK(gram(i, j) == 0.0);
            }
    }
}

TEST_CASE("all-ones mask with step >= H gives 0/1 diagonal entries") {
    const int h = 3, step = 4;
    SensingOperator op(ones_mask(3, h), step, 3);
    const std::vector<double>& diag = op.phi_phit_diag();
    for (int y = 0; y < op.shifted_height(); ++y)
        for (int x = 0; x < 3; ++x) {
            // windows [step*n, step*n + H) are disjoint, so coverage is 0 or 1
            int covered = 0;
            for (int n = 0; n < 3; ++n)
                if (y >= step * n && y < step * n + h) ++covered;
            REQUIRE(covered <= 1);
            CHECK(diag[static_cast<std::size_t>(y) * 3 + x] == static_cast<double>(covered));
        }
}

TEST_CASE("simulate_measurement with zero sigma equals forward") {
    SensingOperator op(binary_mask(6, 6, 51), 1, 4);
    HsiCube x = random_cube(6, 6, 4, 9);
    CHECK(op.simulate_measurement(x, 0.0, 123).values == op.forward(x).values);
}

TEST_CASE("simulate_measurement is deterministic per seed") {
    SensingOperator op(binary_mask(6, 6, 53), 1, 4);
    HsiCube x = random_cube(6, 6, 4, 10);
    Measurement a = op.simulate_measurement(x, 0.3, 7);
    Measurement b = op.simulate_measurement(x, 0.3, 7);
    Measurement c = op.simulate_measurement(x, 0.3, 8);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
}

TEST_CASE("noise sample statistics match the requested sigma") {
    SensingOperator op(ones_mask(64, 64), 0, 1);
    HsiCube x = random_cube(64, 64, 1, 11);
    Measurement clean = op.forward(x);
    for (std::uint64_t seed : {1, 2, 3}) {
        Measurement noisy = op.simulate_measurement(x, 0.1, seed);
        double ss = 0.0;
        for (std::size_t i = 0; i < clean.values.size(); ++i) {
            const double d = noisy.values[i] - clean.values[i];
            ss += d * d;
        }
        const double std_dev = std::sqrt(ss / static_cast<double>(clean.values.size()));
        CHECK(std_dev >= 0.09);
        CHECK(std_dev <= 0.11);
    }
}

TEST_CASE("negative sigma is rejected") {
    SensingOperator op(ones_mask(2, 2), 0, 1);
    HsiCube x(2, 2, 1);
    CHECK_THROWS_AS(op.simulate_measurement(x, -0.1, 0), ParameterError);
}

TEST_CASE("dimension mismatches raise shape errors") {
    SensingOperator op(binary_mask(4, 4, 61), 1, 3);
    CHECK_THROWS_AS(op.forward(HsiCube(4, 4, 2)), ShapeError);
    CHECK_THROWS_AS(op.forward(HsiCube(5, 4, 3)), ShapeError);
    CHECK_THROWS_AS(op.adjoint(Measurement(4, 4)), ShapeError);
}

TEST_CASE("operator construction validates the mask") {
    CodedAperture bad(2, 2);
    bad.values[1] = -0.25;
    CHECK_THROWS_AS(SensingOperator(bad, 1, 2), NumericError);
    CHECK_THROWS_AS(SensingOperator(ones_mask(2, 2), -1, 2), ParameterError);
    CHECK_THROWS_AS(SensingOperator(ones_mask(2, 2), 1, 0), ParameterError);
}
