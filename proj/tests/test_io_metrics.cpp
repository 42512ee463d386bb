#include <cmath>
#include <filesystem>
#include <fstream>
#include <doctest.h>
#include <unistd.h>

#include "cassikit/io.hpp"
#include "cassikit/metrics.hpp"
#include "cassikit/pipeline.hpp"
#include "cassikit/random.hpp"

using namespace cassikit;

namespace {

HsiCube random_cube(int w, int h, int c, std::uint64_t seed, double lo = 0.0,
                    double hi = 1.0) {
    Rng rng(seed);
    HsiCube cube(w, h, c);
    for (double& v : cube.data) v = rng.uniform(lo, hi);
    return cube;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream(path, std::ios::binary).write(bytes.data(),
                                                static_cast<std::streamsize>(bytes.size()));
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("cassikit_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
    static inline int counter = 0;
};

} // namespace

TEST_CASE("psnr of identical cubes is the infinity sentinel") {
    HsiCube x = random_cube(4, 4, 2, 3);
    CHECK(std::isinf(psnr(x, x)));
}

TEST_CASE("uniform 0.1 offset gives 20 dB at unit peak") {
    HsiCube ref = random_cube(5, 5, 3, 5);
    HsiCube test = ref;
    for (double& v : test.data) v += 0.1;
    CHECK(psnr(ref, test, 1.0) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("psnr is symmetric and validates shapes") {
    HsiCube a = random_cube(4, 4, 1, 7);
    HsiCube b = random_cube(4, 4, 1, 8);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, HsiCube(4, 4, 2)), ShapeError);
    CHECK_THROWS_AS(psnr(a, b, 0.0), ParameterError);
}

TEST_CASE("ssim of identical cubes is exactly one") {
    HsiCube x = random_cube(16, 16, 2, 9);
    CHECK(ssim(x, x) == 1.0);
    HsiCube c1(12, 12, 1, 0.37), c2(12, 12, 1, 0.37);
    CHECK(ssim(c1, c2) == 1.0);
}

TEST_CASE("heavy noise drives ssim below 0.2") {
    // piecewise-smooth reference; i.i.d. noise then wipes out the local
    // structure the index measures
    HsiCube ref = synthetic_scene(64, 64, 1, 11);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(derive_seed(13, std::to_string(seed)));
        HsiCube noisy = ref;
        for (double& v : noisy.data) v += 0.5 * rng.gaussian();
        CHECK(ssim(ref, noisy) < 0.2);
    }
}

TEST_CASE("ssim rejects windows larger than the image") {
    HsiCube small = random_cube(10, 12, 1, 15);
    CHECK_THROWS_AS(ssim(small, small), ParameterError);
}

TEST_CASE("cube files round trip bit-exactly, with and without wavelengths") {
    TempDir dir;
    HsiCube plain = random_cube(4, 5, 3, 17);
    const std::string p1 = dir.file("plain.hsi");
    write_cube(p1, plain);
    const std::string b1 = read_bytes(p1);
    CHECK(b1.substr(0, 4) == "HSI1");
    HsiCube got = read_cube(p1);
    CHECK(got.w == 4);
    CHECK(got.wavelengths.empty());
    write_cube(p1, got);
    CHECK(read_bytes(p1) == b1);

    HsiCube tagged = plain;
    tagged.wavelengths = {450.0, 550.0, 650.0};
    const std::string p2 = dir.file("tagged.hsi");
    write_cube(p2, tagged);
    const std::string b2 = read_bytes(p2);
    HsiCube got2 = read_cube(p2);
    REQUIRE(got2.wavelengths.size() == 3);
    CHECK(got2.wavelengths[1] == 550.0);
    write_cube(p2, got2);
    CHECK(read_bytes(p2) == b2);
    CHECK(b2.size() == b1.size() + 3 * 4);
}

TEST_CASE("mask and measurement files round trip bit-exactly") {
    TempDir dir;
    CodedAperture mask = random_binary_mask(6, 4, 0.5, 19);
    const std::string mp = dir.file("m.msk");
    write_mask(mp, mask);
    const std::string mb = read_bytes(mp);
    CHECK(mb.substr(0, 4) == "MSK1");
    write_mask(mp, read_mask(mp));
    CHECK(read_bytes(mp) == mb);

    Measurement meas(3, 7);
    Rng rng(21);
    for (double& v : meas.values) v = rng.uniform(-1.0, 1.0);
    const std::string yp = dir.file("y.mea");
    write_measurement(yp, meas);
    const std::string yb = read_bytes(yp);
    CHECK(yb.substr(0, 4) == "MEA1");
    write_measurement(yp, read_measurement(yp));
    CHECK(read_bytes(yp) == yb);
}

TEST_CASE("malformed files report the offending byte offset") {
    TempDir dir;
    HsiCube cube = random_cube(3, 3, 2, 23);
    const std::string path = dir.file("c.hsi");
    write_cube(path, cube);
    std::string bytes = read_bytes(path);

    SUBCASE("wrong magic at offset zero") {
        bytes[0] = 'Z';
        write_bytes(path, bytes);
        try {
            read_cube(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 0);
        }
    }
    SUBCASE("truncated payload") {
        bytes.resize(bytes.size() - 2);
        write_bytes(path, bytes);
        CHECK_THROWS_AS(read_cube(path), FormatError);
    }
    SUBCASE("trailing garbage") {
        bytes += "xx";
        write_bytes(path, bytes);
        CHECK_THROWS_AS(read_cube(path), FormatError);
    }
    SUBCASE("wrong container magic") {
        CHECK_THROWS_AS(read_mask(path), FormatError);
    }
}

TEST_CASE("run config parse/print round trip preserves semantics") {
    RunConfig cfg;
    cfg.stages = 37;
    cfg.mu0 = 0.004;
    cfg.mu_rho = 0.97;
    cfg.beta_mode = "constant:0.35";
    cfg.prox = "soft";
    cfg.tau = 2.5;
    cfg.eta0 = 0.015;
    cfg.step = 2;
    cfg.noise_sigma = 0.02;
    cfg.seed = 99;
    cfg.tolerance = 1e-7;

    RunConfig back = RunConfig::parse(cfg.print());
    CHECK(back.print() == cfg.print());
    CHECK(back.stages == 37);
    CHECK(back.beta_mode == "constant:0.35");
    CHECK(back.seed == 99);

    SolverConfig sc = back.to_solver_config();
    CHECK(sc.stages == 37);
    CHECK(sc.beta_mode == BetaMode::constant);
    CHECK(sc.beta_constant == doctest::Approx(0.35));
    CHECK(sc.mu_schedule[1] == doctest::Approx(0.004 * 0.97));
    CHECK(sc.eta_schedule[36] == doctest::Approx(0.015));
}

TEST_CASE("run config accepts comments and rejects unknown keys") {
    RunConfig ok = RunConfig::parse("# comment\n\nstages = 5\nprox = tv\n");
    CHECK(ok.stages == 5);
    CHECK(ok.prox == "tv");
    CHECK_THROWS_AS(RunConfig::parse("stage_count = 5\n"), FormatError);
    CHECK_THROWS_AS(RunConfig::parse("stages: 5\n"), FormatError);
    CHECK_THROWS_AS(RunConfig::parse("mu0 = abc\n"), FormatError);
    CHECK_THROWS_AS(RunConfig{.beta_mode = "sometimes"}.to_solver_config(), FormatError);
}

TEST_CASE("convergence CSV has the documented golden layout") {
    std::vector<StageRecord> history{{0, 1.5, 0.25}, {1, 0.75, 0.125}};
    CHECK(convergence_csv(history) ==
          "stage,fidelity,rel_change\n0,1.5,0.25\n1,0.75,0.125\n");
}

TEST_CASE("sequence CSV enumerates steps with features") {
    CHECK(sequence_csv(2, {1.0, 2.0, 3.0, 4.0}) == "t,f0,f1\n0,1,2\n1,3,4\n");
    CHECK_THROWS_AS(sequence_csv(3, {1.0, 2.0}), ShapeError);
}

TEST_CASE("modes-svd CSV lists all three modes with log10 values") {
    HsiCube cube = random_cube(4, 3, 2, 29);
    const std::string csv = modes_svd_csv(cube);
    CHECK(csv.rfind("mode,index,sigma,log10_sigma\n", 0) == 0);
    int lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 1 + 4 + 3 + 2); // header + min(rows, cols) per mode
}

TEST_CASE("prox factory builds the documented tags") {
    RunConfig cfg;
    cfg.prox = "identity";
    CHECK(make_prox(cfg) != nullptr);
    cfg.prox = "soft";
    CHECK(make_prox(cfg) != nullptr);
    cfg.prox = "tv";
    CHECK(make_prox(cfg) != nullptr);
    cfg.prox = "mmb";
    CHECK(make_prox(cfg) != nullptr);
    cfg.prox = "wavelet";
    CHECK_THROWS_AS(make_prox(cfg), ParameterError);
}

TEST_CASE("synthetic scenes are normalized and low rank along mode 3") {
    HsiCube scene = synthetic_scene(24, 24, 6, 31);
    double peak = 0.0;
    for (double v : scene.data) {
        CHECK(v >= 0.0);
        peak = std::max(peak, v);
    }
    CHECK(peak == doctest::Approx(1.0));
    const std::vector<double> sv = mode_singular_values(scene, 3);
    int above = 0;
    for (double s : sv)
        if (s > 1e-10 * sv[0]) ++above;
    CHECK(above <= 3);
}
