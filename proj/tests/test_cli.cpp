// Drives the installed command-line binary end to end.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <doctest.h>
#include <unistd.h>

#include "cassikit/io.hpp"
#include "cassikit/metrics.hpp"
#include "cassikit/solver.hpp"

using namespace cassikit;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("cassikit_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

int run_cli(const std::string& args, const std::string& output_file = "/dev/null") {
    const std::string cmd =
        std::string(CASSIKIT_CLI_PATH) + " " + args + " > " + output_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("synth, simulate, reconstruct and metrics pipeline") {
    TempDir dir;
    const std::string cube = dir.file("scene.hsi");
    const std::string mask = dir.file("mask.msk");
    const std::string meas = dir.file("y.mea");
    const std::string recon = dir.file("recon.hsi");
    const std::string history = dir.file("history.csv");
    const std::string config = dir.file("run.cfg");
    const std::string log = dir.file("out.txt");

    CHECK(run_cli("synth --width 32 --height 32 --channels 8 --seed 5 --cube-out " + cube +
                  " --mask-out " + mask) == 0);
    CHECK(run_cli("simulate --cube " + cube + " --mask " + mask +
                  " --step 1 --sigma 0.01 --seed 3 --out " + meas) == 0);

    {
        std::ofstream cfg(config);
        cfg << "stages = 50\nprox = tv\nstep = 1\neta0 = 0.02\nmu0 = 0.001\n";
    }
    CHECK(run_cli("reconstruct --meas " + meas + " --mask " + mask + " --config " + config +
                  " --out " + recon + " --history " + history) == 0);

    // reconstruction must beat the plain initialization by at least 5 dB
    HsiCube scene = read_cube(cube);
    SensingOperator op(read_mask(mask), 1, scene.c);
    HsiCube x0 = initialize(op, read_measurement(meas));
    const double gain = psnr(scene, read_cube(recon)) - psnr(scene, x0);
    CHECK(gain >= 5.0);

    const std::string hist = slurp(history);
    CHECK(hist.rfind("stage,fidelity,rel_change\n", 0) == 0);

    CHECK(run_cli("metrics --ref " + cube + " --test " + recon, log) == 0);
    const std::string metrics_out = slurp(log);
    CHECK(metrics_out.find("PSNR:") != std::string::npos);
    CHECK(metrics_out.find("SSIM:") != std::string::npos);
}

TEST_CASE("metrics on identical cubes prints the infinity sentinel") {
    TempDir dir;
    const std::string cube = dir.file("x.hsi");
    const std::string log = dir.file("m.txt");
    CHECK(run_cli("synth --width 16 --height 16 --channels 3 --seed 9 --cube-out " + cube) == 0);
    CHECK(run_cli("metrics --ref " + cube + " --test " + cube, log) == 0);
    const std::string out = slurp(log);
    CHECK(out.find("PSNR: inf") != std::string::npos);
    CHECK(out.find("SSIM: 1.000000") != std::string::npos);
}

TEST_CASE("cli is deterministic given a seed") {
    TempDir dir;
    const std::string cube = dir.file("x.hsi");
    const std::string mask = dir.file("m.msk");
    CHECK(run_cli("synth --width 12 --height 12 --channels 4 --seed 7 --cube-out " + cube +
                  " --mask-out " + mask) == 0);
    const std::string y1 = dir.file("y1.mea"), y2 = dir.file("y2.mea");
    CHECK(run_cli("simulate --cube " + cube + " --mask " + mask +
                  " --step 1 --sigma 0.05 --seed 42 --out " + y1) == 0);
    CHECK(run_cli("simulate --cube " + cube + " --mask " + mask +
                  " --step 1 --sigma 0.05 --seed 42 --out " + y2) == 0);
    CHECK(slurp(y1) == slurp(y2));
    const std::string y3 = dir.file("y3.mea");
    CHECK(run_cli("simulate --cube " + cube + " --mask " + mask +
                  " --step 1 --sigma 0.05 --seed 43 --out " + y3) == 0);
    CHECK(slurp(y1) != slurp(y3));

    const std::string config = dir.file("run.cfg");
    {
        std::ofstream cfg(config);
        cfg << "stages = 5\nprox = tv\nstep = 1\nseed = 11\n";
    }
    const std::string r1 = dir.file("r1.hsi"), r2 = dir.file("r2.hsi");
    const std::string h1 = dir.file("h1.csv"), h2 = dir.file("h2.csv");
    CHECK(run_cli("reconstruct --meas " + y1 + " --mask " + mask + " --config " + config +
                  " --out " + r1 + " --history " + h1) == 0);
    CHECK(run_cli("reconstruct --meas " + y1 + " --mask " + mask + " --config " + config +
                  " --out " + r2 + " --history " + h2) == 0);
    CHECK(slurp(r1) == slurp(r2));
    CHECK(slurp(h1) == slurp(h2));
}

TEST_CASE("scan emits a sequence CSV and verifies inversion") {
    TempDir dir;
    const std::string cube = dir.file("x.hsi");
    const std::string csv = dir.file("seq.csv");
    const std::string log = dir.file("scan.txt");
    CHECK(run_cli("synth --width 6 --height 5 --channels 3 --seed 2 --cube-out " + cube) == 0);
    CHECK(run_cli("scan --cube " + cube + " --mode 2 --path 1 --out " + csv, log) == 0);
    CHECK(slurp(csv).rfind("t,f0,f1,f2,f3,f4\n", 0) == 0);
    CHECK(slurp(log).find("inverse check: ok") != std::string::npos);
}

TEST_CASE("modes-svd writes the spectra table") {
    TempDir dir;
    const std::string cube = dir.file("x.hsi");
    const std::string csv = dir.file("svd.csv");
    CHECK(run_cli("synth --width 8 --height 7 --channels 3 --seed 4 --cube-out " + cube) == 0);
    CHECK(run_cli("modes-svd --cube " + cube + " --out " + csv) == 0);
    CHECK(slurp(csv).rfind("mode,index,sigma,log10_sigma\n", 0) == 0);
}

TEST_CASE("selfcheck exits zero and prints a pass table") {
    TempDir dir;
    const std::string log = dir.file("selfcheck.txt");
    CHECK(run_cli("selfcheck --seed 1", log) == 0);
    const std::string out = slurp(log);
    CHECK(out.find("PASS") != std::string::npos);
    CHECK(out.find("FAIL") == std::string::npos);
    CHECK(out.find("0 failing") != std::string::npos);
}

TEST_CASE("usage and format errors use the documented exit codes") {
    TempDir dir;
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("metrics --ref only.hsi") == 1); // missing required flag
    CHECK(run_cli("simulate --cube a --mask b --out c --bogus 1") == 1);

    const std::string junk = dir.file("junk.hsi");
    std::ofstream(junk) << "not a cube";
    CHECK(run_cli("metrics --ref " + junk + " --test " + junk) == 2);
    CHECK(run_cli("modes-svd --cube " + dir.file("missing.hsi") + " --out " + dir.file("o.csv")) ==
          2);
}
