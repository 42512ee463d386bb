#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <string>

#include "cassikit/io.hpp"
#include "cassikit/metrics.hpp"
#include "cassikit/pipeline.hpp"
#include "cassikit/random.hpp"
#include "cassikit/selfcheck.hpp"
#include "cassikit/solver.hpp"
#include "cassikit/ssm.hpp"

namespace {

using namespace cassikit;

int cmd_simulate(const std::string& cube_path, const std::string& mask_path, int step,
                 double sigma, std::uint64_t seed, const std::string& out_path) {
    HsiCube cube = read_cube(cube_path);
    CodedAperture mask = read_mask(mask_path);
    SensingOperator op(mask, step, cube.c);
    write_measurement(out_path, op.simulate_measurement(cube, sigma, seed));
    std::printf("wrote %s (%dx%d measurement)\n", out_path.c_str(), op.width(),
                op.shifted_height());
    return 0;
}

int cmd_reconstruct(const std::string& meas_path, const std::string& mask_path,
                    const std::string& config_path, const std::string& out_path,
                    const std::string& history_path) {
    Measurement y = read_measurement(meas_path);
    CodedAperture mask = read_mask(mask_path);
    RunConfig cfg = RunConfig::parse_file(config_path);

    const int extra = y.h - mask.h;
    if (cfg.step > 0 && (extra < 0 || extra % cfg.step != 0))
        throw ShapeError("measurement height incompatible with mask height and step");
    const int channels = cfg.step > 0 ? extra / cfg.step + 1 : 1;
    SensingOperator op(mask, cfg.step, channels);

    auto prox = make_prox(cfg);
    auto [x, state] = run(cfg.to_solver_config(), op, y, *prox);
    write_cube(out_path, x);
    if (!history_path.empty())
        write_text_file(history_path, convergence_csv(state.residual_history));
    std::printf("wrote %s after %d stages (final fidelity %.6g)\n", out_path.c_str(),
                state.k, state.residual_history.empty()
                             ? 0.0
                             : state.residual_history.back().fidelity);
    return 0;
}

int cmd_selfcheck(std::uint64_t seed) {
    const auto results = run_selfcheck(seed);
    std::size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.name.size());
    int failures = 0;
    for (const auto& r : results) {
        std::printf("%-*s  %s  %s\n", static_cast<int>(width), r.name.c_str(),
                    r.pass ? "PASS" : "FAIL", r.detail.c_str());
        if (!r.pass) ++failures;
    }
    std::printf("%zu checks, %d failing\n", results.size(), failures);
    return failures == 0 ? 0 : 3;
}

int cmd_scan(const std::string& cube_path, int mode, int path, const std::string& out_path) {
    HsiCube cube = read_cube(cube_path);
    ScanDirection dir{mode, path};
    Sequence seq = sequence_from_direction(cube, dir);
    write_text_file(out_path, sequence_csv(seq.feature_dim, seq.data));
    const bool invertible = inverse_sequence(seq).data == cube.data;
    std::printf("wrote %s (L=%d, D=%d); inverse check: %s\n", out_path.c_str(), seq.length,
                seq.feature_dim, invertible ? "ok" : "MISMATCH");
    return invertible ? 0 : 3;
}

int cmd_modes_svd(const std::string& cube_path, const std::string& out_path) {
    HsiCube cube = read_cube(cube_path);
    write_text_file(out_path, modes_svd_csv(cube));
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_metrics(const std::string& ref_path, const std::string& test_path, double peak) {
    HsiCube ref = read_cube(ref_path);
    HsiCube test = read_cube(test_path);
    const double p = psnr(ref, test, peak);
    if (std::isinf(p))
        std::printf("PSNR: inf\n");
    else
        std::printf("PSNR: %.4f dB\n", p);
    std::printf("SSIM: %.6f\n", ssim(ref, test, peak));
    return 0;
}

int cmd_synth(int w, int h, int c, double density, std::uint64_t seed,
              const std::string& cube_path, const std::string& mask_path) {
    if (!cube_path.empty()) {
        write_cube(cube_path, synthetic_scene(w, h, c, seed));
        std::printf("wrote %s (%dx%dx%d scene)\n", cube_path.c_str(), w, h, c);
    }
    if (!mask_path.empty()) {
        write_mask(mask_path, random_binary_mask(w, h, density, derive_seed(seed, "mask")));
        std::printf("wrote %s (density %.2f mask)\n", mask_path.c_str(), density);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coded-aperture snapshot spectral imaging toolkit"};
    app.require_subcommand(1);

    std::string cube_path, mask_path, meas_path, config_path, out_path, history_path;
    std::string ref_path, test_path;
    int step = 1, mode = 1, path = 0, w = 32, h = 32, c = 8;
    double sigma = 0.0, peak = 1.0, density = 0.5;
    std::uint64_t seed = 0;

    auto* simulate = app.add_subcommand("simulate", "forward-model a cube into a measurement");
    simulate->add_option("--cube", cube_path)->required();
    simulate->add_option("--mask", mask_path)->required();
    simulate->add_option("--step", step);
    simulate->add_option("--sigma", sigma);
    simulate->add_option("--seed", seed);
    simulate->add_option("--out", out_path)->required();

    auto* reconstruct = app.add_subcommand("reconstruct", "recover a cube from a measurement");
    reconstruct->add_option("--meas", meas_path)->required();
    reconstruct->add_option("--mask", mask_path)->required();
    reconstruct->add_option("--config", config_path)->required();
    reconstruct->add_option("--out", out_path)->required();
    reconstruct->add_option("--history", history_path);

    auto* selfcheck = app.add_subcommand("selfcheck", "run the verification suite");
    selfcheck->add_option("--seed", seed);

    auto* scan = app.add_subcommand("scan", "serialize a cube along one scan direction");
    scan->add_option("--cube", cube_path)->required();
    scan->add_option("--mode", mode)->check(CLI::Range(1, 3))->required();
    scan->add_option("--path", path)->check(CLI::Range(0, 3))->required();
    scan->add_option("--out", out_path)->required();

    auto* svd = app.add_subcommand("modes-svd", "per-mode singular value spectra as CSV");
    svd->add_option("--cube", cube_path)->required();
    svd->add_option("--out", out_path)->required();

    auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM between two cubes");
    metrics->add_option("--ref", ref_path)->required();
    metrics->add_option("--test", test_path)->required();
    metrics->add_option("--peak", peak);

    auto* synth = app.add_subcommand("synth", "generate a seeded scene and mask");
    synth->add_option("--width", w);
    synth->add_option("--height", h);
    synth->add_option("--channels", c);
    synth->add_option("--density", density);
    synth->add_option("--seed", seed);
    synth->add_option("--cube-out", cube_path);
    synth->add_option("--mask-out", mask_path);

    try {
        app.parse(argc, argv);
        if (simulate->parsed())
            return cmd_simulate(cube_path, mask_path, step, sigma, seed, out_path);
        if (reconstruct->parsed())
            return cmd_reconstruct(meas_path, mask_path, config_path, out_path, history_path);
        if (selfcheck->parsed()) return cmd_selfcheck(seed);
        if (scan->parsed()) return cmd_scan(cube_path, mode, path, out_path);
        if (svd->parsed()) return cmd_modes_svd(cube_path, out_path);
        if (metrics->parsed()) return cmd_metrics(ref_path, test_path, peak);
        if (synth->parsed()) return cmd_synth(w, h, c, density, seed, cube_path, mask_path);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const cassikit::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const cassikit::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const cassikit::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
