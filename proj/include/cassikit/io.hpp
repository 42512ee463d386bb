#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cassikit/cassi.hpp"
#include "cassikit/solver.hpp"
#include "cassikit/tensor.hpp"

namespace cassikit {

/// "HSI1" container: u32 W, H, C; u8 flags (bit 0: wavelengths present);
/// optional C float32 wavelengths; W*H*C float32 payload, channel-major.
void write_cube(const std::string& path, const HsiCube& cube);
HsiCube read_cube(const std::string& path);

/// "MSK1": u32 W, H; float32 payload.
void write_mask(const std::string& path, const CodedAperture& mask);
CodedAperture read_mask(const std::string& path);

/// "MEA1": u32 W, H~; float32 payload.
void write_measurement(const std::string& path, const Measurement& meas);
Measurement read_measurement(const std::string& path);

/// Line-oriented `key = value` reconstruction settings. Unknown keys are
/// rejected; blank lines and '#' comments are ignored.
struct RunConfig {
    int stages = 50;
    double mu0 = 1e-3;
    double mu_rho = 1.0;
    std::string beta_mode = "nesterov"; // nesterov | zero | constant:<c>
    std::string prox = "tv";            // identity | soft | tv | mmb
    double tau = 1.0;
    double eta0 = 0.02;
    int step = 1;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    double tolerance = 0.0;

    static RunConfig parse(const std::string& text);
    static RunConfig parse_file(const std::string& path);
    std::string print() const;

    /// Solver-facing view: schedules expanded, beta mode decoded.
    SolverConfig to_solver_config() const;
};

/// CSV with a header row, '.' decimal separator, '\n' line endings and
/// round-trip-exact "%.17g" numbers.
std::string convergence_csv(const std::vector<StageRecord>& history);
std::string sequence_csv(int feature_dim, const std::vector<double>& data);
std::string modes_svd_csv(const HsiCube& cube);

void write_text_file(const std::string& path, const std::string& text);

} // namespace cassikit
