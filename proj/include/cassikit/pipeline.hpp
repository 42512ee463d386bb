#pragma once

#include <cstdint>
#include <memory>

#include "cassikit/io.hpp"
#include "cassikit/solver.hpp"

namespace cassikit {

/// Piecewise-smooth seeded test scene: a few separable spatial shapes times
/// smooth spectral curves, normalized to [0,1]. Low mode-3 rank by
/// construction.
HsiCube synthetic_scene(int w, int h, int c, std::uint64_t seed);

/// Seeded binary mask with the given "on" density.
CodedAperture random_binary_mask(int w, int h, double density, std::uint64_t seed);

/// Instantiate the prox selected by config.prox:
///   identity | soft (threshold tau*eta) | tv (weight tau*eta) | mmb (seeded).
std::unique_ptr<ProxOperator> make_prox(const RunConfig& config);

} // namespace cassikit
