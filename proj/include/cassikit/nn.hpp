#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "cassikit/solver.hpp"
#include "cassikit/ssm.hpp"
#include "cassikit/tensor.hpp"

namespace cassikit {

/// Named weight tensors with deterministic seeded creation. A weight is
/// created on first request from a stream derived from (seed, name), so the
/// same store produces bit-identical values regardless of request order.
/// Values are quantized to float32 at creation to match the on-disk format.
/// Stores loaded from disk are frozen: requesting an absent name throws.
class WeightStore {
public:
    enum class Init { fan_in_uniform, zeros, ones };

    struct Entry {
        std::vector<std::uint32_t> shape;
        std::vector<double> values;
    };

    explicit WeightStore(std::uint64_t seed) : seed_(seed) {}
    WeightStore(WeightStore&& other) noexcept
        : seed_(other.seed_), frozen_(other.frozen_), entries_(std::move(other.entries_)) {}
    WeightStore& operator=(WeightStore&& other) noexcept {
        seed_ = other.seed_;
        frozen_ = other.frozen_;
        entries_ = std::move(other.entries_);
        return *this;
    }

    std::uint64_t seed() const { return seed_; }
    std::uint32_t format_version() const { return 1; }

    /// Fetch a weight tensor, creating it deterministically if absent.
    /// Throws ShapeError if the name exists with a different shape, and
    /// ParameterError if the store is frozen and the name is absent.
    std::span<const double> get(const std::string& name,
                                const std::vector<std::uint32_t>& shape,
                                Init init = Init::fan_in_uniform) const;

    bool has(const std::string& name) const;
    void set(const std::string& name, std::vector<std::uint32_t> shape,
             std::vector<double> values);
    void zero(const std::string& name);
    std::vector<std::string> names() const;

    /// "MJW1" container: u32 entry count; per entry u16 name length, name,
    /// u8 rank, rank u32 dims, float32 little-endian payload; trailing u64
    /// checksum (sum of payload bytes mod 2^64). Entries in name order.
    void save(const std::string& path) const;
    static WeightStore load(const std::string& path);

private:
    std::uint64_t seed_;
    bool frozen_ = false;
    mutable std::mutex mutex_;
    mutable std::map<std::string, Entry> entries_;
};

struct MambaITConfig {
    int channels = 8;        // feature channels the block operates on
    double expansion = 2.0;  // channel expansion factor; floor(expansion*C) >= 1
    int window = 4;          // local attention window
    int global_tokens = 2;
    int levels = 2;          // U-shape depth (consumed by MmbDenoiser)
    int state_dim = 16;      // SSM state size for the scan sub-block
    bool share_direction_weights = false;
    std::vector<ScanDirection> directions = default_scan_directions();

    void validate() const;
};

/// Standard pointwise/conv primitives on W x H x C feature cubes.
HsiCube layer_norm(const HsiCube& x, std::span<const double> gain,
                   std::span<const double> bias);
HsiCube linear(const HsiCube& x, std::span<const double> weights, // out*in row-major
               std::span<const double> bias, int out_channels);
HsiCube conv3x3(const HsiCube& x, std::span<const double> kernels, // out*in*3*3
                std::span<const double> bias, int out_channels);
HsiCube silu(const HsiCube& x);

namespace ref {
HsiCube conv3x3(const HsiCube& x, std::span<const double> kernels,
                std::span<const double> bias, int out_channels);
} // namespace ref

namespace detail {
/// In-place row softmax; every output row sums to one.
void softmax_rows(std::vector<double>& m, int rows, int cols);
} // namespace detail

/// Global-local attention: non-overlapping window attention plus a handful of
/// learned global tokens attending over the window-pooled grid, both added
/// residually. Pads spatial dims to window multiples internally.
HsiCube glam(const HsiCube& x, const WeightStore& store, const std::string& prefix,
             int window, int global_tokens);

/// Two-branch block: X1 = SiLU(Lin(Ln(X))), X2 = GLAM(SiLU(Conv(Lin(Ln(X))))),
/// output Lin(X1 .* X2) projected back to the input channel count. Both
/// branches expand to floor(expansion * C) channels.
HsiCube mamba_i_t(const HsiCube& x, const WeightStore& store, const std::string& prefix,
                  const MambaITConfig& config);

/// mamba_i_t and the mode-k scan block, each residually wrapped.
HsiCube mmit_block(const HsiCube& x, const WeightStore& store, const std::string& prefix,
                   const MambaITConfig& config);

struct MmbConfig {
    MambaITConfig block;
    int base_channels = 8;

    void validate() const;
};

/// U-shaped denoiser over MMIT blocks implementing ProxOperator. The noise
/// level enters as one extra constant input channel; the network output is a
/// global residual on top of the input.
class MmbDenoiser final : public ProxOperator {
public:
    MmbDenoiser(std::shared_ptr<WeightStore> store, MmbConfig config);

    HsiCube denoise(const HsiCube& v, double eta) const override;

    /// Zero every sub-block output projection and the head for cubes with
    /// the given channel count; afterwards denoise() is the identity map.
    void zero_output_projections(int input_channels);

    const MmbConfig& config() const { return config_; }

private:
    std::shared_ptr<WeightStore> store_;
    MmbConfig config_;
};

} // namespace cassikit
