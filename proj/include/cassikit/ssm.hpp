#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cassikit/tensor.hpp"

namespace cassikit {

/// Selective state-space parameters. Per step t the input x_t is projected to
/// (B_t, C_t, Delta_t); Delta is up-projected to one timescale per feature
/// channel and passed through softplus; the transition uses the
/// exp(-exp(A_log * dt)) discretization, whose entries always lie in (0,1).
struct SsmParams {
    int feature_dim = 0; // D
    int state_dim = 0;   // N
    int dt_rank = 0;     // R
    std::vector<double> a_log;  // D x N, row-major
    std::vector<double> d_skip; // D
    std::vector<double> w_proj; // (2N + R) x D, row-major; rows: B, C, Delta
    std::vector<double> w_dt;   // D x R, row-major

    void validate() const;

    static int default_state_dim() { return 16; }
    static int default_dt_rank(int d) { return d > 16 ? (d + 15) / 16 : 1; }

    /// Deterministic seeded initialization, uniform +-1/sqrt(fan_in); the
    /// skip scale starts at one.
    static SsmParams seeded(int feature_dim, int state_dim, int dt_rank,
                            std::uint64_t seed);
};

/// One of the 12 serialization orders: mode in {1,2,3} picks the unfolding,
/// path in {0..3} the traversal of the unfolded column grid:
///   0 natural order, 1 reversed within each row-block,
///   2 full reverse of 0, 3 full reverse of 1.
struct ScanDirection {
    int mode = 1;
    int path = 0;

    friend bool operator==(const ScanDirection&, const ScanDirection&) = default;
    friend auto operator<=>(const ScanDirection&, const ScanDirection&) = default;
};

std::array<ScanDirection, 12> all_scan_directions();

inline std::vector<ScanDirection> default_scan_directions() {
    const auto dirs = all_scan_directions();
    return {dirs.begin(), dirs.end()};
}

/// Token sequence produced by serializing a cube: L steps of D features,
/// plus the provenance needed to invert the serialization exactly.
struct Sequence {
    struct Provenance {
        ScanDirection direction;
        std::array<int, 3> source_dims{0, 0, 0};
    };

    int length = 0;      // L
    int feature_dim = 0; // D
    std::vector<double> data; // L x D, step-major
    std::optional<Provenance> provenance;

    double& at(int t, int d) { return data[static_cast<std::size_t>(t) * feature_dim + d]; }
    double at(int t, int d) const { return data[static_cast<std::size_t>(t) * feature_dim + d]; }
};

Sequence sequence_from_direction(const HsiCube& cube, ScanDirection dir);
HsiCube inverse_sequence(const Sequence& seq);

/// Per-step discretized parameters for one input token.
struct DiscretizedStep {
    std::vector<double> a_bar; // D x N, entries in (0,1)
    std::vector<double> b_bar; // D x N
    std::vector<double> c;     // N
};

DiscretizedStep discretize(const SsmParams& params, const std::vector<double>& x_t);

/// Sequential recurrence h_t = A_bar_t .* h_{t-1} + B_bar_t .* x_t,
/// y_t = C_t^T h_t + D_skip .* x_t. The reference path for the chunked scan.
Sequence selective_scan(const SsmParams& params, const Sequence& seq);

/// Blocked scan: per-chunk local scans and transition prefix products run in
/// parallel, boundary states are carried sequentially, then chunks re-scan
/// from their boundary state. Matches selective_scan to 1e-12 relative.
Sequence selective_scan_chunked(const SsmParams& params, const Sequence& seq,
                                int chunk_len);

struct ScanGradients {
    Sequence grad_seq;  // dL/dx, same shape as the input sequence
    SsmParams grad_params; // dL/d(a_log, d_skip, w_proj, w_dt), same shapes
};

/// Exact reverse-mode derivatives of sum_t <grad_out_t, y_t> via the reverse
/// recurrence g_{t-1} = A_bar_t .* g_t + local terms.
ScanGradients scan_backward(const SsmParams& params, const Sequence& seq,
                            const Sequence& grad_out);

/// Per-channel affine fusion applied after averaging direction outputs.
struct FuseWeights {
    std::vector<double> scale; // C
    std::vector<double> bias;  // C

    static FuseWeights identity(int channels) {
        return {std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0)};
    }
};

/// Runs one selective scan per requested direction, folds each output back
/// into cube layout, averages, and applies the per-channel fusion map.
HsiCube mk_mamba_block(const HsiCube& cube,
                       const std::map<ScanDirection, SsmParams>& params_per_direction,
                       const std::vector<ScanDirection>& directions,
                       const FuseWeights& fuse);

} // namespace cassikit
