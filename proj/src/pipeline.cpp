#include "cassikit/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "cassikit/nn.hpp"
#include "cassikit/priors.hpp"
#include "cassikit/random.hpp"

namespace cassikit {

HsiCube synthetic_scene(int w, int h, int c, std::uint64_t seed) {
    Rng rng(seed);
    HsiCube cube(w, h, c);

    // three separable terms: rectangle, disk, rectangle
    for (int term = 0; term < 3; ++term) {
        const double cx = rng.uniform(0.2, 0.8) * w;
        const double cy = rng.uniform(0.2, 0.8) * h;
        const double rx = rng.uniform(0.12, 0.3) * w;
        const double ry = rng.uniform(0.12, 0.3) * h;
        const double band_center = rng.uniform(0.15, 0.85) * (c - 1);
        const double band_width = rng.uniform(0.25, 0.6) * c;
        const double amplitude = rng.uniform(0.5, 1.0);
        const bool disk = term == 1;

        std::vector<double> spectrum(static_cast<std::size_t>(c));
        for (int ch = 0; ch < c; ++ch) {
            const double d = (ch - band_center) / band_width;
            spectrum[ch] = amplitude * std::exp(-0.5 * d * d);
        }

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double g;
                if (disk) {
                    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                    g = dx * dx + dy * dy <= 1.0 ? 1.0 : 0.0;
                } else {
                    g = (std::abs(x - cx) <= rx && std::abs(y - cy) <= ry) ? 1.0 : 0.0;
                }
                if (g == 0.0) continue;
                for (int ch = 0; ch < c; ++ch) cube.at(x, y, ch) += g * spectrum[ch];
            }
    }

    const double peak = *std::max_element(cube.data.begin(), cube.data.end());
    if (peak > 0.0)
        for (double& v : cube.data) v /= peak;
    return cube;
}

CodedAperture random_binary_mask(int w, int h, double density, std::uint64_t seed) {
    if (!(density >= 0.0 && density <= 1.0))
        throw ParameterError("mask density must lie in [0, 1]");
    Rng rng(seed);
    CodedAperture mask(w, h);
    for (double& v : mask.values) v = rng.unit() < density ? 1.0 : 0.0;
    return mask;
}

std::unique_ptr<ProxOperator> make_prox(const RunConfig& config) {
    if (config.prox == "identity") return std::make_unique<IdentityProx>();
    if (config.prox == "soft") return std::make_unique<SoftThresholdProx>(config.tau);
    if (config.prox == "tv") {
        TvConfig tv;
        tv.lambda_scale = config.tau;
        return std::make_unique<TvProx>(tv);
    }
    if (config.prox == "mmb") {
        auto store = std::make_shared<WeightStore>(config.seed);
        return std::make_unique<MmbDenoiser>(std::move(store), MmbConfig{});
    }
    throw ParameterError("unknown prox tag: " + config.prox);
}

} // namespace cassikit
