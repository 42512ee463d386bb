#include "cassikit/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace cassikit {

double psnr(const HsiCube& ref, const HsiCube& test, double peak) {
    if (!ref.same_dims(test)) throw ShapeError("psnr operands differ in shape");
    if (!(peak > 0.0)) throw ParameterError("psnr peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
        const double d = ref.data[i] - test.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(ref.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - (kWindow - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Separable valid-region Gaussian filtering of one channel.
std::vector<double> filter_channel(const double* src, int w, int h) {
    const auto g = gaussian_taps();
    const int ow = w - kWindow + 1, oh = h - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k)
                acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k)
                acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace

double ssim(const HsiCube& ref, const HsiCube& test, double peak) {
    if (!ref.same_dims(test)) throw ShapeError("ssim operands differ in shape");
    if (ref.w < kWindow || ref.h < kWindow)
        throw ParameterError("ssim requires spatial dimensions of at least 11");
    if (!(peak > 0.0)) throw ParameterError("ssim peak must be positive");

    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const std::size_t plane = static_cast<std::size_t>(ref.w) * ref.h;

    double channel_sum = 0.0;
    for (int ch = 0; ch < ref.c; ++ch) {
        const double* a = &ref.data[plane * ch];
        const double* b = &test.data[plane * ch];

        std::vector<double> aa(plane), bb(plane), ab(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        const auto mu_a = filter_channel(a, ref.w, ref.h);
        const auto mu_b = filter_channel(b, ref.w, ref.h);
        const auto m_aa = filter_channel(aa.data(), ref.w, ref.h);
        const auto m_bb = filter_channel(bb.data(), ref.w, ref.h);
        const auto m_ab = filter_channel(ab.data(), ref.w, ref.h);

        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
            const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
            acc += num / den;
        }
        channel_sum += acc / static_cast<double>(mu_a.size());
    }
    return channel_sum / static_cast<double>(ref.c);
}

} // namespace cassikit
