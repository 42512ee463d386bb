#include "cassikit/nn.hpp"

#include <algorithm>
#include <exception>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cassikit/random.hpp"

namespace cassikit {

// ---------------------------------------------------------------------------
// WeightStore

namespace {

std::size_t shape_count(const std::vector<std::uint32_t>& shape) {
    std::size_t n = 1;
    for (std::uint32_t d : shape) n *= d;
    return n;
}

double init_scale(const std::vector<std::uint32_t>& shape) {
    // fan-in: everything but the leading (output) dimension; the full size
    // for rank-1 tensors.
    std::size_t fan = 1;
    if (shape.size() >= 2)
        for (std::size_t i = 1; i < shape.size(); ++i) fan *= shape[i];
    else if (!shape.empty())
        fan = shape[0];
    return 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan, 1)));
}

} // namespace

std::span<const double> WeightStore::get(const std::string& name,
                                         const std::vector<std::uint32_t>& shape,
                                         Init init) const {
    if (shape.empty() || shape_count(shape) == 0)
        throw ShapeError("weight shape must be non-empty: " + name);
    std::scoped_lock lock(mutex_);
    auto it = entries_.find(name);
    if (it != entries_.end()) {
        if (it->second.shape != shape)
            throw ShapeError("weight exists with a different shape: " + name);
        return {it->second.values.data(), it->second.values.size()};
    }
    if (frozen_)
        throw ParameterError("weight not present in loaded store: " + name);

    Entry e;
    e.shape = shape;
    e.values.resize(shape_count(shape));
    switch (init) {
        case Init::zeros:
            std::fill(e.values.begin(), e.values.end(), 0.0);
            break;
        case Init::ones:
            std::fill(e.values.begin(), e.values.end(), 1.0);
            break;
        case Init::fan_in_uniform: {
            Rng rng(derive_seed(seed_, name));
            const double s = init_scale(shape);
            for (double& v : e.values)
                v = static_cast<double>(static_cast<float>(rng.uniform(-s, s)));
            break;
        }
    }
    auto [pos, ok] = entries_.emplace(name, std::move(e));
    (void)ok;
    return {pos->second.values.data(), pos->second.values.size()};
}

bool WeightStore::has(const std::string& name) const {
    std::scoped_lock lock(mutex_);
    return entries_.count(name) != 0;
}

void WeightStore::set(const std::string& name, std::vector<std::uint32_t> shape,
                      std::vector<double> values) {
    if (values.size() != shape_count(shape))
        throw ShapeError("weight payload does not match shape: " + name);
    std::scoped_lock lock(mutex_);
    auto it = entries_.find(name);
    if (it != entries_.end() && it->second.shape != shape)
        throw ShapeError("weight exists with a different shape: " + name);
    entries_[name] = Entry{std::move(shape), std::move(values)};
}

void WeightStore::zero(const std::string& name) {
    std::scoped_lock lock(mutex_);
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw ParameterError("cannot zero unknown weight: " + name);
    std::fill(it->second.values.begin(), it->second.values.end(), 0.0);
}

std::vector<std::string> WeightStore::names() const {
    std::scoped_lock lock(mutex_);
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

namespace {

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

    void expect_magic(const char* magic) {
        if (bytes_.size() < pos_ + 4 || std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
            throw FormatError(std::string("bad magic, expected ") + magic, pos_);
        pos_ += 4;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i)
            v |= static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t sum_bytes(std::size_t from, std::size_t to) const {
        std::uint64_t s = 0;
        for (std::size_t i = from; i < to; ++i)
            s += static_cast<unsigned char>(bytes_[i]);
        return s;
    }

private:
    void need(std::size_t n) {
        if (bytes_.size() < pos_ + n) throw FormatError("unexpected end of file", pos_);
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open file for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

void WeightStore::save(const std::string& path) const {
    std::scoped_lock lock(mutex_);
    std::string buf;
    buf.append("MJW1");
    put_u32(buf, static_cast<std::uint32_t>(entries_.size()));
    std::uint64_t checksum = 0;
    for (const auto& [name, e] : entries_) {
        put_u16(buf, static_cast<std::uint16_t>(name.size()));
        buf.append(name);
        buf.push_back(static_cast<char>(e.shape.size()));
        for (std::uint32_t d : e.shape) put_u32(buf, d);
        for (double v : e.values) {
            const std::size_t before = buf.size();
            put_f32(buf, static_cast<float>(v));
            for (std::size_t i = before; i < buf.size(); ++i)
                checksum += static_cast<unsigned char>(buf[i]);
        }
    }
    put_u64(buf, checksum);
    write_file_atomic(path, buf);
}

WeightStore WeightStore::load(const std::string& path) {
    ByteReader r(read_file_bytes(path));
    r.expect_magic("MJW1");
    const std::uint32_t count = r.u32();

    WeightStore store(0);
    store.frozen_ = true;
    std::uint64_t checksum = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint8_t rank = r.u8();
        Entry e;
        e.shape.resize(rank);
        for (auto& d : e.shape) {
            d = r.u32();
            if (d == 0) throw FormatError("zero dimension in weight shape", r.offset() - 4);
        }
        const std::size_t payload_begin = r.offset();
        e.values.resize(shape_count(e.shape));
        for (double& v : e.values) v = static_cast<double>(r.f32());
        checksum += r.sum_bytes(payload_begin, r.offset());
        if (store.entries_.count(name))
            throw FormatError("duplicate weight name: " + name, payload_begin);
        store.entries_.emplace(name, std::move(e));
    }
    const std::size_t checksum_at = r.offset();
    if (r.u64() != checksum) throw FormatError("payload checksum mismatch", checksum_at);
    if (!r.at_end()) throw FormatError("trailing bytes after checksum", r.offset());
    return store;
}

// ---------------------------------------------------------------------------
// Primitive blocks

void MambaITConfig::validate() const {
    if (channels < 1) throw ParameterError("block channel count must be positive");
    if (static_cast<int>(expansion * channels) < 1)
        throw ParameterError("expansion factor too small: floor(expansion*C) < 1");
    if (window < 1) throw ParameterError("attention window must be positive");
    if (global_tokens < 1) throw ParameterError("global token count must be positive");
    if (levels < 1) throw ParameterError("U-shape depth must be positive");
    if (state_dim < 1) throw ParameterError("SSM state size must be positive");
    if (directions.empty()) throw ParameterError("direction set must be non-empty");
}

void MmbConfig::validate() const {
    block.validate();
    if (base_channels < 1) throw ParameterError("base channel count must be positive");
}

HsiCube layer_norm(const HsiCube& x, std::span<const double> gain,
                   std::span<const double> bias) {
    if (static_cast<int>(gain.size()) != x.c || static_cast<int>(bias.size()) != x.c)
        throw ShapeError("layer_norm gain/bias must have one entry per channel");
    constexpr double kEps = 1e-5;
    HsiCube out(x.w, x.h, x.c);
    const std::size_t plane = static_cast<std::size_t>(x.w) * x.h;

#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(plane); ++i) {
        double mean = 0.0;
        for (int ch = 0; ch < x.c; ++ch) mean += x.data[plane * ch + i];
        mean /= x.c;
        double var = 0.0;
        for (int ch = 0; ch < x.c; ++ch) {
            const double d = x.data[plane * ch + i] - mean;
            var += d * d;
        }
        var /= x.c;
        const double inv = 1.0 / std::sqrt(var + kEps);
        for (int ch = 0; ch < x.c; ++ch)
            out.data[plane * ch + i] =
                (x.data[plane * ch + i] - mean) * inv * gain[ch] + bias[ch];
    }
    return out;
}

HsiCube linear(const HsiCube& x, std::span<const double> weights,
               std::span<const double> bias, int out_channels) {
    if (out_channels < 1) throw ParameterError("linear output channels must be positive");
    if (weights.size() != static_cast<std::size_t>(out_channels) * x.c)
        throw ShapeError("linear weight matrix must be out_channels x in_channels");
    if (!bias.empty() && static_cast<int>(bias.size()) != out_channels)
        throw ShapeError("linear bias must have one entry per output channel");

    HsiCube out(x.w, x.h, out_channels);
    const std::size_t plane = static_cast<std::size_t>(x.w) * x.h;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(plane); ++i) {
        for (int oc = 0; oc < out_channels; ++oc) {
            double acc = bias.empty() ? 0.0 : bias[oc];
            const double* wrow = &weights[static_cast<std::size_t>(oc) * x.c];
            for (int ic = 0; ic < x.c; ++ic) acc += wrow[ic] * x.data[plane * ic + i];
            out.data[plane * oc + i] = acc;
        }
    }
    return out;
}

namespace {

HsiCube conv3x3_impl(const HsiCube& x, std::span<const double> kernels,
                     std::span<const double> bias, int out_channels, int stride) {
    if (out_channels < 1) throw ParameterError("conv output channels must be positive");
    if (kernels.size() != static_cast<std::size_t>(out_channels) * x.c * 9)
        throw ShapeError("conv kernel tensor must be out x in x 3 x 3");
    if (!bias.empty() && static_cast<int>(bias.size()) != out_channels)
        throw ShapeError("conv bias must have one entry per output channel");

    const int ow = (x.w + stride - 1) / stride;
    const int oh = (x.h + stride - 1) / stride;
    HsiCube out(ow, oh, out_channels);

#pragma omp parallel for
    for (int oc = 0; oc < out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[oc];
                const int cy = oy * stride, cx = ox * stride;
                for (int ic = 0; ic < x.c; ++ic) {
                    const double* k =
                        &kernels[(static_cast<std::size_t>(oc) * x.c + ic) * 9];
                    for (int ky = -1; ky <= 1; ++ky) {
                        const int sy = cy + ky;
                        if (sy < 0 || sy >= x.h) continue;
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int sx = cx + kx;
                            if (sx < 0 || sx >= x.w) continue;
                            acc += k[(ky + 1) * 3 + (kx + 1)] * x.at(sx, sy, ic);
                        }
                    }
                }
                out.at(ox, oy, oc) = acc;
            }
    }
    return out;
}

} // namespace

HsiCube conv3x3(const HsiCube& x, std::span<const double> kernels,
                std::span<const double> bias, int out_channels) {
    return conv3x3_impl(x, kernels, bias, out_channels, 1);
}

namespace ref {

HsiCube conv3x3(const HsiCube& x, std::span<const double> kernels,
                std::span<const double> bias, int out_channels) {
    if (out_channels < 1) throw ParameterError("conv output channels must be positive");
    if (kernels.size() != static_cast<std::size_t>(out_channels) * x.c * 9)
        throw ShapeError("conv kernel tensor must be out x in x 3 x 3");
    HsiCube out(x.w, x.h, out_channels);
    for (int oc = 0; oc < out_channels; ++oc)
        for (int oy = 0; oy < x.h; ++oy)
            for (int ox = 0; ox < x.w; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[oc];
                for (int ic = 0; ic < x.c; ++ic)
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int sy = oy + ky, sx = ox + kx;
                            if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                            acc += kernels[(static_cast<std::size_t>(oc) * x.c + ic) * 9 +
                                           (ky + 1) * 3 + (kx + 1)] *
                                   x.at(sx, sy, ic);
                        }
                out.at(ox, oy, oc) = acc;
            }
    return out;
}

} // namespace ref

HsiCube silu(const HsiCube& x) {
    HsiCube out = x;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(out.data.size()); ++i) {
        const double v = out.data[i];
        out.data[i] = v / (1.0 + std::exp(-v));
    }
    return out;
}

namespace detail {

void softmax_rows(std::vector<double>& m, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* row = &m[static_cast<std::size_t>(r) * cols];
        double mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        if (!std::isfinite(mx)) throw NumericError("softmax: non-finite attention logits");
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < cols; ++c) row[c] /= sum;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// GLAM

namespace {

HsiCube pad_spatial(const HsiCube& x, int multiple) {
    const int wp = (x.w + multiple - 1) / multiple * multiple;
    const int hp = (x.h + multiple - 1) / multiple * multiple;
    if (wp == x.w && hp == x.h) return x;
    HsiCube out(wp, hp, x.c);
    for (int ch = 0; ch < x.c; ++ch)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) out.at(xx, y, ch) = x.at(xx, y, ch);
    return out;
}

HsiCube crop_spatial(const HsiCube& x, int w, int h) {
    if (w == x.w && h == x.h) return x;
    HsiCube out(w, h, x.c);
    for (int ch = 0; ch < x.c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(xx, y, ch) = x.at(xx, y, ch);
    return out;
}

std::vector<std::uint32_t> sq(int a, int b) {
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
}

} // namespace

HsiCube glam(const HsiCube& x, const WeightStore& store, const std::string& prefix,
             int window, int global_tokens) {
    if (window < 1 || global_tokens < 1)
        throw ParameterError("glam requires positive window and token count");
    const int c = x.c;
    const auto wq = store.get(prefix + ".loc.q", sq(c, c));
    const auto wk = store.get(prefix + ".loc.k", sq(c, c));
    const auto wv = store.get(prefix + ".loc.v", sq(c, c));
    const auto tokens = store.get(prefix + ".glob.tokens", sq(global_tokens, c));
    const auto gk = store.get(prefix + ".glob.k", sq(c, c));
    const auto gv = store.get(prefix + ".glob.v", sq(c, c));
    const auto gout = store.get(prefix + ".glob.out", sq(c, c));

    HsiCube padded = pad_spatial(x, window);
    const int wp = padded.w, hp = padded.h;
    const int nx = wp / window, ny = hp / window;
    const int tokens_per_window = window * window;
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    const std::size_t plane = static_cast<std::size_t>(wp) * hp;

    HsiCube local(wp, hp, c);
    std::vector<double> pooled(static_cast<std::size_t>(nx) * ny * c, 0.0);

    // carry exceptions out of the parallel region
    std::exception_ptr failure = nullptr;
#pragma omp parallel for
    for (int win = 0; win < nx * ny; ++win) {
      try {
        const int wx = (win % nx) * window;
        const int wy = (win / nx) * window;

        // gather window tokens and their projections
        std::vector<double> feat(static_cast<std::size_t>(tokens_per_window) * c);
        for (int t = 0; t < tokens_per_window; ++t) {
            const int px = wx + t % window, py = wy + t / window;
            for (int ch = 0; ch < c; ++ch)
                feat[static_cast<std::size_t>(t) * c + ch] = padded.at(px, py, ch);
        }
        auto project = [&](std::span<const double> w, std::vector<double>& dst) {
            dst.assign(static_cast<std::size_t>(tokens_per_window) * c, 0.0);
            for (int t = 0; t < tokens_per_window; ++t)
                for (int oc = 0; oc < c; ++oc) {
                    double acc = 0.0;
                    for (int ic = 0; ic < c; ++ic)
                        acc += w[static_cast<std::size_t>(oc) * c + ic] *
                               feat[static_cast<std::size_t>(t) * c + ic];
                    dst[static_cast<std::size_t>(t) * c + oc] = acc;
                }
        };
        std::vector<double> q, k, v;
        project(wq, q);
        project(wk, k);
        project(wv, v);

        std::vector<double> attn(static_cast<std::size_t>(tokens_per_window) *
                                 tokens_per_window);
        for (int i = 0; i < tokens_per_window; ++i)
            for (int j = 0; j < tokens_per_window; ++j) {
                double acc = 0.0;
                for (int ch = 0; ch < c; ++ch)
                    acc += q[static_cast<std::size_t>(i) * c + ch] *
                           k[static_cast<std::size_t>(j) * c + ch];
                attn[static_cast<std::size_t>(i) * tokens_per_window + j] = acc * scale;
            }
        detail::softmax_rows(attn, tokens_per_window, tokens_per_window);

        for (int i = 0; i < tokens_per_window; ++i) {
            const int px = wx + i % window, py = wy + i / window;
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < tokens_per_window; ++j)
                    acc += attn[static_cast<std::size_t>(i) * tokens_per_window + j] *
                           v[static_cast<std::size_t>(j) * c + ch];
                local.data[plane * ch + static_cast<std::size_t>(py) * wp + px] = acc;
            }
        }

        // window-average token for the global branch
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int t = 0; t < tokens_per_window; ++t)
                acc += feat[static_cast<std::size_t>(t) * c + ch];
            pooled[static_cast<std::size_t>(win) * c + ch] =
                acc / static_cast<double>(tokens_per_window);
        }
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    // global tokens attend over the pooled grid
    const int n_pool = nx * ny;
    std::vector<double> pk(static_cast<std::size_t>(n_pool) * c, 0.0);
    std::vector<double> pv(static_cast<std::size_t>(n_pool) * c, 0.0);
    for (int t = 0; t < n_pool; ++t)
        for (int oc = 0; oc < c; ++oc) {
            double ak = 0.0, av = 0.0;
            for (int ic = 0; ic < c; ++ic) {
                const double src = pooled[static_cast<std::size_t>(t) * c + ic];
                ak += gk[static_cast<std::size_t>(oc) * c + ic] * src;
                av += gv[static_cast<std::size_t>(oc) * c + ic] * src;
            }
            pk[static_cast<std::size_t>(t) * c + oc] = ak;
            pv[static_cast<std::size_t>(t) * c + oc] = av;
        }

    std::vector<double> scores(static_cast<std::size_t>(global_tokens) * n_pool);
    for (int g = 0; g < global_tokens; ++g)
        for (int t = 0; t < n_pool; ++t) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch)
                acc += tokens[static_cast<std::size_t>(g) * c + ch] *
                       pk[static_cast<std::size_t>(t) * c + ch];
            scores[static_cast<std::size_t>(g) * n_pool + t] = acc * scale;
        }
    detail::softmax_rows(scores, global_tokens, n_pool);

    std::vector<double> summary(c, 0.0); // mean over updated global tokens
    for (int g = 0; g < global_tokens; ++g)
        for (int t = 0; t < n_pool; ++t) {
            const double a = scores[static_cast<std::size_t>(g) * n_pool + t];
            for (int ch = 0; ch < c; ++ch)
                summary[ch] += a * pv[static_cast<std::size_t>(t) * c + ch];
        }
    for (double& v : summary) v /= static_cast<double>(global_tokens);

    std::vector<double> broadcast(c, 0.0);
    for (int oc = 0; oc < c; ++oc) {
        double acc = 0.0;
        for (int ic = 0; ic < c; ++ic)
            acc += gout[static_cast<std::size_t>(oc) * c + ic] * summary[ic];
        broadcast[oc] = acc;
    }

    // residual fusion: x + local + global
    HsiCube out = padded;
#pragma omp parallel for
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out.data[plane * ch + i] += local.data[plane * ch + i] + broadcast[ch];
    return crop_spatial(out, x.w, x.h);
}

// ---------------------------------------------------------------------------
// Mamba-i T, MMIT, MMB

namespace {

std::vector<std::uint32_t> vec1(int a) { return {static_cast<std::uint32_t>(a)}; }

HsiCube hadamard(const HsiCube& a, const HsiCube& b) {
    if (!a.same_dims(b)) throw ShapeError("hadamard operands differ in shape");
    HsiCube out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

HsiCube add(const HsiCube& a, const HsiCube& b) {
    if (!a.same_dims(b)) throw ShapeError("sum operands differ in shape");
    HsiCube out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

SsmParams ssm_params_from_store(const WeightStore& store, const std::string& name,
                                int feature_dim, int state_dim) {
    SsmParams p;
    p.feature_dim = feature_dim;
    p.state_dim = state_dim;
    p.dt_rank = SsmParams::default_dt_rank(feature_dim);
    const auto a_log = store.get(name + ".a_log", sq(feature_dim, state_dim));
    const auto d_skip = store.get(name + ".d_skip", vec1(feature_dim), WeightStore::Init::ones);
    const auto w_proj = store.get(name + ".w_proj", sq(2 * state_dim + p.dt_rank, feature_dim));
    const auto w_dt = store.get(name + ".w_dt", sq(feature_dim, p.dt_rank));
    p.a_log.assign(a_log.begin(), a_log.end());
    p.d_skip.assign(d_skip.begin(), d_skip.end());
    p.w_proj.assign(w_proj.begin(), w_proj.end());
    p.w_dt.assign(w_dt.begin(), w_dt.end());
    return p;
}

std::string direction_param_name(const std::string& prefix, ScanDirection dir,
                                 int feature_dim, bool shared) {
    std::string name = prefix + ".m" + std::to_string(dir.mode);
    if (!shared) name += "p" + std::to_string(dir.path);
    return name + ".d" + std::to_string(feature_dim);
}

HsiCube mk_scan(const HsiCube& x, const WeightStore& store, const std::string& prefix,
                const MambaITConfig& cfg) {
    std::map<ScanDirection, SsmParams> params;
    for (ScanDirection dir : cfg.directions) {
        const int feature_dim = dir.mode == 1 ? x.w : dir.mode == 2 ? x.h : x.c;
        params[dir] = ssm_params_from_store(
            store,
            direction_param_name(prefix, dir, feature_dim, cfg.share_direction_weights),
            feature_dim, cfg.state_dim);
    }
    FuseWeights fuse;
    const auto scale = store.get(prefix + ".fuse.scale", vec1(x.c), WeightStore::Init::ones);
    const auto bias = store.get(prefix + ".fuse.bias", vec1(x.c), WeightStore::Init::zeros);
    fuse.scale.assign(scale.begin(), scale.end());
    fuse.bias.assign(bias.begin(), bias.end());
    return mk_mamba_block(x, params, cfg.directions, fuse);
}

} // namespace

HsiCube mamba_i_t(const HsiCube& x, const WeightStore& store, const std::string& prefix,
                  const MambaITConfig& config) {
    config.validate();
    if (x.c != config.channels)
        throw ShapeError("mamba_i_t input channels do not match configuration");
    const int c = x.c;
    const int e = static_cast<int>(config.expansion * c);

    const auto ln_gain = store.get(prefix + ".ln.gain", vec1(c), WeightStore::Init::ones);
    const auto ln_bias = store.get(prefix + ".ln.bias", vec1(c), WeightStore::Init::zeros);
    HsiCube normed = layer_norm(x, ln_gain, ln_bias);

    const auto w1 = store.get(prefix + ".b1.w", sq(e, c));
    const auto b1 = store.get(prefix + ".b1.b", vec1(e), WeightStore::Init::zeros);
    HsiCube x1 = silu(linear(normed, w1, b1, e));

    const auto w2 = store.get(prefix + ".b2.w", sq(e, c));
    const auto b2 = store.get(prefix + ".b2.b", vec1(e), WeightStore::Init::zeros);
    const auto cw = store.get(prefix + ".conv.w",
                              {static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e), 3, 3});
    const auto cb = store.get(prefix + ".conv.b", vec1(e), WeightStore::Init::zeros);
    HsiCube x2 = silu(conv3x3(linear(normed, w2, b2, e), cw, cb, e));
    x2 = glam(x2, store, prefix + ".glam", config.window, config.global_tokens);

    const auto wo = store.get(prefix + ".out.w", sq(c, e));
    const auto bo = store.get(prefix + ".out.b", vec1(c), WeightStore::Init::zeros);
    return linear(hadamard(x1, x2), wo, bo, c);
}

HsiCube mmit_block(const HsiCube& x, const WeightStore& store, const std::string& prefix,
                   const MambaITConfig& config) {
    HsiCube y = add(x, mamba_i_t(x, store, prefix + ".mit", config));
    MambaITConfig cfg = config;
    cfg.channels = y.c;
    return add(y, mk_scan(y, store, prefix + ".mk", cfg));
}

// ---------------------------------------------------------------------------

MmbDenoiser::MmbDenoiser(std::shared_ptr<WeightStore> store, MmbConfig config)
    : store_(std::move(store)), config_(config) {
    config_.validate();
    if (!store_) throw ParameterError("denoiser requires a weight store");
}

namespace {

HsiCube upsample2(const HsiCube& x) {
    HsiCube out(x.w * 2, x.h * 2, x.c);
    for (int ch = 0; ch < x.c; ++ch)
        for (int y = 0; y < out.h; ++y)
            for (int xx = 0; xx < out.w; ++xx)
                out.at(xx, y, ch) = x.at(xx / 2, y / 2, ch);
    return out;
}

} // namespace

HsiCube MmbDenoiser::denoise(const HsiCube& v, double eta) const {
    if (!(eta >= 0.0)) throw ParameterError("denoiser noise level must be non-negative");
    v.validate();
    const WeightStore& ws = *store_;
    const int levels = config_.block.levels;
    const int f0 = config_.base_channels;

    HsiCube padded = pad_spatial(v, 1 << levels);
    // noise level rides along as one constant channel
    HsiCube with_eta(padded.w, padded.h, padded.c + 1);
    std::copy(padded.data.begin(), padded.data.end(), with_eta.data.begin());
    std::fill(with_eta.data.begin() + padded.data.size(), with_eta.data.end(), eta);

    const auto embed_w = ws.get("embed.w", {static_cast<std::uint32_t>(f0),
                                            static_cast<std::uint32_t>(with_eta.c), 3, 3});
    const auto embed_b = ws.get("embed.b", vec1(f0), WeightStore::Init::zeros);
    HsiCube f = conv3x3(with_eta, embed_w, embed_b, f0);

    MambaITConfig block = config_.block;
    std::vector<HsiCube> skips;
    skips.reserve(static_cast<std::size_t>(levels));
    int width = f0;
    for (int l = 0; l < levels; ++l) {
        block.channels = width;
        f = mmit_block(f, ws, "lvl" + std::to_string(l) + ".enc", block);
        skips.push_back(f);
        const auto dw = ws.get("down" + std::to_string(l) + ".w",
                               {static_cast<std::uint32_t>(2 * width),
                                static_cast<std::uint32_t>(width), 3, 3});
        const auto db = ws.get("down" + std::to_string(l) + ".b", vec1(2 * width),
                               WeightStore::Init::zeros);
        f = conv3x3_impl(f, dw, db, 2 * width, 2);
        width *= 2;
    }

    block.channels = width;
    f = mmit_block(f, ws, "bottom", block);

    for (int l = levels - 1; l >= 0; --l) {
        width /= 2;
        f = upsample2(f);
        const auto uw = ws.get("up" + std::to_string(l) + ".w",
                               {static_cast<std::uint32_t>(width),
                                static_cast<std::uint32_t>(2 * width), 3, 3});
        const auto ub = ws.get("up" + std::to_string(l) + ".b", vec1(width),
                               WeightStore::Init::zeros);
        f = conv3x3(f, uw, ub, width);
        f = add(f, skips[static_cast<std::size_t>(l)]);
        block.channels = width;
        f = mmit_block(f, ws, "lvl" + std::to_string(l) + ".dec", block);
    }

    const auto head_w = ws.get("head.w", sq(v.c, f0));
    const auto head_b = ws.get("head.b", vec1(v.c), WeightStore::Init::zeros);
    HsiCube residual = crop_spatial(linear(f, head_w, head_b, v.c), v.w, v.h);

    HsiCube out = add(v, residual);
    if (!out.all_finite()) throw NumericError("denoiser produced non-finite output");
    out.wavelengths = v.wavelengths;
    return out;
}

void MmbDenoiser::zero_output_projections(int input_channels) {
    WeightStore& ws = *store_;
    const int levels = config_.block.levels;
    const int f0 = config_.base_channels;

    std::vector<std::pair<std::string, int>> blocks; // prefix, channel width
    int width = f0;
    for (int l = 0; l < levels; ++l) {
        blocks.emplace_back("lvl" + std::to_string(l) + ".enc", width);
        width *= 2;
    }
    blocks.emplace_back("bottom", width);
    for (int l = levels - 1; l >= 0; --l) {
        width /= 2;
        blocks.emplace_back("lvl" + std::to_string(l) + ".dec", width);
    }

    for (const auto& [prefix, c] : blocks) {
        const int e = static_cast<int>(config_.block.expansion * c);
        ws.get(prefix + ".mit.out.w", sq(c, e));
        ws.zero(prefix + ".mit.out.w");
        ws.get(prefix + ".mit.out.b", vec1(c), WeightStore::Init::zeros);
        ws.zero(prefix + ".mit.out.b");
        ws.get(prefix + ".mk.fuse.scale", vec1(c), WeightStore::Init::ones);
        ws.zero(prefix + ".mk.fuse.scale");
        ws.get(prefix + ".mk.fuse.bias", vec1(c), WeightStore::Init::zeros);
        ws.zero(prefix + ".mk.fuse.bias");
    }
    ws.get("head.w", sq(input_channels, f0));
    ws.zero("head.w");
    ws.get("head.b", vec1(input_channels), WeightStore::Init::zeros);
    ws.zero("head.b");
}

} // namespace cassikit
