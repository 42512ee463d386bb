#include "cassikit/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cassikit {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::size_t offset() const { return pos_; }

    void expect_magic(const char* magic) {
        if (bytes_.size() < pos_ + 4 || std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
            throw FormatError(std::string("bad magic, expected ") + magic, pos_);
        pos_ += 4;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
                 << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void expect_end() {
        if (pos_ != bytes_.size()) throw FormatError("trailing bytes", pos_);
    }

private:
    void need(std::size_t n) {
        if (bytes_.size() < pos_ + n) throw FormatError("unexpected end of file", pos_);
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_bytes_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open file for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

int positive_dim(std::uint32_t v, const char* what, std::size_t offset) {
    if (v == 0 || v > 1u << 24)
        throw FormatError(std::string("implausible ") + what, offset);
    return static_cast<int>(v);
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void write_cube(const std::string& path, const HsiCube& cube) {
    cube.validate();
    std::string buf;
    buf.append("HSI1");
    put_u32(buf, static_cast<std::uint32_t>(cube.w));
    put_u32(buf, static_cast<std::uint32_t>(cube.h));
    put_u32(buf, static_cast<std::uint32_t>(cube.c));
    buf.push_back(cube.wavelengths.empty() ? 0 : 1);
    for (double wl : cube.wavelengths) put_f32(buf, static_cast<float>(wl));
    for (double v : cube.data) put_f32(buf, static_cast<float>(v));
    write_bytes_atomic(path, buf);
}

HsiCube read_cube(const std::string& path) {
    Reader r(read_bytes(path));
    r.expect_magic("HSI1");
    const std::size_t dims_at = r.offset();
    const int w = positive_dim(r.u32(), "width", dims_at);
    const int h = positive_dim(r.u32(), "height", dims_at + 4);
    const int c = positive_dim(r.u32(), "channel count", dims_at + 8);
    const std::uint8_t flags = r.u8();
    if (flags > 1) throw FormatError("unknown flag bits", r.offset() - 1);

    HsiCube cube(w, h, c);
    if (flags & 1) {
        cube.wavelengths.resize(static_cast<std::size_t>(c));
        for (double& wl : cube.wavelengths) wl = static_cast<double>(r.f32());
    }
    for (double& v : cube.data) v = static_cast<double>(r.f32());
    r.expect_end();
    cube.validate();
    return cube;
}

void write_mask(const std::string& path, const CodedAperture& mask) {
    mask.validate();
    std::string buf;
    buf.append("MSK1");
    put_u32(buf, static_cast<std::uint32_t>(mask.w));
    put_u32(buf, static_cast<std::uint32_t>(mask.h));
    for (double v : mask.values) put_f32(buf, static_cast<float>(v));
    write_bytes_atomic(path, buf);
}

CodedAperture read_mask(const std::string& path) {
    Reader r(read_bytes(path));
    r.expect_magic("MSK1");
    const std::size_t dims_at = r.offset();
    const int w = positive_dim(r.u32(), "width", dims_at);
    const int h = positive_dim(r.u32(), "height", dims_at + 4);
    CodedAperture mask(w, h);
    for (double& v : mask.values) v = static_cast<double>(r.f32());
    r.expect_end();
    mask.validate();
    return mask;
}

void write_measurement(const std::string& path, const Measurement& meas) {
    meas.validate();
    std::string buf;
    buf.append("MEA1");
    put_u32(buf, static_cast<std::uint32_t>(meas.w));
    put_u32(buf, static_cast<std::uint32_t>(meas.h));
    for (double v : meas.values) put_f32(buf, static_cast<float>(v));
    write_bytes_atomic(path, buf);
}

Measurement read_measurement(const std::string& path) {
    Reader r(read_bytes(path));
    r.expect_magic("MEA1");
    const std::size_t dims_at = r.offset();
    const int w = positive_dim(r.u32(), "width", dims_at);
    const int h = positive_dim(r.u32(), "height", dims_at + 4);
    Measurement meas(w, h);
    for (double& v : meas.values) v = static_cast<double>(r.f32());
    r.expect_end();
    meas.validate();
    return meas;
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_real(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError("invalid numeric value for key '" + key + "': " + v);
    }
}

long long parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError("invalid integer value for key '" + key + "': " + v);
    }
}

} // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line is not 'key = value': " + stripped);
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));

        if (key == "stages") {
            cfg.stages = static_cast<int>(parse_int(value, key));
        } else if (key == "mu0") {
            cfg.mu0 = parse_real(value, key);
        } else if (key == "mu_rho") {
            cfg.mu_rho = parse_real(value, key);
        } else if (key == "beta_mode") {
            cfg.beta_mode = value;
        } else if (key == "prox") {
            cfg.prox = value;
        } else if (key == "tau") {
            cfg.tau = parse_real(value, key);
        } else if (key == "eta0") {
            cfg.eta0 = parse_real(value, key);
        } else if (key == "step") {
            cfg.step = static_cast<int>(parse_int(value, key));
        } else if (key == "noise_sigma") {
            cfg.noise_sigma = parse_real(value, key);
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
        } else if (key == "tolerance") {
            cfg.tolerance = parse_real(value, key);
        } else {
            throw FormatError("unknown config key: " + key);
        }
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::print() const {
    std::string out;
    out += "stages = " + std::to_string(stages) + "\n";
    out += "mu0 = " + format_g17(mu0) + "\n";
    out += "mu_rho = " + format_g17(mu_rho) + "\n";
    out += "beta_mode = " + beta_mode + "\n";
    out += "prox = " + prox + "\n";
    out += "tau = " + format_g17(tau) + "\n";
    out += "eta0 = " + format_g17(eta0) + "\n";
    out += "step = " + std::to_string(step) + "\n";
    out += "noise_sigma = " + format_g17(noise_sigma) + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "tolerance = " + format_g17(tolerance) + "\n";
    return out;
}

SolverConfig RunConfig::to_solver_config() const {
    SolverConfig sc;
    sc.stages = stages;
    sc.mu_schedule = SolverConfig::geometric_schedule(stages, mu0, mu_rho);
    sc.eta_schedule = SolverConfig::constant_schedule(stages, eta0);
    sc.prox_tag = prox;
    sc.tau = tau;
    sc.tolerance = tolerance;
    if (beta_mode == "nesterov") {
        sc.beta_mode = BetaMode::nesterov;
    } else if (beta_mode == "zero") {
        sc.beta_mode = BetaMode::zero;
    } else if (beta_mode.rfind("constant:", 0) == 0) {
        sc.beta_mode = BetaMode::constant;
        sc.beta_constant = parse_real(beta_mode.substr(9), "beta_mode");
    } else {
        throw FormatError("unknown beta_mode: " + beta_mode);
    }
    return sc;
}

// ---------------------------------------------------------------------------
// CSV

std::string convergence_csv(const std::vector<StageRecord>& history) {
    std::string out = "stage,fidelity,rel_change\n";
    for (const auto& rec : history)
        out += std::to_string(rec.stage) + "," + format_g17(rec.fidelity) + "," +
               format_g17(rec.rel_change) + "\n";
    return out;
}

std::string sequence_csv(int feature_dim, const std::vector<double>& data) {
    if (feature_dim <= 0 || data.size() % feature_dim != 0)
        throw ShapeError("sequence payload does not match feature dimension");
    std::string out = "t";
    for (int d = 0; d < feature_dim; ++d) out += ",f" + std::to_string(d);
    out += "\n";
    const std::size_t len = data.size() / feature_dim;
    for (std::size_t t = 0; t < len; ++t) {
        out += std::to_string(t);
        for (int d = 0; d < feature_dim; ++d)
            out += "," + format_g17(data[t * feature_dim + d]);
        out += "\n";
    }
    return out;
}

std::string modes_svd_csv(const HsiCube& cube) {
    std::string out = "mode,index,sigma,log10_sigma\n";
    for (int mode = 1; mode <= 3; ++mode) {
        const std::vector<double> s = mode_singular_values(cube, mode);
        for (std::size_t i = 0; i < s.size(); ++i)
            out += std::to_string(mode) + "," + std::to_string(i) + "," +
                   format_g17(s[i]) + "," + format_g17(std::log10(s[i])) + "\n";
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    write_bytes_atomic(path, text);
}

} // namespace cassikit
