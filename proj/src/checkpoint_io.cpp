#include "gfus/checkpoint_io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

namespace gfus {

namespace {

constexpr char kMagic[4] = {'G', 'F', 'U', 'S'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_.is_open()) {
            throw DataError("cannot write checkpoint file: " + path);
        }
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { le(static_cast<std::uint64_t>(v), 2); }
    void u32(std::uint32_t v) { le(static_cast<std::uint64_t>(v), 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void finish() {
        out_.flush();
        if (!out_.good()) {
            throw DataError("failed while writing checkpoint file: " + path_);
        }
    }

private:
    void le(std::uint64_t v, int width) {
        unsigned char buf[8];
        for (int i = 0; i < width; ++i) {
            buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        }
        bytes(buf, static_cast<std::size_t>(width));
    }

    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_.is_open()) {
            throw DataError("cannot open checkpoint file: " + path);
        }
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            fail("truncated");
        }
        offset_ += n;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t n) {
        std::string s(n, '\0');
        if (n > 0) {
            bytes(s.data(), n);
        }
        return s;
    }

    void expect_eof() {
        char c;
        in_.read(&c, 1);
        if (in_.gcount() != 0) {
            fail("trailing bytes");
        }
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("checkpoint format error (" + what + ") at offset " +
                          std::to_string(offset_) + " in " + path_);
    }

    std::size_t offset() const { return offset_; }

private:
    std::uint64_t le(int width) {
        unsigned char buf[8];
        bytes(buf, static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        }
        return v;
    }

    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

std::vector<std::pair<std::string, std::string>> config_lines(const ModelConfig& c) {
    char drop[64];
    std::snprintf(drop, sizeof drop, "%.17g", c.dropout_rate);
    return {
        {"vocab_size", std::to_string(c.vocab_size)},
        {"d_model", std::to_string(c.d_model)},
        {"n_heads", std::to_string(c.n_heads)},
        {"n_encoder_layers", std::to_string(c.n_encoder_layers)},
        {"n_decoder_layers", std::to_string(c.n_decoder_layers)},
        {"d_ff", std::to_string(c.d_ff)},
        {"max_len", std::to_string(c.max_len)},
        {"dropout_rate", drop},
        {"fusion_mode", to_string(c.fusion_mode)},
        {"gate_granularity", to_string(c.gate_granularity)},
        {"seed", std::to_string(c.seed)},
    };
}

long parse_long(const std::string& v, const Reader& r) {
    try {
        return std::stol(v);
    } catch (const std::exception&) {
        throw FormatError("checkpoint format error (bad integer \"" + v + "\") at offset " +
                          std::to_string(r.offset()));
    }
}

ModelConfig config_from_lines(const std::vector<std::pair<std::string, std::string>>& lines,
                              const Reader& r) {
    ModelConfig c;
    for (const auto& [key, value] : lines) {
        if (key == "vocab_size") c.vocab_size = static_cast<int>(parse_long(value, r));
        else if (key == "d_model") c.d_model = static_cast<int>(parse_long(value, r));
        else if (key == "n_heads") c.n_heads = static_cast<int>(parse_long(value, r));
        else if (key == "n_encoder_layers") c.n_encoder_layers = static_cast<int>(parse_long(value, r));
        else if (key == "n_decoder_layers") c.n_decoder_layers = static_cast<int>(parse_long(value, r));
        else if (key == "d_ff") c.d_ff = static_cast<int>(parse_long(value, r));
        else if (key == "max_len") c.max_len = static_cast<int>(parse_long(value, r));
        else if (key == "dropout_rate") c.dropout_rate = std::stod(value);
        else if (key == "fusion_mode") c.fusion_mode = fusion_mode_from_string(value);
        else if (key == "gate_granularity") c.gate_granularity = gate_granularity_from_string(value);
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
        else {
            throw FormatError("checkpoint config has unknown key: " + key);
        }
    }
    return c;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    const auto lines = config_lines(ckpt.config);
    w.u32(static_cast<std::uint32_t>(lines.size()));
    for (const auto& [key, value] : lines) {
        const std::string line = key + "=" + value;
        w.u32(static_cast<std::uint32_t>(line.size()));
        w.bytes(line.data(), line.size());
    }
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, tensor] : ckpt.params) {
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u8(static_cast<std::uint8_t>(tensor.rank()));
        for (int dim : tensor.shape) {
            w.u64(static_cast<std::uint64_t>(dim));
        }
        for (double v : tensor.data) {
            w.f64(v);
        }
    }
    w.finish();
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        r.fail("bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const std::uint32_t n_lines = r.u32();
    std::vector<std::pair<std::string, std::string>> lines;
    lines.reserve(n_lines);
    for (std::uint32_t i = 0; i < n_lines; ++i) {
        const std::uint32_t len = r.u32();
        const std::string line = r.str(len);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            r.fail("config line without '='");
        }
        lines.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    Checkpoint ckpt;
    ckpt.config = config_from_lines(lines, r);
    try {
        ckpt.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError("checkpoint config invalid: " + std::string(e.what()));
    }

    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint8_t rank = r.u8();
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64();
            if (dim == 0 || dim > (1u << 30)) {
                r.fail("unreasonable dimension " + std::to_string(dim));
            }
            shape[d] = static_cast<int>(dim);
            numel *= dim;
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data.resize(numel);
        for (std::size_t j = 0; j < numel; ++j) {
            t.data[j] = r.f64();
        }
        if (!ckpt.params.emplace(name, std::move(t)).second) {
            r.fail("duplicate tensor name " + name);
        }
    }
    r.expect_eof();

    // Tensor inventory must match what the config dictates.
    const std::vector<ParamSpec> specs = parameter_specs(ckpt.config);
    if (specs.size() != ckpt.params.size()) {
        throw FormatError("checkpoint has " + std::to_string(ckpt.params.size()) +
                          " tensors but config requires " + std::to_string(specs.size()) +
                          " in " + path);
    }
    for (const ParamSpec& spec : specs) {
        auto it = ckpt.params.find(spec.name);
        if (it == ckpt.params.end()) {
            throw FormatError("checkpoint missing tensor " + spec.name + " in " + path);
        }
        if (it->second.shape != spec.shape) {
            throw FormatError("checkpoint tensor " + spec.name + " has shape " +
                              shape_str(it->second.shape) + " but config requires " +
                              shape_str(spec.shape) + " in " + path);
        }
    }
    return ckpt;
}

} // namespace gfus
