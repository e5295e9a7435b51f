#include "mixtg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mixtg/errors.hpp"

namespace mixtg {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    }
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) {
            throw FormatError("MTGC: truncated " + std::string(what) + " at byte " +
                              std::to_string(buf.size()));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | buf[pos + static_cast<std::size_t>(i)];
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | buf[pos + static_cast<std::size_t>(i)];
        pos += 8;
        return std::bit_cast<double>(v);
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParams& params) {
    const std::string cfg = config.to_kv_text();
    const auto named = params.named_tensors();
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), {'M', 'T', 'G', 'C'});
    put_u32(buf, kMtgcVersion);
    put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
    buf.insert(buf.end(), cfg.begin(), cfg.end());
    put_u32(buf, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.insert(buf.end(), name.begin(), name.end());
        put_u32(buf, static_cast<std::uint32_t>(t.ndim()));
        for (auto d : t.shape()) put_u32(buf, static_cast<std::uint32_t>(d));
        for (double v : t.data()) put_f64(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("MTGC: cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("MTGC: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("MTGC: cannot open '" + path + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    Reader r{buf};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), "MTGC", 4) != 0) throw FormatError("MTGC: bad magic at byte 0");
    r.pos = 4;
    const auto version = r.u32("version");
    if (version != kMtgcVersion) {
        throw FormatError("MTGC: unsupported version " + std::to_string(version) + " at byte 4");
    }
    const auto cfg_len = r.u32("config length");
    const auto cfg_text = r.str(cfg_len, "config text");
    Checkpoint ck{ModelConfig::from_kv_text(cfg_text), {}};
    ck.params = ModelParams::init(ck.config);

    auto named = ck.params.named_tensors();
    const auto count = r.u32("tensor count");
    if (count != named.size()) {
        throw FormatError("MTGC: tensor count " + std::to_string(count) +
                          " does not match the configuration (expected " +
                          std::to_string(named.size()) + ")");
    }
    for (auto& [name, tensor] : named) {
        const auto name_len = r.u32("tensor name length");
        const auto got_name = r.str(name_len, "tensor name");
        if (got_name != name) {
            throw FormatError("MTGC: tensor '" + got_name + "' where '" + name + "' expected");
        }
        const auto ndim = r.u32("tensor rank");
        Shape shape;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            shape.push_back(static_cast<std::int64_t>(r.u32("tensor dims")));
        }
        if (shape != tensor.shape()) {
            throw FormatError("MTGC: tensor '" + name + "' has shape " + shape_str(shape) +
                              ", expected " + shape_str(tensor.shape()));
        }
        auto& data = tensor.raw_data();
        for (auto& v : data) v = r.f64("tensor payload");
    }
    if (r.pos != buf.size()) {
        throw FormatError("MTGC: trailing bytes at byte " + std::to_string(r.pos));
    }
    return ck;
}

}  // namespace mixtg
