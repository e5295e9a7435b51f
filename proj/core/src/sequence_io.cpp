#include "mixtg/sequence_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "mixtg/errors.hpp"

namespace mixtg {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    }
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t off) {
    return static_cast<std::uint32_t>(in[off]) | (static_cast<std::uint32_t>(in[off + 1]) << 8) |
           (static_cast<std::uint32_t>(in[off + 2]) << 16) |
           (static_cast<std::uint32_t>(in[off + 3]) << 24);
}

double get_f64(const std::vector<unsigned char>& in, std::size_t off) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) {
        bits = (bits << 8) | in[off + static_cast<std::size_t>(i)];
    }
    return std::bit_cast<double>(bits);
}

[[noreturn]] void fail(const std::string& what, std::size_t offset) {
    throw FormatError("MTGF: " + what + " at byte " + std::to_string(offset));
}

}  // namespace

void save_sequence(const std::string& path, const PoseSequence& seq) {
    if (static_cast<std::int64_t>(seq.values.size()) != seq.frames * seq.joints * 3) {
        throw DimensionError("save_sequence: value count does not match T*J*3");
    }
    std::vector<unsigned char> buf;
    buf.reserve(20 + seq.values.size() * 8);
    buf.insert(buf.end(), {'M', 'T', 'G', 'F'});
    put_u32(buf, kMtgfVersion);
    put_u32(buf, static_cast<std::uint32_t>(seq.kind));
    put_u32(buf, static_cast<std::uint32_t>(seq.frames));
    put_u32(buf, static_cast<std::uint32_t>(seq.joints));
    for (double v : seq.values) put_f64(buf, v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("MTGF: cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("MTGF: write failed for '" + path + "'");
}

PoseSequence load_sequence(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("MTGF: cannot open '" + path + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 4) fail("truncated magic", buf.size());
    if (std::memcmp(buf.data(), "MTGF", 4) != 0) fail("bad magic", 0);
    if (buf.size() < 8) fail("truncated version", buf.size());
    const auto version = get_u32(buf, 4);
    if (version != kMtgfVersion) fail("unsupported version " + std::to_string(version), 4);
    if (buf.size() < 20) fail("truncated header", buf.size());
    const auto kind = get_u32(buf, 8);
    if (kind > 2) fail("invalid kind tag " + std::to_string(kind), 8);
    const auto frames = get_u32(buf, 12);
    const auto joints = get_u32(buf, 16);
    if (frames == 0) fail("frame count must be positive", 12);
    if (joints == 0) fail("joint count must be positive", 16);
    const std::size_t count = static_cast<std::size_t>(frames) * joints * 3;
    const std::size_t expected = 20 + count * 8;
    if (buf.size() != expected) {
        fail("payload size mismatch, expected " + std::to_string(expected) + " bytes total",
             buf.size());
    }
    PoseSequence seq = PoseSequence::make(static_cast<SeqKind>(kind), frames, joints);
    for (std::size_t i = 0; i < count; ++i) seq.values[i] = get_f64(buf, 20 + i * 8);
    return seq;
}

}  // namespace mixtg
