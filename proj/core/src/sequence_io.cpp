#include "vmudiff/sequence_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace vmudiff {

namespace {

constexpr unsigned char kMagic[4] = {0x56, 0x4D, 0x55, 0x44};  // "VMUD"

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_sequence(const FrameSequence& seq, const std::string& path) {
  require(seq.t_len >= 1 && seq.c_len >= 1 && seq.h >= 1 && seq.w >= 1,
          ErrorKind::ShapeMismatch, "write_sequence: dims must be positive");
  require(seq.data.size() == seq.numel(), ErrorKind::ShapeMismatch,
          "write_sequence: data length does not match dims");

  std::vector<unsigned char> buf;
  buf.reserve(24 + seq.data.size() * 4);
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kSequenceFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(seq.t_len));
  put_u32(buf, static_cast<std::uint32_t>(seq.c_len));
  put_u32(buf, static_cast<std::uint32_t>(seq.h));
  put_u32(buf, static_cast<std::uint32_t>(seq.w));
  buf.push_back(static_cast<unsigned char>(seq.form));
  buf.push_back(0);
  buf.push_back(0);
  buf.push_back(0);

  for (float f : seq.data) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    buf.push_back(static_cast<unsigned char>(bits & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "write_sequence: cannot open " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  f.flush();
  require(f.good(), ErrorKind::Io, "write_sequence: short write to " + path);
}

FrameSequence read_sequence(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  require(f.good(), ErrorKind::Io, "read_sequence: cannot open " + path);
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), size);
  require(f.good(), ErrorKind::Io, "read_sequence: read failed for " + path);

  require(buf.size() >= 28, ErrorKind::Truncated, path + ": shorter than the fixed header");
  require(std::memcmp(buf.data(), kMagic, 4) == 0, ErrorKind::BadMagic,
          path + ": magic bytes are not VMUD");
  std::uint32_t version = get_u32(buf.data() + 4);
  require(version == kSequenceFormatVersion, ErrorKind::VersionMismatch,
          path + ": unsupported version " + std::to_string(version));

  std::uint32_t dims[4];
  for (int i = 0; i < 4; ++i) dims[i] = get_u32(buf.data() + 8 + 4 * i);
  for (int i = 0; i < 4; ++i) {
    require(dims[i] >= 1 && dims[i] <= kMaxDim, ErrorKind::DimOverflow,
            path + ": header dim " + std::to_string(dims[i]) + " outside [1, 2^20]");
  }
  std::uint64_t count = 1;
  for (int i = 0; i < 4; ++i) count *= dims[i];
  require(count <= (1ull << 29), ErrorKind::DimOverflow,
          path + ": element count exceeds the 2^29 ceiling");

  unsigned char form_byte = buf[24];  // byte right after magic, version, and 4 dims
  require(form_byte == 0 || form_byte == 1, ErrorKind::ShapeMismatch,
          path + ": form flag must be 0 or 1");

  std::size_t expected = 28 + static_cast<std::size_t>(count) * 4;
  require(buf.size() >= expected, ErrorKind::Truncated,
          path + ": payload shorter than the header promises");
  require(buf.size() == expected, ErrorKind::Truncated,
          path + ": trailing bytes after the declared payload");

  FrameSequence seq(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                    static_cast<int>(dims[2]), static_cast<int>(dims[3]),
                    static_cast<Form>(form_byte));
  const unsigned char* p = buf.data() + 28;
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                         (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    seq.data[i] = std::bit_cast<float>(bits);
  }
  return seq;
}

}  // namespace vmudiff
