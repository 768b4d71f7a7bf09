#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vmudiff/nn.hpp"

namespace vmudiff {

// Checkpoint container, little-endian throughout:
//   magic "VMCK", u32 version = 1, u32 param count;
//   per param: u32 name length, UTF-8 name bytes, u32 rank, u32 dims[rank],
//   binary32 values. Parameters appear in lexicographic name order.
// Gradients and optimizer moments are not persisted.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void ck_put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t ck_get_u32(const std::vector<unsigned char>& buf, std::size_t& off,
                                const std::string& path) {
  require(off + 4 <= buf.size(), ErrorKind::Truncated, path + ": checkpoint ends mid-field");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
  off += 4;
  return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const ParamStoreT<T>& store, const std::string& path) {
  std::vector<unsigned char> buf;
  buf.push_back('V');
  buf.push_back('M');
  buf.push_back('C');
  buf.push_back('K');
  detail::ck_put_u32(buf, kCheckpointVersion);
  detail::ck_put_u32(buf, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, p] : store.entries()) {
    detail::ck_put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    detail::ck_put_u32(buf, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) detail::ck_put_u32(buf, static_cast<std::uint32_t>(d));
    for (const T& v : p.v) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      detail::ck_put_u32(buf, bits);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  f.flush();
  require(f.good(), ErrorKind::Io, "short write to checkpoint: " + path);
}

/**
 * Loads values into an already-built store: the file must carry exactly the
 * store's parameter set with matching shapes. Keeps Adam state untouched.
 */
template <class T>
void load_checkpoint(ParamStoreT<T>& store, const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  require(f.good(), ErrorKind::Io, "cannot open checkpoint: " + path);
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), size);
  require(f.good(), ErrorKind::Io, "read failed for checkpoint: " + path);

  require(buf.size() >= 12, ErrorKind::Truncated, path + ": shorter than the checkpoint header");
  require(std::memcmp(buf.data(), "VMCK", 4) == 0, ErrorKind::BadMagic,
          path + ": magic bytes are not VMCK");
  std::size_t off = 4;
  std::uint32_t version = detail::ck_get_u32(buf, off, path);
  require(version == kCheckpointVersion, ErrorKind::VersionMismatch,
          path + ": unsupported checkpoint version " + std::to_string(version));
  std::uint32_t count = detail::ck_get_u32(buf, off, path);
  require(count == store.entries().size(), ErrorKind::ShapeMismatch,
          path + ": checkpoint holds " + std::to_string(count) + " params, model expects " +
              std::to_string(store.entries().size()));

  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = detail::ck_get_u32(buf, off, path);
    require(name_len >= 1 && name_len <= 4096, ErrorKind::DimOverflow,
            path + ": unreasonable parameter name length");
    require(off + name_len <= buf.size(), ErrorKind::Truncated, path + ": checkpoint ends mid-name");
    std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
    off += name_len;
    std::uint32_t rank = detail::ck_get_u32(buf, off, path);
    require(rank >= 1 && rank <= 8, ErrorKind::DimOverflow, path + ": parameter rank outside [1,8]");
    std::uint64_t numel = 1;
    std::vector<int> dims(rank);
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t v = detail::ck_get_u32(buf, off, path);
      require(v >= 1 && v <= (1u << 24), ErrorKind::DimOverflow, path + ": parameter dim overflow");
      dims[d] = static_cast<int>(v);
      numel *= v;
    }
    require(numel <= (1ull << 28), ErrorKind::DimOverflow, path + ": parameter too large");

    ParamT<T>* p = store.find(name);
    require(p != nullptr, ErrorKind::ShapeMismatch, path + ": unknown parameter " + name);
    require(p->shape == dims, ErrorKind::ShapeMismatch, path + ": shape mismatch for " + name);
    require(off + numel * 4 <= buf.size(), ErrorKind::Truncated,
            path + ": checkpoint ends inside values of " + name);
    for (std::uint64_t e = 0; e < numel; ++e) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(buf[off + e * 4 + b]) << (8 * b);
      }
      p->v[static_cast<std::size_t>(e)] = static_cast<T>(std::bit_cast<float>(bits));
    }
    off += numel * 4;
  }
  require(off == buf.size(), ErrorKind::Truncated, path + ": trailing bytes after last parameter");
}

}  // namespace vmudiff
