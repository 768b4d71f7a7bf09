#pragma once

#include <string>

#include "vmudiff/sequence.hpp"

namespace vmudiff {

// Container layout, all little-endian:
//   magic "VMUD" (0x56 0x4D 0x55 0x44)
//   u32 version (= 1)
//   u32 t_len, u32 c_len, u32 h, u32 w
//   u8 form flag (0 raw, 1 normalized), 3 zero pad bytes
//   t_len*c_len*h*w binary32 values, row-major (t, c, h, w)
// No compression. Round trips are bit-exact.

inline constexpr std::uint32_t kSequenceFormatVersion = 1;
// Per-dimension ceiling enforced on read; anything larger is treated as a
// corrupt header rather than an allocation request.
inline constexpr std::uint32_t kMaxDim = 1u << 20;

void write_sequence(const FrameSequence& seq, const std::string& path);
FrameSequence read_sequence(const std::string& path);

}  // namespace vmudiff
