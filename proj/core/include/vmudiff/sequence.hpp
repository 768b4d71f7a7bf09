#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmudiff/error.hpp"

namespace vmudiff {

/** Whether a sequence holds physical units (dBZ, K) or unit-interval values. */
enum class Form : std::uint8_t { Raw = 0, Normalized = 1 };

// Radar reflectivity span used by the affine normalization, in dBZ.
inline constexpr float kRadarLoDbz = 0.0f;
inline constexpr float kRadarHiDbz = 70.0f;
// Satellite brightness-temperature span, in kelvin.
inline constexpr float kSatLoK = 180.0f;
inline constexpr float kSatHiK = 320.0f;

/**
 * A (t, c, h, w) stack of 32-bit frames, row-major, 10-minute cadence,
 * 1 km cells. The shared currency of the whole pipeline: model inputs,
 * targets, predictions, and residuals all travel as FrameSequence.
 */
struct FrameSequence {
  int t_len = 0;
  int c_len = 0;
  int h = 0;
  int w = 0;
  Form form = Form::Raw;
  std::vector<float> data;

  FrameSequence() = default;
  FrameSequence(int t, int c, int hh, int ww, Form f = Form::Raw);

  std::size_t numel() const {
    return static_cast<std::size_t>(t_len) * c_len * h * w;
  }

  float& at(int t, int c, int y, int x) {
    return data[((static_cast<std::size_t>(t) * c_len + c) * h + y) * w + x];
  }
  float at(int t, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(t) * c_len + c) * h + y) * w + x];
  }

  /** Pointer to the start of frame (t, c). */
  float* frame(int t, int c) {
    return data.data() + (static_cast<std::size_t>(t) * c_len + c) * h * w;
  }
  const float* frame(int t, int c) const {
    return data.data() + (static_cast<std::size_t>(t) * c_len + c) * h * w;
  }

  bool same_dims(const FrameSequence& o) const {
    return t_len == o.t_len && c_len == o.c_len && h == o.h && w == o.w;
  }

  /** Throws unless data length matches dims, dims are positive, values finite. */
  void check_valid(const std::string& what) const;
};

/** Single-channel reflectivity sequence; dBZ raw, [0,1] normalized. */
struct RadarSequence {
  FrameSequence seq;  // c_len == 1
};

/** Four-channel brightness-temperature sequence (C8, C11, C13, C15). */
struct SatelliteSequence {
  FrameSequence seq;  // c_len == 4
};

RadarSequence as_radar(FrameSequence seq);
SatelliteSequence as_satellite(FrameSequence seq);

/** clamp(v, 0, 70)/70 per cell; raw form required. */
RadarSequence normalize_radar(const RadarSequence& s);
/** v*70 per cell; normalized form required. */
RadarSequence denormalize_radar(const RadarSequence& s);

/**
 * clamp(v, 180, 320) then (320 - v)/140, so cold cloud tops (convection)
 * map high, matching radar polarity. Raw form required.
 */
SatelliteSequence normalize_satellite(const SatelliteSequence& s);
SatelliteSequence denormalize_satellite(const SatelliteSequence& s);

}  // namespace vmudiff
