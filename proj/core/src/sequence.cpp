#include "vmudiff/sequence.hpp"

#include <algorithm>
#include <cmath>

namespace vmudiff {

FrameSequence::FrameSequence(int t, int c, int hh, int ww, Form f)
    : t_len(t), c_len(c), h(hh), w(ww), form(f) {
  require(t >= 1 && c >= 1 && hh >= 1 && ww >= 1, ErrorKind::ShapeMismatch,
          "sequence dims must be positive");
  data.assign(numel(), 0.0f);
}

void FrameSequence::check_valid(const std::string& what) const {
  require(t_len >= 1 && c_len >= 1 && h >= 1 && w >= 1, ErrorKind::ShapeMismatch,
          what + ": dims must be positive");
  require(data.size() == numel(), ErrorKind::ShapeMismatch,
          what + ": data length does not match dims");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      raise(ErrorKind::NonFinite, what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

RadarSequence as_radar(FrameSequence seq) {
  require(seq.c_len == 1, ErrorKind::ShapeMismatch, "radar sequence must have c_len == 1");
  return RadarSequence{std::move(seq)};
}

SatelliteSequence as_satellite(FrameSequence seq) {
  require(seq.c_len == 4, ErrorKind::ShapeMismatch, "satellite sequence must have c_len == 4");
  return SatelliteSequence{std::move(seq)};
}

namespace {

void check_finite_cells(const FrameSequence& s, const char* what) {
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    if (!std::isfinite(s.data[i])) {
      raise(ErrorKind::NonFinite,
            std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

RadarSequence normalize_radar(const RadarSequence& s) {
  require(s.seq.form == Form::Raw, ErrorKind::ShapeMismatch,
          "normalize_radar expects raw-form input");
  check_finite_cells(s.seq, "normalize_radar");
  RadarSequence out = s;
  out.seq.form = Form::Normalized;
  for (auto& v : out.seq.data) {
    v = std::clamp(v, kRadarLoDbz, kRadarHiDbz) / kRadarHiDbz;
  }
  return out;
}

RadarSequence denormalize_radar(const RadarSequence& s) {
  require(s.seq.form == Form::Normalized, ErrorKind::ShapeMismatch,
          "denormalize_radar expects normalized input");
  check_finite_cells(s.seq, "denormalize_radar");
  RadarSequence out = s;
  out.seq.form = Form::Raw;
  for (auto& v : out.seq.data) v = v * kRadarHiDbz;
  return out;
}

SatelliteSequence normalize_satellite(const SatelliteSequence& s) {
  require(s.seq.form == Form::Raw, ErrorKind::ShapeMismatch,
          "normalize_satellite expects raw-form input");
  check_finite_cells(s.seq, "normalize_satellite");
  SatelliteSequence out = s;
  out.seq.form = Form::Normalized;
  const float span = kSatHiK - kSatLoK;
  for (auto& v : out.seq.data) {
    v = (kSatHiK - std::clamp(v, kSatLoK, kSatHiK)) / span;
  }
  return out;
}

SatelliteSequence denormalize_satellite(const SatelliteSequence& s) {
  require(s.seq.form == Form::Normalized, ErrorKind::ShapeMismatch,
          "denormalize_satellite expects normalized input");
  check_finite_cells(s.seq, "denormalize_satellite");
  SatelliteSequence out = s;
  out.seq.form = Form::Raw;
  const float span = kSatHiK - kSatLoK;
  for (auto& v : out.seq.data) v = kSatHiK - v * span;
  return out;
}

}  // namespace vmudiff
