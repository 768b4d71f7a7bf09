#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vmudiff/checkpoint.hpp"
#include "vmudiff/error.hpp"
#include "vmudiff/rng.hpp"
#include "vmudiff/sequence.hpp"
#include "vmudiff/sequence_io.hpp"
#include "vmudiff/tensor.hpp"

using namespace vmudiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "vmudiff_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("tensor shape and indexing") {
  Tensor t({2, 3, 4});
  CHECK(t.rank == 3);
  CHECK(t.numel() == 24);
  t.at(1, 2, 3) = 5.0f;
  CHECK(t.v[23] == 5.0f);
  t.at(0, 0, 1) = 7.0f;
  CHECK(t.v[1] == 7.0f);  // last axis is contiguous

  Tensor d;
  CHECK(d.numel() == 0);
  d.reset({4, 4});
  CHECK(d.numel() == 16);
  CHECK(d.v[5] == 0.0f);

  Tensor z = Tensor::zeros_like(t);
  CHECK(z.same_shape(t));
  CHECK(z.v[23] == 0.0f);
}

TEST_CASE("tensor cast preserves values") {
  Tensor t({3});
  t.v = {1.5f, -2.0f, 0.25f};
  TensorT<double> d = cast_tensor<double>(t);
  CHECK(d.v[1] == -2.0);
  Tensor back = cast_tensor<float>(d);
  CHECK(back.v[2] == 0.25f);
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(123);
  for (int i = 0; i < 10; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);

  // derived seeds decorrelate even for adjacent tags
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
}

TEST_CASE("rng uniform_int hits both ends inclusively") {
  Rng r(7);
  bool lo = false, hi = false;
  for (int i = 0; i < 1000; ++i) {
    long v = r.uniform_int(3, 5);
    CHECK(v >= 3);
    CHECK(v <= 5);
    lo |= v == 3;
    hi |= v == 5;
  }
  CHECK(lo);
  CHECK(hi);
}

TEST_CASE("rng normal moments") {
  Rng r(99);
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    sum += v;
    sum2 += v * v;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(double(n)));       // 3 SE of the mean
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));    // 3 SE of the variance
}

TEST_CASE("error kinds carry through raise and require") {
  CHECK_THROWS_AS(raise(ErrorKind::Io, "x"), Error);
  try {
    require(false, ErrorKind::ShapeMismatch, "boom");
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
  CHECK_NOTHROW(require(true, ErrorKind::Io, "fine"));
}

TEST_CASE("frame sequence layout is t-major with contiguous frames") {
  FrameSequence s(2, 3, 4, 5);
  s.at(1, 2, 3, 4) = 9.0f;
  CHECK(s.data.back() == 9.0f);
  s.at(0, 1, 0, 0) = 4.0f;
  CHECK(s.frame(0, 1)[0] == 4.0f);
  CHECK(&s.frame(1, 0)[0] == &s.data[3 * 4 * 5]);
}

TEST_CASE("radar normalization clamps and scales") {
  FrameSequence raw(1, 1, 2, 2);
  raw.data = {35.0f, -5.0f, 140.0f, 70.0f};
  RadarSequence r{raw};
  RadarSequence n = normalize_radar(r);
  CHECK(n.seq.form == Form::Normalized);
  CHECK(n.seq.data[0] == doctest::Approx(0.5));
  CHECK(n.seq.data[1] == 0.0f);  // clamped below
  CHECK(n.seq.data[2] == 1.0f);  // clamped above
  CHECK(n.seq.data[3] == 1.0f);

  RadarSequence back = denormalize_radar(n);
  CHECK(back.seq.form == Form::Raw);
  CHECK(back.seq.data[0] == doctest::Approx(35.0));
  // normalizing an already-normalized sequence is rejected
  CHECK_THROWS_AS(normalize_radar(n), Error);
}

TEST_CASE("satellite normalization maps cold tops high") {
  FrameSequence raw(1, 4, 1, 1);
  raw.data = {320.0f, 180.0f, 250.0f, 500.0f};
  SatelliteSequence s{raw};
  SatelliteSequence n = normalize_satellite(s);
  CHECK(n.seq.data[0] == 0.0f);                       // warm -> low
  CHECK(n.seq.data[1] == 1.0f);                       // cold -> high
  CHECK(n.seq.data[2] == doctest::Approx(0.5));
  CHECK(n.seq.data[3] == 0.0f);                       // clamped to warm end
}

TEST_CASE("sequence file round trip is bit exact") {
  fs::path dir = scratch_dir("seq_io");
  FrameSequence s(3, 2, 5, 7, Form::Normalized);
  Rng r(5);
  for (auto& v : s.data) v = static_cast<float>(r.uniform(-1.0, 2.0));
  const std::string path = (dir / "a.vmud").string();
  write_sequence(s, path);

  FrameSequence t = read_sequence(path);
  CHECK(t.t_len == 3);
  CHECK(t.c_len == 2);
  CHECK(t.h == 5);
  CHECK(t.w == 7);
  CHECK(t.form == Form::Normalized);
  CHECK(std::memcmp(t.data.data(), s.data.data(), s.data.size() * 4) == 0);

  // header: magic, version, dims, form, pad; then payload
  std::ifstream f(path, std::ios::binary);
  std::vector<char> head(28);
  f.read(head.data(), 28);
  CHECK(std::string(head.data(), 4) == "VMUD");
  CHECK(fs::file_size(path) == 28 + s.data.size() * 4);
}

TEST_CASE("sequence reader rejects corrupt containers") {
  fs::path dir = scratch_dir("seq_bad");
  FrameSequence s(1, 1, 4, 4);
  const std::string good = (dir / "good.vmud").string();
  write_sequence(s, good);

  auto mutate = [&](const char* name, auto fn) {
    std::ifstream in(good, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    fn(bytes);
    std::string p = (dir / name).string();
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return p;
  };

  std::string bad_magic = mutate("magic.vmud", [](std::vector<char>& b) { b[0] = 'X'; });
  std::string bad_ver = mutate("ver.vmud", [](std::vector<char>& b) { b[4] = 9; });
  std::string trunc = mutate("trunc.vmud", [](std::vector<char>& b) { b.resize(b.size() - 5); });
  std::string huge = mutate("huge.vmud", [](std::vector<char>& b) { b[10] = 0x7f; });

  auto kind_of = [](const std::string& p) {
    try {
      read_sequence(p);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Usage;
  };
  CHECK(kind_of(bad_magic) == ErrorKind::BadMagic);
  CHECK(kind_of(bad_ver) == ErrorKind::VersionMismatch);
  CHECK(kind_of(trunc) == ErrorKind::Truncated);
  CHECK(kind_of(huge) == ErrorKind::DimOverflow);
  CHECK_THROWS_AS(read_sequence((dir / "missing.vmud").string()), Error);
}

TEST_CASE("checkpoint round trip restores every scalar") {
  fs::path dir = scratch_dir("ckpt");
  ParamStore ps;
  Rng r(3);
  auto& a = ps.create("net.w", {2, 3});
  auto& b = ps.create("net.b", {3});
  for (auto& v : a.v) v = static_cast<float>(r.normal());
  for (auto& v : b.v) v = static_cast<float>(r.normal());
  const std::string path = (dir / "m.vmck").string();
  save_checkpoint(ps, path);

  ParamStore qs;
  qs.create("net.w", {2, 3});
  qs.create("net.b", {3});
  load_checkpoint(qs, path);
  CHECK(std::memcmp(qs.find("net.w")->v.data(), a.v.data(), a.v.size() * 4) == 0);
  CHECK(std::memcmp(qs.find("net.b")->v.data(), b.v.data(), b.v.size() * 4) == 0);

  // a store with a different parameter set refuses the file
  ParamStore other;
  other.create("net.w", {2, 3});
  CHECK_THROWS_AS(load_checkpoint(other, path), Error);
  ParamStore wrong_shape;
  wrong_shape.create("net.w", {3, 2});
  wrong_shape.create("net.b", {3});
  CHECK_THROWS_AS(load_checkpoint(wrong_shape, path), Error);
}

TEST_CASE("checkpoint bytes are a deterministic function of the store") {
  fs::path dir = scratch_dir("ckpt_det");
  ParamStore ps;
  ps.create("b", {2}).v = {1.0f, 2.0f};
  ps.create("a", {1}).v = {3.0f};
  const std::string p1 = (dir / "1.vmck").string(), p2 = (dir / "2.vmck").string();
  save_checkpoint(ps, p1);
  save_checkpoint(ps, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  CHECK(std::string(b1.data(), 4) == "VMCK");
}
