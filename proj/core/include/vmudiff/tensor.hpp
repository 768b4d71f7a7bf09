#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "vmudiff/error.hpp"

namespace vmudiff {

/**
 * Dense row-major tensor of rank 1..4.
 *
 * Trailing dims of unused axes are 1, so a (C,H,W) tensor indexes as
 * at(c,h,w) and a flat vector as at(i). Storage is always contiguous;
 * kernels that care about speed grab data() and do their own striding.
 */
template <class T>
struct TensorT {
  std::array<int, 4> shape{1, 1, 1, 1};
  int rank = 0;
  std::vector<T> v;

  TensorT() = default;

  explicit TensorT(std::initializer_list<int> dims) { reset(dims); }

  void reset(std::initializer_list<int> dims) {
    require(dims.size() >= 1 && dims.size() <= 4, ErrorKind::ShapeMismatch,
            "tensor rank must be 1..4");
    shape = {1, 1, 1, 1};
    rank = static_cast<int>(dims.size());
    int i = 0;
    std::size_t n = 1;
    for (int d : dims) {
      require(d >= 1, ErrorKind::ShapeMismatch, "tensor dim must be positive");
      shape[i++] = d;
      n *= static_cast<std::size_t>(d);
    }
    v.assign(n, T(0));
  }

  static TensorT zeros(std::initializer_list<int> dims) { return TensorT(dims); }

  static TensorT zeros_like(const TensorT& o) {
    TensorT t;
    t.shape = o.shape;
    t.rank = o.rank;
    t.v.assign(o.v.size(), T(0));
    return t;
  }

  int numel() const { return static_cast<int>(v.size()); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  bool same_shape(const TensorT& o) const { return rank == o.rank && shape == o.shape; }

  T& at(int a) { return v[static_cast<std::size_t>(a)]; }
  T at(int a) const { return v[static_cast<std::size_t>(a)]; }

  T& at(int a, int b) { return v[static_cast<std::size_t>(a) * shape[1] + b]; }
  T at(int a, int b) const { return v[static_cast<std::size_t>(a) * shape[1] + b]; }

  T& at(int a, int b, int c) {
    return v[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }
  T at(int a, int b, int c) const {
    return v[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }

  T& at(int a, int b, int c, int d) {
    return v[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  T at(int a, int b, int c, int d) const {
    return v[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }

  void fill(T x) {
    for (auto& e : v) e = x;
  }

  void add_(const TensorT& o) {
    require(v.size() == o.v.size(), ErrorKind::ShapeMismatch, "add_: size mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
  }

  void scale_(T s) {
    for (auto& e : v) e *= s;
  }
};

using Tensor = TensorT<float>;

/** Converts element type; used to run float-trained graphs under double. */
template <class To, class From>
TensorT<To> cast_tensor(const TensorT<From>& x) {
  TensorT<To> y;
  y.shape = x.shape;
  y.rank = x.rank;
  y.v.resize(x.v.size());
  for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = static_cast<To>(x.v[i]);
  return y;
}

}  // namespace vmudiff
