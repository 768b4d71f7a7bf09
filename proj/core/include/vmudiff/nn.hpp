#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vmudiff/error.hpp"
#include "vmudiff/rng.hpp"
#include "vmudiff/tensor.hpp"

namespace vmudiff {

/**
 * One learnable tensor: value, gradient, and Adam moments, all the same
 * shape. Lives inside a ParamStoreT; layers hold stable pointers to it.
 */
template <class T>
struct ParamT {
  std::string name;
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;
  std::vector<T> m1;  // Adam first moment
  std::vector<T> m2;  // Adam second moment

  int numel() const { return static_cast<int>(v.size()); }
};

/**
 * Ordered name -> parameter map plus the Adam step. Iteration order is the
 * lexicographic name order, which fixes checkpoint layout and makes update
 * sweeps deterministic.
 */
template <class T>
class ParamStoreT {
 public:
  ParamT<T>& create(const std::string& name, std::vector<int> shape) {
    require(!map_.contains(name), ErrorKind::Usage, "duplicate parameter name: " + name);
    ParamT<T>& p = map_[name];
    p.name = name;
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : p.shape) {
      require(d >= 1, ErrorKind::ShapeMismatch, "parameter dim must be positive: " + name);
      n *= static_cast<std::size_t>(d);
    }
    p.v.assign(n, T(0));
    p.g.assign(n, T(0));
    p.m1.assign(n, T(0));
    p.m2.assign(n, T(0));
    return p;
  }

  ParamT<T>* find(const std::string& name) {
    auto it = map_.find(name);
    return it == map_.end() ? nullptr : &it->second;
  }
  const ParamT<T>* find(const std::string& name) const {
    auto it = map_.find(name);
    return it == map_.end() ? nullptr : &it->second;
  }

  std::map<std::string, ParamT<T>>& entries() { return map_; }
  const std::map<std::string, ParamT<T>>& entries() const { return map_; }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& [k, p] : map_) n += p.v.size();
    return n;
  }

  void zero_grads() {
    for (auto& [k, p] : map_) {
      for (auto& g : p.g) g = T(0);
    }
  }

  long step_count() const { return step_; }

  /**
   * Bias-corrected Adam over every parameter, then zeroes gradients and
   * bumps the step counter. A non-finite gradient anywhere rejects the
   * whole step, naming the parameter.
   */
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    for (const auto& [k, p] : map_) {
      for (const T& g : p.g) {
        if (!std::isfinite(static_cast<double>(g))) {
          raise(ErrorKind::NonFinite, "non-finite gradient in parameter " + k);
        }
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& [k, p] : map_) {
      for (std::size_t i = 0; i < p.v.size(); ++i) {
        double g = static_cast<double>(p.g[i]);
        double m1 = beta1 * static_cast<double>(p.m1[i]) + (1.0 - beta1) * g;
        double m2 = beta2 * static_cast<double>(p.m2[i]) + (1.0 - beta2) * g * g;
        p.m1[i] = static_cast<T>(m1);
        p.m2[i] = static_cast<T>(m2);
        double update = lr * (m1 / c1) / (std::sqrt(m2 / c2) + eps);
        p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) - update);
        p.g[i] = T(0);
      }
    }
  }

 private:
  std::map<std::string, ParamT<T>> map_;
  long step_ = 0;
};

using ParamStore = ParamStoreT<float>;

enum class InitKind { Uniform, Zero };

template <class T>
void init_param(ParamT<T>& p, InitKind kind, int fan_in, Rng& rng) {
  if (kind == InitKind::Zero) return;  // buffers start zeroed
  double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : p.v) v = static_cast<T>(rng.uniform(-s, s));
}

// ---------------------------------------------------------------------------
// Elementwise activations. Callers keep the forward input around and hand it
// back to the *_backward helper.

template <class T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
  TensorT<T> y = TensorT<T>::zeros_like(x);
  for (int i = 0; i < x.numel(); ++i) y.v[i] = sigmoid_scalar(x.v[i]);
  return y;
}

template <class T>
TensorT<T> sigmoid_backward(const TensorT<T>& x, const TensorT<T>& gy) {
  TensorT<T> gx = TensorT<T>::zeros_like(x);
  for (int i = 0; i < x.numel(); ++i) {
    T s = sigmoid_scalar(x.v[i]);
    gx.v[i] = gy.v[i] * s * (T(1) - s);
  }
  return gx;
}

template <class T>
TensorT<T> silu_forward(const TensorT<T>& x) {
  TensorT<T> y = TensorT<T>::zeros_like(x);
  for (int i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] * sigmoid_scalar(x.v[i]);
  return y;
}

template <class T>
TensorT<T> silu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
  TensorT<T> gx = TensorT<T>::zeros_like(x);
  for (int i = 0; i < x.numel(); ++i) {
    T s = sigmoid_scalar(x.v[i]);
    gx.v[i] = gy.v[i] * s * (T(1) + x.v[i] * (T(1) - s));
  }
  return gx;
}

template <class T>
inline T softplus_scalar(T x) {
  // log(1 + e^x) without overflow for large |x|.
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log(T(1) + std::exp(x));
}

/** Softmax over a rank-1 tensor. */
template <class T>
TensorT<T> softmax_forward(const TensorT<T>& x) {
  require(x.rank == 1, ErrorKind::ShapeMismatch, "softmax expects a vector");
  TensorT<T> y = TensorT<T>::zeros_like(x);
  T mx = x.v[0];
  for (T v : x.v) mx = std::max(mx, v);
  T sum = T(0);
  for (int i = 0; i < x.numel(); ++i) {
    y.v[i] = std::exp(x.v[i] - mx);
    sum += y.v[i];
  }
  for (auto& v : y.v) v /= sum;
  return y;
}

template <class T>
TensorT<T> softmax_backward(const TensorT<T>& y, const TensorT<T>& gy) {
  TensorT<T> gx = TensorT<T>::zeros_like(y);
  T dot = T(0);
  for (int i = 0; i < y.numel(); ++i) dot += gy.v[i] * y.v[i];
  for (int i = 0; i < y.numel(); ++i) gx.v[i] = y.v[i] * (gy.v[i] - dot);
  return gx;
}

// ---------------------------------------------------------------------------
// Layers. Each instance owns its parameters (registered in the store at
// construction) and caches whatever forward state backward needs. One
// instance serves exactly one site in a network graph; reusing it within a
// single forward pass would clobber the cache.

/** Affine map over rows: y = x W^T + b, for x of shape (n, in) or (in). */
template <class T>
class DenseT {
 public:
  DenseT() = default;
  DenseT(ParamStoreT<T>& ps, const std::string& name, int in, int out, Rng& rng,
         InitKind w_init = InitKind::Uniform, InitKind b_init = InitKind::Zero)
      : in_(in), out_(out) {
    w_ = &ps.create(name + ".w", {out, in});
    b_ = &ps.create(name + ".b", {out});
    init_param(*w_, w_init, in, rng);
    init_param(*b_, b_init, in, rng);
  }

  TensorT<T> forward(const TensorT<T>& x) {
    int n = rows_of(x);
    x_ = x;
    TensorT<T> y = x.rank == 1 ? TensorT<T>({out_}) : TensorT<T>({n, out_});
    const T* xp = x.data();
    T* yp = y.data();
    for (int r = 0; r < n; ++r) {
      const T* xr = xp + static_cast<std::size_t>(r) * in_;
      T* yr = yp + static_cast<std::size_t>(r) * out_;
      for (int o = 0; o < out_; ++o) {
        const T* wr = w_->v.data() + static_cast<std::size_t>(o) * in_;
        T acc = b_->v[o];
        for (int i = 0; i < in_; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    int n = rows_of(x_);
    TensorT<T> gx = TensorT<T>::zeros_like(x_);
    const T* xp = x_.data();
    const T* gp = gy.data();
    T* gxp = gx.data();
    for (int r = 0; r < n; ++r) {
      const T* xr = xp + static_cast<std::size_t>(r) * in_;
      const T* gr = gp + static_cast<std::size_t>(r) * out_;
      T* gxr = gxp + static_cast<std::size_t>(r) * in_;
      for (int o = 0; o < out_; ++o) {
        T go = gr[o];
        const T* wr = w_->v.data() + static_cast<std::size_t>(o) * in_;
        T* gwr = w_->g.data() + static_cast<std::size_t>(o) * in_;
        b_->g[o] += go;
        for (int i = 0; i < in_; ++i) {
          gwr[i] += go * xr[i];
          gxr[i] += go * wr[i];
        }
      }
    }
    return gx;
  }

  int in_width() const { return in_; }
  int out_width() const { return out_; }
  ParamT<T>& bias() { return *b_; }

 private:
  int rows_of(const TensorT<T>& x) const {
    require(x.rank == 1 ? x.shape[0] == in_ : (x.rank == 2 && x.shape[1] == in_),
            ErrorKind::ShapeMismatch, "dense: input width mismatch");
    return x.rank == 1 ? 1 : x.shape[0];
  }

  int in_ = 0, out_ = 0;
  ParamT<T>* w_ = nullptr;
  ParamT<T>* b_ = nullptr;
  TensorT<T> x_;
};

/** Standard cross-correlation conv over (C,H,W) maps. */
template <class T>
class Conv2dT {
 public:
  Conv2dT() = default;
  Conv2dT(ParamStoreT<T>& ps, const std::string& name, int cin, int cout, int k, int stride,
          int pad, Rng& rng, InitKind w_init = InitKind::Uniform)
      : cin_(cin), cout_(cout), k_(k), s_(stride), p_(pad) {
    w_ = &ps.create(name + ".w", {cout, cin, k, k});
    b_ = &ps.create(name + ".b", {cout});
    init_param(*w_, w_init, cin * k * k, rng);
  }

  TensorT<T> forward(const TensorT<T>& x) {
    check_input(x);
    x_ = x;
    const int h = x.shape[1], w = x.shape[2];
    const int ho = (h + 2 * p_ - k_) / s_ + 1;
    const int wo = (w + 2 * p_ - k_) / s_ + 1;
    TensorT<T> y({cout_, ho, wo});
    for (int co = 0; co < cout_; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T acc = b_->v[co];
          for (int ci = 0; ci < cin_; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
              int iy = oy * s_ - p_ + ky;
              if (iy < 0 || iy >= h) continue;
              const T* xrow = x.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
              const T* wrow =
                  w_->v.data() + ((static_cast<std::size_t>(co) * cin_ + ci) * k_ + ky) * k_;
              for (int kx = 0; kx < k_; ++kx) {
                int ix = ox * s_ - p_ + kx;
                if (ix < 0 || ix >= w) continue;
                acc += wrow[kx] * xrow[ix];
              }
            }
          }
          y.at(co, oy, ox) = acc;
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const int h = x_.shape[1], w = x_.shape[2];
    const int ho = gy.shape[1], wo = gy.shape[2];
    TensorT<T> gx = TensorT<T>::zeros_like(x_);
    for (int co = 0; co < cout_; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T go = gy.at(co, oy, ox);
          b_->g[co] += go;
          for (int ci = 0; ci < cin_; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
              int iy = oy * s_ - p_ + ky;
              if (iy < 0 || iy >= h) continue;
              const T* xrow = x_.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
              T* gxrow = gx.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
              const T* wrow =
                  w_->v.data() + ((static_cast<std::size_t>(co) * cin_ + ci) * k_ + ky) * k_;
              T* gwrow =
                  w_->g.data() + ((static_cast<std::size_t>(co) * cin_ + ci) * k_ + ky) * k_;
              for (int kx = 0; kx < k_; ++kx) {
                int ix = ox * s_ - p_ + kx;
                if (ix < 0 || ix >= w) continue;
                gwrow[kx] += go * xrow[ix];
                gxrow[ix] += go * wrow[kx];
              }
            }
          }
        }
      }
    }
    return gx;
  }

  ParamT<T>& weights() { return *w_; }
  ParamT<T>& bias() { return *b_; }

 private:
  void check_input(const TensorT<T>& x) const {
    require(x.rank == 3 && x.shape[0] == cin_, ErrorKind::ShapeMismatch,
            "conv2d: input must be (C_in, H, W)");
    require((x.shape[1] + 2 * p_ - k_) % s_ == 0 && (x.shape[2] + 2 * p_ - k_) % s_ == 0,
            ErrorKind::ShapeMismatch, "conv2d: non-integral output size");
    require(x.shape[1] + 2 * p_ >= k_ && x.shape[2] + 2 * p_ >= k_, ErrorKind::ShapeMismatch,
            "conv2d: kernel larger than padded input");
  }

  int cin_ = 0, cout_ = 0, k_ = 0, s_ = 1, p_ = 0;
  ParamT<T>* w_ = nullptr;
  ParamT<T>* b_ = nullptr;
  TensorT<T> x_;
};

/** Per-channel conv (groups == channels). */
template <class T>
class DepthwiseConv2dT {
 public:
  DepthwiseConv2dT() = default;
  DepthwiseConv2dT(ParamStoreT<T>& ps, const std::string& name, int c, int k, int stride, int pad,
                   Rng& rng, InitKind w_init = InitKind::Uniform)
      : c_(c), k_(k), s_(stride), p_(pad) {
    w_ = &ps.create(name + ".w", {c, k, k});
    b_ = &ps.create(name + ".b", {c});
    init_param(*w_, w_init, k * k, rng);
  }

  TensorT<T> forward(const TensorT<T>& x) {
    require(x.rank == 3 && x.shape[0] == c_, ErrorKind::ShapeMismatch,
            "depthwise_conv2d: input must be (C, H, W)");
    require((x.shape[1] + 2 * p_ - k_) % s_ == 0 && (x.shape[2] + 2 * p_ - k_) % s_ == 0,
            ErrorKind::ShapeMismatch, "depthwise_conv2d: non-integral output size");
    x_ = x;
    const int h = x.shape[1], w = x.shape[2];
    const int ho = (h + 2 * p_ - k_) / s_ + 1;
    const int wo = (w + 2 * p_ - k_) / s_ + 1;
    TensorT<T> y({c_, ho, wo});
    for (int c = 0; c < c_; ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T acc = b_->v[c];
          for (int ky = 0; ky < k_; ++ky) {
            int iy = oy * s_ - p_ + ky;
            if (iy < 0 || iy >= h) continue;
            const T* xrow = x.data() + (static_cast<std::size_t>(c) * h + iy) * w;
            const T* wrow = w_->v.data() + (static_cast<std::size_t>(c) * k_ + ky) * k_;
            for (int kx = 0; kx < k_; ++kx) {
              int ix = ox * s_ - p_ + kx;
              if (ix < 0 || ix >= w) continue;
              acc += wrow[kx] * xrow[ix];
            }
          }
          y.at(c, oy, ox) = acc;
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const int h = x_.shape[1], w = x_.shape[2];
    const int ho = gy.shape[1], wo = gy.shape[2];
    TensorT<T> gx = TensorT<T>::zeros_like(x_);
    for (int c = 0; c < c_; ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T go = gy.at(c, oy, ox);
          b_->g[c] += go;
          for (int ky = 0; ky < k_; ++ky) {
            int iy = oy * s_ - p_ + ky;
            if (iy < 0 || iy >= h) continue;
            const T* xrow = x_.data() + (static_cast<std::size_t>(c) * h + iy) * w;
            T* gxrow = gx.data() + (static_cast<std::size_t>(c) * h + iy) * w;
            const T* wrow = w_->v.data() + (static_cast<std::size_t>(c) * k_ + ky) * k_;
            T* gwrow = w_->g.data() + (static_cast<std::size_t>(c) * k_ + ky) * k_;
            for (int kx = 0; kx < k_; ++kx) {
              int ix = ox * s_ - p_ + kx;
              if (ix < 0 || ix >= w) continue;
              gwrow[kx] += go * xrow[ix];
              gxrow[ix] += go * wrow[kx];
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  int c_ = 0, k_ = 0, s_ = 1, p_ = 0;
  ParamT<T>* w_ = nullptr;
  ParamT<T>* b_ = nullptr;
  TensorT<T> x_;
};

/** Layer norm across the channel axis at each spatial position of (C,H,W). */
template <class T>
class LayerNormChannelsT {
 public:
  static constexpr double kEps = 1e-5;

  LayerNormChannelsT() = default;
  LayerNormChannelsT(ParamStoreT<T>& ps, const std::string& name, int c) : c_(c) {
    gamma_ = &ps.create(name + ".gamma", {c});
    beta_ = &ps.create(name + ".beta", {c});
    for (auto& v : gamma_->v) v = T(1);
  }

  TensorT<T> forward(const TensorT<T>& x) {
    require(x.rank == 3 && x.shape[0] == c_, ErrorKind::ShapeMismatch,
            "layer_norm: input must be (C, H, W)");
    x_ = x;
    const int h = x.shape[1], w = x.shape[2];
    const int hw = h * w;
    xhat_ = TensorT<T>::zeros_like(x);
    inv_std_.assign(static_cast<std::size_t>(hw), T(0));
    TensorT<T> y = TensorT<T>::zeros_like(x);
    for (int pos = 0; pos < hw; ++pos) {
      T mean = T(0);
      for (int c = 0; c < c_; ++c) mean += x.v[static_cast<std::size_t>(c) * hw + pos];
      mean /= T(c_);
      T var = T(0);
      for (int c = 0; c < c_; ++c) {
        T d = x.v[static_cast<std::size_t>(c) * hw + pos] - mean;
        var += d * d;
      }
      var /= T(c_);
      T inv = T(1) / std::sqrt(var + T(kEps));
      inv_std_[static_cast<std::size_t>(pos)] = inv;
      for (int c = 0; c < c_; ++c) {
        std::size_t i = static_cast<std::size_t>(c) * hw + pos;
        T xh = (x.v[i] - mean) * inv;
        xhat_.v[i] = xh;
        y.v[i] = gamma_->v[c] * xh + beta_->v[c];
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const int h = x_.shape[1], w = x_.shape[2];
    const int hw = h * w;
    TensorT<T> gx = TensorT<T>::zeros_like(x_);
    for (int pos = 0; pos < hw; ++pos) {
      T inv = inv_std_[static_cast<std::size_t>(pos)];
      T sum_g = T(0), sum_gx = T(0);
      for (int c = 0; c < c_; ++c) {
        std::size_t i = static_cast<std::size_t>(c) * hw + pos;
        T gh = gy.v[i] * gamma_->v[c];
        sum_g += gh;
        sum_gx += gh * xhat_.v[i];
        gamma_->g[c] += gy.v[i] * xhat_.v[i];
        beta_->g[c] += gy.v[i];
      }
      for (int c = 0; c < c_; ++c) {
        std::size_t i = static_cast<std::size_t>(c) * hw + pos;
        T gh = gy.v[i] * gamma_->v[c];
        gx.v[i] = inv * (gh - (sum_g + xhat_.v[i] * sum_gx) / T(c_));
      }
    }
    return gx;
  }

 private:
  int c_ = 0;
  ParamT<T>* gamma_ = nullptr;
  ParamT<T>* beta_ = nullptr;
  TensorT<T> x_, xhat_;
  std::vector<T> inv_std_;
};

/** dense -> silu -> dense. */
template <class T>
class MlpT {
 public:
  MlpT() = default;
  MlpT(ParamStoreT<T>& ps, const std::string& name, int in, int hidden, int out, Rng& rng,
       InitKind out_init = InitKind::Uniform)
      : fc1_(ps, name + ".fc1", in, hidden, rng), fc2_(ps, name + ".fc2", hidden, out, rng, out_init) {}

  TensorT<T> forward(const TensorT<T>& x) {
    h_ = fc1_.forward(x);
    return fc2_.forward(silu_forward(h_));
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    TensorT<T> ga = fc2_.backward(gy);
    return fc1_.backward(silu_backward(h_, ga));
  }

  ParamT<T>& out_bias() { return fc2_.bias(); }

 private:
  DenseT<T> fc1_, fc2_;
  TensorT<T> h_;
};

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.rank == 3 && b.rank == 3 && a.shape[1] == b.shape[1] && a.shape[2] == b.shape[2],
          ErrorKind::ShapeMismatch, "concat: spatial dims differ");
  TensorT<T> y({a.shape[0] + b.shape[0], a.shape[1], a.shape[2]});
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + a.v.size());
  return y;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& g, int ca) {
  TensorT<T> ga({ca, g.shape[1], g.shape[2]});
  TensorT<T> gb({g.shape[0] - ca, g.shape[1], g.shape[2]});
  std::copy_n(g.v.begin(), ga.v.size(), ga.v.begin());
  std::copy(g.v.begin() + ga.v.size(), g.v.end(), gb.v.begin());
  return {std::move(ga), std::move(gb)};
}

/** Mean squared error over all elements. */
template <class T>
T mse_loss(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.numel() == b.numel(), ErrorKind::ShapeMismatch, "mse: size mismatch");
  T acc = T(0);
  for (int i = 0; i < a.numel(); ++i) {
    T d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return acc / static_cast<T>(a.numel());
}

/** d(mse)/da = 2 (a - b) / n, scaled by an upstream factor. */
template <class T>
TensorT<T> mse_loss_grad(const TensorT<T>& a, const TensorT<T>& b, T upstream = T(1)) {
  require(a.numel() == b.numel(), ErrorKind::ShapeMismatch, "mse: size mismatch");
  TensorT<T> g = TensorT<T>::zeros_like(a);
  T scale = upstream * T(2) / static_cast<T>(a.numel());
  for (int i = 0; i < a.numel(); ++i) g.v[i] = scale * (a.v[i] - b.v[i]);
  return g;
}

}  // namespace vmudiff
