#pragma once

#include <cmath>

#include "vmudiff/nn.hpp"

namespace vmudiff {

struct StabConfig {
  int t_len = 5;
  int c_radar = 4;  // radar stream embedding width
  int c_sat = 4;    // satellite stream embedding width
  int h = 32;
  int w = 32;
  int sab_kernel = 5;  // odd
  int ratio = 4;       // attention MLP bottleneck divisor
};

/**
 * Spatial attention over one stream: per timestep, channels are pooled by
 * mean and max, a 5x5 conv turns the two pooled maps into logits, and the
 * sigmoid map gates every channel of that timestep.
 */
template <class T>
class SabT {
 public:
  SabT() = default;
  SabT(ParamStoreT<T>& ps, const std::string& name, int c, int k, Rng& rng) : c_(c), k_(k) {
    require(k % 2 == 1, ErrorKind::Usage, "sab kernel must be odd");
    w_ = &ps.create(name + ".w", {1, 2, k, k});
    b_ = &ps.create(name + ".b", {1});
    init_param(*w_, InitKind::Uniform, 2 * k * k, rng);
    // Gate starts open (sigmoid(2) ~ 0.88) so a fresh block passes the
    // stream through instead of halving it; the slope there is still ~0.1,
    // so the gate can train shut where it helps.
    b_->v[0] = T(2);
  }

  /** x: (T, C, H, W). */
  TensorT<T> forward(const TensorT<T>& x) {
    require(x.rank == 4 && x.shape[1] == c_, ErrorKind::ShapeMismatch,
            "sab: input must be (T, C, H, W)");
    x_ = x;
    const int tl = x.shape[0], h = x.shape[2], w = x.shape[3];
    const int hw = h * w;
    pooled_.reset({tl, 2, h, w});
    logits_.reset({tl, h, w});
    gate_.reset({tl, h, w});
    TensorT<T> y = TensorT<T>::zeros_like(x);
    const int p = k_ / 2;
    for (int t = 0; t < tl; ++t) {
      // channel mean and max pools
      for (int pos = 0; pos < hw; ++pos) {
        T mean = T(0);
        T mx = x.v[pos_index(t, 0, pos, hw)];
        for (int c = 0; c < c_; ++c) {
          T v = x.v[pos_index(t, c, pos, hw)];
          mean += v;
          mx = std::max(mx, v);
        }
        pooled_.v[(static_cast<std::size_t>(t) * 2 + 0) * hw + pos] = mean / T(c_);
        pooled_.v[(static_cast<std::size_t>(t) * 2 + 1) * hw + pos] = mx;
      }
      // 2 -> 1 conv, same padding
      for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) {
          T acc = b_->v[0];
          for (int ci = 0; ci < 2; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
              int iy = oy - p + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                int ix = ox - p + kx;
                if (ix < 0 || ix >= w) continue;
                acc += w_->v[(static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx] *
                       pooled_.v[(static_cast<std::size_t>(t) * 2 + ci) * hw + iy * w + ix];
              }
            }
          }
          logits_.v[static_cast<std::size_t>(t) * hw + oy * w + ox] = acc;
        }
      }
      for (int pos = 0; pos < hw; ++pos) {
        std::size_t gi = static_cast<std::size_t>(t) * hw + pos;
        T m = sigmoid_scalar(logits_.v[gi]);
        gate_.v[gi] = m;
        for (int c = 0; c < c_; ++c) {
          y.v[pos_index(t, c, pos, hw)] = x.v[pos_index(t, c, pos, hw)] * m;
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const int tl = x_.shape[0], h = x_.shape[2], w = x_.shape[3];
    const int hw = h * w;
    const int p = k_ / 2;
    TensorT<T> gx = TensorT<T>::zeros_like(x_);
    TensorT<T> glogits({tl, h, w});
    TensorT<T> gpooled = TensorT<T>::zeros_like(pooled_);
    for (int t = 0; t < tl; ++t) {
      for (int pos = 0; pos < hw; ++pos) {
        std::size_t gi = static_cast<std::size_t>(t) * hw + pos;
        T m = gate_.v[gi];
        T gm = T(0);
        for (int c = 0; c < c_; ++c) {
          std::size_t xi = pos_index(t, c, pos, hw);
          gx.v[xi] += gy.v[xi] * m;
          gm += gy.v[xi] * x_.v[xi];
        }
        glogits.v[gi] = gm * m * (T(1) - m);
      }
      // conv backward
      for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) {
          T go = glogits.v[static_cast<std::size_t>(t) * hw + oy * w + ox];
          b_->g[0] += go;
          for (int ci = 0; ci < 2; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
              int iy = oy - p + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                int ix = ox - p + kx;
                if (ix < 0 || ix >= w) continue;
                std::size_t wi = (static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx;
                std::size_t pi = (static_cast<std::size_t>(t) * 2 + ci) * hw + iy * w + ix;
                w_->g[wi] += go * pooled_.v[pi];
                gpooled.v[pi] += go * w_->v[wi];
              }
            }
          }
        }
      }
      // pool backward: mean spreads evenly, max routes to the argmax cell
      for (int pos = 0; pos < hw; ++pos) {
        T gmean = gpooled.v[(static_cast<std::size_t>(t) * 2 + 0) * hw + pos] / T(c_);
        T gmax = gpooled.v[(static_cast<std::size_t>(t) * 2 + 1) * hw + pos];
        int arg = 0;
        T best = x_.v[pos_index(t, 0, pos, hw)];
        for (int c = 1; c < c_; ++c) {
          T v = x_.v[pos_index(t, c, pos, hw)];
          if (v > best) {
            best = v;
            arg = c;
          }
        }
        for (int c = 0; c < c_; ++c) gx.v[pos_index(t, c, pos, hw)] += gmean;
        gx.v[pos_index(t, arg, pos, hw)] += gmax;
      }
    }
    return gx;
  }

 private:
  std::size_t pos_index(int t, int c, int pos, int hw) const {
    return (static_cast<std::size_t>(t) * c_ + c) * hw + pos;
  }

  int c_ = 0, k_ = 5;
  ParamT<T>* w_ = nullptr;
  ParamT<T>* b_ = nullptr;
  TensorT<T> x_, pooled_, logits_, gate_;
};

/**
 * Channel-temporal attention: a temporal gate from the global pool over
 * (c,h,w), then a channel gate from the global pool over (t,h,w), applied
 * in that order. Gates come from dense->silu->dense->sigmoid bottlenecks.
 */
template <class T>
class CtabT {
 public:
  CtabT() = default;
  CtabT(ParamStoreT<T>& ps, const std::string& name, int t_len, int c, int ratio, Rng& rng)
      : t_len_(t_len),
        c_(c),
        mlp_t_(ps, name + ".t", t_len, std::max(1, t_len / ratio), t_len, rng),
        mlp_c_(ps, name + ".c", c, std::max(1, c / ratio), c, rng) {}

  TensorT<T> forward(const TensorT<T>& x) {
    require(x.rank == 4 && x.shape[0] == t_len_ && x.shape[1] == c_, ErrorKind::ShapeMismatch,
            "ctab: input must be (T, C, H, W)");
    x_ = x;
    const int hw = x.shape[2] * x.shape[3];
    const std::size_t chw = static_cast<std::size_t>(c_) * hw;

    TensorT<T> st({t_len_});
    for (int t = 0; t < t_len_; ++t) {
      T acc = T(0);
      const T* base = x.data() + static_cast<std::size_t>(t) * chw;
      for (std::size_t i = 0; i < chw; ++i) acc += base[i];
      st.v[t] = acc / static_cast<T>(chw);
    }
    t_logits_ = mlp_t_.forward(st);
    t_gate_ = sigmoid_forward(t_logits_);

    x1_ = TensorT<T>::zeros_like(x);
    for (int t = 0; t < t_len_; ++t) {
      const T* src = x.data() + static_cast<std::size_t>(t) * chw;
      T* dst = x1_.data() + static_cast<std::size_t>(t) * chw;
      T g = t_gate_.v[t];
      for (std::size_t i = 0; i < chw; ++i) dst[i] = src[i] * g;
    }

    TensorT<T> sc({c_});
    for (int c = 0; c < c_; ++c) {
      T acc = T(0);
      for (int t = 0; t < t_len_; ++t) {
        const T* base = x1_.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) acc += base[i];
      }
      sc.v[c] = acc / static_cast<T>(static_cast<std::size_t>(t_len_) * hw);
    }
    c_logits_ = mlp_c_.forward(sc);
    c_gate_ = sigmoid_forward(c_logits_);

    TensorT<T> y = TensorT<T>::zeros_like(x);
    for (int t = 0; t < t_len_; ++t) {
      for (int c = 0; c < c_; ++c) {
        const T* src = x1_.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        T* dst = y.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        T g = c_gate_.v[c];
        for (int i = 0; i < hw; ++i) dst[i] = src[i] * g;
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const int hw = x_.shape[2] * x_.shape[3];
    const std::size_t chw = static_cast<std::size_t>(c_) * hw;

    // channel gate stage
    TensorT<T> gx1 = TensorT<T>::zeros_like(x1_);
    TensorT<T> gcgate({c_});
    for (int c = 0; c < c_; ++c) {
      T g = c_gate_.v[c];
      T acc = T(0);
      for (int t = 0; t < t_len_; ++t) {
        const T* x1p = x1_.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        const T* gyp = gy.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        T* gx1p = gx1.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) {
          gx1p[i] += gyp[i] * g;
          acc += gyp[i] * x1p[i];
        }
      }
      gcgate.v[c] = acc;
    }
    TensorT<T> gclogits = sigmoid_backward(c_logits_, gcgate);
    TensorT<T> gsc = mlp_c_.backward(gclogits);
    const T inv_thw = T(1) / static_cast<T>(static_cast<std::size_t>(t_len_) * hw);
    for (int c = 0; c < c_; ++c) {
      T add = gsc.v[c] * inv_thw;
      for (int t = 0; t < t_len_; ++t) {
        T* gx1p = gx1.data() + static_cast<std::size_t>(t) * chw + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) gx1p[i] += add;
      }
    }

    // temporal gate stage
    TensorT<T> gx = TensorT<T>::zeros_like(x_);
    TensorT<T> gtgate({t_len_});
    for (int t = 0; t < t_len_; ++t) {
      T g = t_gate_.v[t];
      const T* xp = x_.data() + static_cast<std::size_t>(t) * chw;
      const T* gx1p = gx1.data() + static_cast<std::size_t>(t) * chw;
      T* gxp = gx.data() + static_cast<std::size_t>(t) * chw;
      T acc = T(0);
      for (std::size_t i = 0; i < chw; ++i) {
        gxp[i] += gx1p[i] * g;
        acc += gx1p[i] * xp[i];
      }
      gtgate.v[t] = acc;
    }
    TensorT<T> gtlogits = sigmoid_backward(t_logits_, gtgate);
    TensorT<T> gst = mlp_t_.backward(gtlogits);
    const T inv_chw = T(1) / static_cast<T>(chw);
    for (int t = 0; t < t_len_; ++t) {
      T add = gst.v[t] * inv_chw;
      T* gxp = gx.data() + static_cast<std::size_t>(t) * chw;
      for (std::size_t i = 0; i < chw; ++i) gxp[i] += add;
    }
    return gx;
  }

 private:
  int t_len_ = 0, c_ = 0;
  MlpT<T> mlp_t_, mlp_c_;
  TensorT<T> x_, x1_, t_logits_, t_gate_, c_logits_, c_gate_;
};

/**
 * Full fusion block: stream-specific spatial attention, shared
 * channel-temporal attention over the concatenated streams, then the time
 * axis folded into channels: output (T*(C_r+C_s), H, W).
 */
template <class T>
class StabT {
 public:
  StabT() = default;
  StabT(ParamStoreT<T>& ps, const std::string& prefix, const StabConfig& cfg, Rng& rng)
      : cfg_(cfg),
        sab_radar_(ps, prefix + ".sab_radar", cfg.c_radar, cfg.sab_kernel, rng),
        sab_sat_(ps, prefix + ".sab_sat", cfg.c_sat, cfg.sab_kernel, rng),
        ctab_(ps, prefix + ".ctab", cfg.t_len, cfg.c_radar + cfg.c_sat, cfg.ratio, rng) {}

  /** radar (T,C_r,H,W), sat (T,C_s,H,W) -> (T*(C_r+C_s), H, W). */
  TensorT<T> forward(const TensorT<T>& radar, const TensorT<T>& sat) {
    require(radar.rank == 4 && sat.rank == 4, ErrorKind::ShapeMismatch,
            "stab: inputs must be (T, C, H, W)");
    require(radar.shape[0] == sat.shape[0] && radar.shape[2] == sat.shape[2] &&
                radar.shape[3] == sat.shape[3],
            ErrorKind::ShapeMismatch, "stab: stream T/H/W mismatch");
    require(radar.shape[0] == cfg_.t_len && radar.shape[1] == cfg_.c_radar &&
                sat.shape[1] == cfg_.c_sat,
            ErrorKind::ShapeMismatch, "stab: stream widths do not match config");
    const int tl = cfg_.t_len, h = radar.shape[2], w = radar.shape[3];
    const int hw = h * w;
    const int ct = cfg_.c_radar + cfg_.c_sat;

    TensorT<T> ar = sab_radar_.forward(radar);
    TensorT<T> as = sab_sat_.forward(sat);

    TensorT<T> cat({tl, ct, h, w});
    for (int t = 0; t < tl; ++t) {
      for (int c = 0; c < cfg_.c_radar; ++c) {
        std::copy_n(ar.data() + (static_cast<std::size_t>(t) * cfg_.c_radar + c) * hw, hw,
                    cat.data() + (static_cast<std::size_t>(t) * ct + c) * hw);
      }
      for (int c = 0; c < cfg_.c_sat; ++c) {
        std::copy_n(as.data() + (static_cast<std::size_t>(t) * cfg_.c_sat + c) * hw, hw,
                    cat.data() + (static_cast<std::size_t>(t) * ct + cfg_.c_radar + c) * hw);
      }
    }
    TensorT<T> fused = ctab_.forward(cat);

    // (T,C,H,W) -> (T*C,H,W): channel index t*C + c. Data order is identical,
    // so folding is a reinterpretation, not a shuffle.
    TensorT<T> y({tl * ct, h, w});
    std::copy(fused.v.begin(), fused.v.end(), y.v.begin());
    return y;
  }

  /** Returns (g_radar, g_sat). */
  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& gy) {
    const int tl = cfg_.t_len;
    const int ct = cfg_.c_radar + cfg_.c_sat;
    const int h = gy.shape[1], w = gy.shape[2];
    const int hw = h * w;

    TensorT<T> gfused({tl, ct, h, w});
    std::copy(gy.v.begin(), gy.v.end(), gfused.v.begin());
    TensorT<T> gcat = ctab_.backward(gfused);

    TensorT<T> gar({tl, cfg_.c_radar, h, w});
    TensorT<T> gas({tl, cfg_.c_sat, h, w});
    for (int t = 0; t < tl; ++t) {
      for (int c = 0; c < cfg_.c_radar; ++c) {
        std::copy_n(gcat.data() + (static_cast<std::size_t>(t) * ct + c) * hw, hw,
                    gar.data() + (static_cast<std::size_t>(t) * cfg_.c_radar + c) * hw);
      }
      for (int c = 0; c < cfg_.c_sat; ++c) {
        std::copy_n(gcat.data() + (static_cast<std::size_t>(t) * ct + cfg_.c_radar + c) * hw, hw,
                    gas.data() + (static_cast<std::size_t>(t) * cfg_.c_sat + c) * hw);
      }
    }
    return {sab_radar_.backward(gar), sab_sat_.backward(gas)};
  }

 private:
  StabConfig cfg_;
  SabT<T> sab_radar_, sab_sat_;
  CtabT<T> ctab_;
};

}  // namespace vmudiff
