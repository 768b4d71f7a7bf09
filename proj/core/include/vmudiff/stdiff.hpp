#pragma once

#include <functional>

#include "vmudiff/schedule.hpp"
#include "vmudiff/vmss.hpp"

namespace vmudiff {

/** Residual z_0 = Y - mu. mu + z_0 reproduces Y bit-exactly. */
template <class T>
TensorT<T> compute_residual_target(const TensorT<T>& y, const TensorT<T>& mu) {
  require(y.rank == mu.rank && y.shape == mu.shape, ErrorKind::ShapeMismatch,
          "residual: shape mismatch");
  TensorT<T> z0 = TensorT<T>::zeros_like(y);
  for (int i = 0; i < y.numel(); ++i) z0.v[i] = y.v[i] - mu.v[i];
  return z0;
}

/** Forward marginal z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps. */
template <class T>
TensorT<T> q_sample(const NoiseSchedule& sched, const TensorT<T>& z0, int t,
                    const TensorT<T>& eps) {
  require(t >= 0 && t <= sched.t_max, ErrorKind::Usage, "q_sample: t out of range");
  require(z0.numel() == eps.numel(), ErrorKind::ShapeMismatch, "q_sample: eps shape mismatch");
  const T a = static_cast<T>(sched.sqrt_ab(t));
  const T b = static_cast<T>(sched.sqrt_1mab(t));
  TensorT<T> zt = TensorT<T>::zeros_like(z0);
  for (int i = 0; i < z0.numel(); ++i) zt.v[i] = a * z0.v[i] + b * eps.v[i];
  return zt;
}

/** alpha * coarse + (1 - alpha) * refine. */
template <class T>
T total_loss(T l_coarse, T l_refine, T alpha) {
  require(alpha >= T(0) && alpha <= T(1), ErrorKind::Usage, "alpha must be in [0, 1]");
  require(std::isfinite(l_coarse) && std::isfinite(l_refine), ErrorKind::NonFinite,
          "loss terms must be finite");
  return alpha * l_coarse + (T(1) - alpha) * l_refine;
}

/** dim-wide sinusoidal embedding of a scalar step value (sin block, cos block). */
template <class T>
TensorT<T> sinusoidal_embedding(double t, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorKind::Usage, "embedding dim must be even and >= 2");
  const int half = dim / 2;
  TensorT<T> e({dim});
  const double denom = half > 1 ? half - 1 : 1;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * i / denom);
    e.v[i] = static_cast<T>(std::sin(t * freq));
    e.v[half + i] = static_cast<T>(std::cos(t * freq));
  }
  return e;
}

/**
 * Deterministic skipping sampler over a planted noise-prediction function.
 * eps_fn(z, t) must return a field shaped like z. Starts from z ~ N(0, I)
 * drawn from rng and walks the timetable down to step 0.
 */
template <class T, class EpsFn>
TensorT<T> ddim_generate(const NoiseSchedule& sched, int m, int h, int w, int n_steps, T eta,
                         Rng& rng, EpsFn&& eps_fn) {
  require(eta == T(0), ErrorKind::Usage, "only the deterministic sampler (eta = 0) is supported");
  std::vector<int> times = ddim_times(n_steps, sched.t_max);
  TensorT<T> z({m, h, w});
  for (int i = 0; i < z.numel(); ++i) z.v[i] = static_cast<T>(rng.normal());
  for (int k = n_steps - 1; k >= 0; --k) {
    const int t = times[k];
    const int tp = k > 0 ? times[k - 1] : 0;
    TensorT<T> eh = eps_fn(z, t);
    require(eh.numel() == z.numel(), ErrorKind::ShapeMismatch, "eps_fn output shape mismatch");
    const T sa = static_cast<T>(sched.sqrt_ab(t));
    const T sb = static_cast<T>(sched.sqrt_1mab(t));
    const T sap = static_cast<T>(sched.sqrt_ab(tp));
    const T sbp = static_cast<T>(sched.sqrt_1mab(tp));
    for (int i = 0; i < z.numel(); ++i) {
      T z0hat = (z.v[i] - sb * eh.v[i]) / sa;
      z.v[i] = sap * z0hat + sbp * eh.v[i];
    }
  }
  return z;
}

struct StdiffConfig {
  int m = 5;  // residual frames, folded into channels
  int h = 32;
  int w = 32;
  int width = 16;  // denoiser feature width
  int blocks = 4;
  int ffn_mult = 2;
  int temb_dim = 128;
  int cond_dim = 256;
  int mu_patch_channels = 8;  // strided-conv channels for the mu summary
  int f_channels = 64;        // bottleneck feature channels from the coarse net
  int f_h = 8;
  int f_w = 8;
  int t_diff = 1000;
  Ss2dConfig scan;
  // Shift-head init for the first modulation site. Zero keeps every head at
  // the literal init contract; Uniform gives the interior blocks gradient
  // signal from the first step (the zero out conv still pins the initial
  // output to zero either way).
  InitKind beta1_init = InitKind::Zero;

  void validate() const {
    require(m >= 1 && h >= 1 && w >= 1, ErrorKind::Usage, "stdiff: field dims must be >= 1");
    require(width >= 1 && blocks >= 1 && ffn_mult >= 1, ErrorKind::Usage,
            "stdiff: widths must be >= 1");
    require(temb_dim >= 2 && temb_dim % 2 == 0, ErrorKind::Usage, "stdiff: temb_dim must be even");
    require(cond_dim >= 1 && mu_patch_channels >= 1 && f_channels >= 1, ErrorKind::Usage,
            "stdiff: condition widths must be >= 1");
    require(f_h >= 1 && f_w >= 1 && h % f_h == 0 && w % f_w == 0 && h / f_h == w / f_w,
            ErrorKind::Usage, "stdiff: field size must be a square multiple of the feature size");
    require(t_diff >= 2, ErrorKind::Usage, "stdiff: t_diff must be >= 2");
  }
};

/**
 * Conditional residual denoiser. A stack of modulated state space blocks:
 * per block, with (g1, b1, g2, b2) per-channel vectors from dense heads on
 * (condition, step embedding),
 *   o1 = g1 (.) h + b1;  o1' = o1 + FFN(o1);  o2 = g2 (.) VMSS(o1') + b2;
 *   h <- h + o2.
 * The input conv lifts the noisy residual concatenated with the broadcast
 * step embedding; the zero-init output conv maps back to m channels, so the
 * whole network is constant zero at initialization.
 *
 * Training-path calls (refine_loss then backward_refine) cache activations
 * one-to-one. Sampling reuses the forward path without touching gradients.
 */
template <class T>
class StdiffT {
 public:
  StdiffT(ParamStoreT<T>& ps, const StdiffConfig& cfg, const NoiseSchedule& sched, Rng& rng)
      : cfg_(cfg), sched_(&sched) {
    cfg_.validate();
    require(sched.t_max == cfg_.t_diff, ErrorKind::Usage, "stdiff: schedule length mismatch");
    const int stride = cfg_.h / cfg_.f_h;
    mu_down_ = Conv2dT<T>(ps, "stdiff.cond.down", cfg_.m, cfg_.mu_patch_channels, stride, stride,
                          0, rng);
    cond_mlp_ = MlpT<T>(ps, "stdiff.cond.mlp", cfg_.mu_patch_channels + cfg_.f_channels,
                        cfg_.cond_dim, cfg_.cond_dim, rng);
    in_conv_ = Conv2dT<T>(ps, "stdiff.in", cfg_.m + cfg_.temb_dim, cfg_.width, 1, 1, 0, rng);
    out_conv_ = Conv2dT<T>(ps, "stdiff.out", cfg_.width, cfg_.m, 3, 1, 1, rng, InitKind::Zero);
    const int head_in = cfg_.cond_dim + cfg_.temb_dim;
    blocks_.reserve(cfg_.blocks);
    for (int i = 0; i < cfg_.blocks; ++i) {
      std::string p = "stdiff.block" + std::to_string(i);
      Block b;
      b.g1 = DenseT<T>(ps, p + ".g1", head_in, cfg_.width, rng, InitKind::Zero, InitKind::Zero);
      b.b1 = DenseT<T>(ps, p + ".b1", head_in, cfg_.width, rng, cfg_.beta1_init, InitKind::Zero);
      b.g2 = DenseT<T>(ps, p + ".g2", head_in, cfg_.width, rng, InitKind::Zero, InitKind::Zero);
      b.b2 = DenseT<T>(ps, p + ".b2", head_in, cfg_.width, rng, InitKind::Zero, InitKind::Zero);
      b.ffn1 = Conv2dT<T>(ps, p + ".ffn1", cfg_.width, cfg_.width * cfg_.ffn_mult, 1, 1, 0, rng);
      b.ffn2 = Conv2dT<T>(ps, p + ".ffn2", cfg_.width * cfg_.ffn_mult, cfg_.width, 1, 1, 0, rng);
      b.vmss = VmssBlockT<T>(ps, p + ".vmss", cfg_.width, cfg_.scan, rng);
      blocks_.push_back(std::move(b));
    }
  }

  const StdiffConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return *sched_; }

  /** Condition vector from (mu, bottleneck features); cached for later calls. */
  void build_condition(const TensorT<T>& mu, const TensorT<T>& f) {
    require(mu.rank == 3 && mu.shape[0] == cfg_.m && mu.shape[1] == cfg_.h && mu.shape[2] == cfg_.w,
            ErrorKind::ShapeMismatch, "stdiff: mu shape mismatch");
    require(f.rank == 3 && f.shape[0] == cfg_.f_channels && f.shape[1] == cfg_.f_h &&
                f.shape[2] == cfg_.f_w,
            ErrorKind::ShapeMismatch, "stdiff: feature shape mismatch");
    TensorT<T> down = mu_down_.forward(mu);
    cond_cat_ = concat_channels(down, f);
    const int cc = cond_cat_.shape[0];
    const int fhw = cfg_.f_h * cfg_.f_w;
    TensorT<T> pooled({cc});
    for (int c = 0; c < cc; ++c) {
      T acc = T(0);
      const T* base = cond_cat_.data() + static_cast<std::size_t>(c) * fhw;
      for (int i = 0; i < fhw; ++i) acc += base[i];
      pooled.v[c] = acc / static_cast<T>(fhw);
    }
    cond_c_ = cond_mlp_.forward(pooled);
  }

  const TensorT<T>& condition() const { return cond_c_; }

  /** Noise prediction for the cached condition. z: (m, h, w), 1 <= t <= t_diff. */
  TensorT<T> forward_eps(const TensorT<T>& z, int t) {
    require(cond_c_.numel() == cfg_.cond_dim, ErrorKind::Usage,
            "stdiff: build_condition must run before forward_eps");
    require(z.rank == 3 && z.shape[0] == cfg_.m && z.shape[1] == cfg_.h && z.shape[2] == cfg_.w,
            ErrorKind::ShapeMismatch, "stdiff: field shape mismatch");
    require(t >= 1 && t <= cfg_.t_diff, ErrorKind::Usage, "stdiff: step out of range");
    TensorT<T> temb = sinusoidal_embedding<T>(static_cast<double>(t), cfg_.temb_dim);

    head_in_.reset({cfg_.cond_dim + cfg_.temb_dim});
    std::copy(cond_c_.v.begin(), cond_c_.v.end(), head_in_.v.begin());
    std::copy(temb.v.begin(), temb.v.end(), head_in_.v.begin() + cfg_.cond_dim);

    const int hw = cfg_.h * cfg_.w;
    TensorT<T> zin({cfg_.m + cfg_.temb_dim, cfg_.h, cfg_.w});
    std::copy(z.v.begin(), z.v.end(), zin.v.begin());
    for (int j = 0; j < cfg_.temb_dim; ++j) {
      T* dst = zin.data() + static_cast<std::size_t>(cfg_.m + j) * hw;
      std::fill_n(dst, hw, temb.v[j]);
    }
    TensorT<T> hcur = in_conv_.forward(zin);
    for (auto& b : blocks_) hcur = block_forward(b, hcur);
    return out_conv_.forward(hcur);
  }

  /**
   * One training draw: t ~ U[1, t_diff], eps ~ N(0, I) (t first, then eps in
   * flat order), loss = mse(eps_hat, eps). Condition must be built first.
   */
  T refine_loss(const TensorT<T>& z0, Rng& rng) {
    const int t = static_cast<int>(rng.uniform_int(1, cfg_.t_diff));
    eps_.reset({z0.shape[0], z0.shape[1], z0.shape[2]});
    for (int i = 0; i < eps_.numel(); ++i) eps_.v[i] = static_cast<T>(rng.normal());
    TensorT<T> zt = q_sample(*sched_, z0, t, eps_);
    eps_hat_ = forward_eps(zt, t);
    return mse_loss(eps_hat_, eps_);
  }

  /** Backprop of upstream * refine_loss into all stdiff parameters. */
  void backward_refine(T upstream) {
    TensorT<T> geps = mse_loss_grad(eps_hat_, eps_, upstream);
    TensorT<T> gh = out_conv_.backward(geps);
    TensorT<T> ghead = TensorT<T>::zeros_like(head_in_);
    for (int i = cfg_.blocks - 1; i >= 0; --i) gh = block_backward(blocks_[i], gh, ghead);
    in_conv_.backward(gh);  // input field and step embedding take no parameter grads

    TensorT<T> gc({cfg_.cond_dim});
    std::copy_n(ghead.v.begin(), cfg_.cond_dim, gc.v.begin());
    TensorT<T> gpooled = cond_mlp_.backward(gc);
    const int cc = cond_cat_.shape[0];
    const int fhw = cfg_.f_h * cfg_.f_w;
    TensorT<T> gcat({cc, cfg_.f_h, cfg_.f_w});
    for (int c = 0; c < cc; ++c) {
      T g = gpooled.v[c] / static_cast<T>(fhw);
      std::fill_n(gcat.data() + static_cast<std::size_t>(c) * fhw, fhw, g);
    }
    auto [gdown, gf] = split_channels(gcat, cfg_.mu_patch_channels);
    (void)gf;  // condition inputs are treated as constants
    mu_down_.backward(gdown);
  }

  /** Deterministic sampler from the cached condition; returns the residual p. */
  TensorT<T> sample(int n_steps, T eta, Rng& rng) {
    return ddim_generate<T>(*sched_, cfg_.m, cfg_.h, cfg_.w, n_steps, eta, rng,
                            [this](const TensorT<T>& z, int t) { return forward_eps(z, t); });
  }

 private:
  struct Block {
    DenseT<T> g1, b1, g2, b2;
    Conv2dT<T> ffn1, ffn2;
    VmssBlockT<T> vmss;
    TensorT<T> h_in, g1v, b1v, g2v, b2v, o1, ffn_h, v;
  };

  TensorT<T> block_forward(Block& b, const TensorT<T>& h) {
    const int hw = cfg_.h * cfg_.w;
    b.h_in = h;
    b.g1v = b.g1.forward(head_in_);
    b.b1v = b.b1.forward(head_in_);
    b.g2v = b.g2.forward(head_in_);
    b.b2v = b.b2.forward(head_in_);
    b.o1 = TensorT<T>::zeros_like(h);
    for (int c = 0; c < cfg_.width; ++c) {
      const T g = b.g1v.v[c], off = b.b1v.v[c];
      const T* hp = h.data() + static_cast<std::size_t>(c) * hw;
      T* op = b.o1.data() + static_cast<std::size_t>(c) * hw;
      for (int i = 0; i < hw; ++i) op[i] = g * hp[i] + off;
    }
    b.ffn_h = b.ffn1.forward(b.o1);
    TensorT<T> fo = b.ffn2.forward(silu_forward(b.ffn_h));
    TensorT<T> o1p = b.o1;
    o1p.add_(fo);
    b.v = b.vmss.forward(o1p);
    TensorT<T> out = h;
    for (int c = 0; c < cfg_.width; ++c) {
      const T g = b.g2v.v[c], off = b.b2v.v[c];
      const T* vp = b.v.data() + static_cast<std::size_t>(c) * hw;
      T* op = out.data() + static_cast<std::size_t>(c) * hw;
      for (int i = 0; i < hw; ++i) op[i] += g * vp[i] + off;
    }
    return out;
  }

  TensorT<T> block_backward(Block& b, const TensorT<T>& gout, TensorT<T>& ghead) {
    const int hw = cfg_.h * cfg_.w;
    TensorT<T> gg2v({cfg_.width}), gb2v({cfg_.width});
    TensorT<T> gv = TensorT<T>::zeros_like(b.v);
    for (int c = 0; c < cfg_.width; ++c) {
      const T g = b.g2v.v[c];
      const T* gop = gout.data() + static_cast<std::size_t>(c) * hw;
      const T* vp = b.v.data() + static_cast<std::size_t>(c) * hw;
      T* gvp = gv.data() + static_cast<std::size_t>(c) * hw;
      T sg = T(0), sb = T(0);
      for (int i = 0; i < hw; ++i) {
        sg += gop[i] * vp[i];
        sb += gop[i];
        gvp[i] = gop[i] * g;
      }
      gg2v.v[c] = sg;
      gb2v.v[c] = sb;
    }
    TensorT<T> go1p = b.vmss.backward(gv);
    TensorT<T> gfs = b.ffn2.backward(go1p);
    TensorT<T> go1 = b.ffn1.backward(silu_backward(b.ffn_h, gfs));
    go1.add_(go1p);

    TensorT<T> gg1v({cfg_.width}), gb1v({cfg_.width});
    TensorT<T> gh = gout;  // residual path
    for (int c = 0; c < cfg_.width; ++c) {
      const T g = b.g1v.v[c];
      const T* go1p_ = go1.data() + static_cast<std::size_t>(c) * hw;
      const T* hp = b.h_in.data() + static_cast<std::size_t>(c) * hw;
      T* ghp = gh.data() + static_cast<std::size_t>(c) * hw;
      T sg = T(0), sb = T(0);
      for (int i = 0; i < hw; ++i) {
        sg += go1p_[i] * hp[i];
        sb += go1p_[i];
        ghp[i] += go1p_[i] * g;
      }
      gg1v.v[c] = sg;
      gb1v.v[c] = sb;
    }
    ghead.add_(b.g1.backward(gg1v));
    ghead.add_(b.b1.backward(gb1v));
    ghead.add_(b.g2.backward(gg2v));
    ghead.add_(b.b2.backward(gb2v));
    return gh;
  }

  StdiffConfig cfg_;
  const NoiseSchedule* sched_ = nullptr;
  Conv2dT<T> mu_down_;
  MlpT<T> cond_mlp_;
  Conv2dT<T> in_conv_, out_conv_;
  std::vector<Block> blocks_;

  TensorT<T> cond_cat_, cond_c_, head_in_;
  TensorT<T> eps_, eps_hat_;
};

}  // namespace vmudiff
