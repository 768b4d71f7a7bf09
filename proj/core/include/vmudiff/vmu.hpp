#pragma once

#include <utility>
#include <vector>

#include "vmudiff/stab.hpp"
#include "vmudiff/vmss.hpp"

namespace vmudiff {

// Coarse outputs live in normalized units; the head clamps to this interval.
inline constexpr double kCoarseClampLo = 0.0;
inline constexpr double kCoarseClampHi = 1.2;

struct VmuConfig {
  int n_in = 5;
  int m_out = 5;
  int h = 32;
  int w = 32;
  int sat_channels = 4;  // channels per satellite frame on disk
  int c_radar = 4;       // radar stream embedding width
  int c_sat = 4;         // satellite stream embedding width
  int c0 = 16;           // channels at the top encoder level
  int levels = 3;        // level l runs at c0 * 2^l channels
  int blocks_per_level = 2;
  int sab_kernel = 5;
  int attn_ratio = 4;
  Ss2dConfig scan;  // d_model is filled in per level
  bool ablate_msfusion = false;

  int bottleneck_channels() const { return c0 << (levels - 1); }
  int bottleneck_h() const { return h >> (levels - 1); }
  int bottleneck_w() const { return w >> (levels - 1); }

  void validate() const {
    require(n_in >= 1 && m_out >= 1, ErrorKind::Usage, "vmu: sequence lengths must be >= 1");
    require(levels >= 1 && c0 >= 1 && blocks_per_level >= 1, ErrorKind::Usage,
            "vmu: levels, c0, blocks_per_level must be >= 1");
    require(c_radar >= 1 && c_sat >= 1 && sat_channels >= 1, ErrorKind::Usage,
            "vmu: stream widths must be >= 1");
    int div = 1 << (levels - 1);
    require(h % div == 0 && w % div == 0 && h >= 2 * div && w >= 2 * div, ErrorKind::Usage,
            "vmu: h and w must be divisible by 2^(levels-1) with a non-trivial bottleneck");
  }
};

template <class T>
TensorT<T> upsample_nearest2(const TensorT<T>& x) {
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  TensorT<T> y({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        T v = x.at(ch, yy, xx);
        y.at(ch, 2 * yy, 2 * xx) = v;
        y.at(ch, 2 * yy, 2 * xx + 1) = v;
        y.at(ch, 2 * yy + 1, 2 * xx) = v;
        y.at(ch, 2 * yy + 1, 2 * xx + 1) = v;
      }
    }
  }
  return y;
}

template <class T>
TensorT<T> upsample_nearest2_backward(const TensorT<T>& gy) {
  const int c = gy.shape[0], h2 = gy.shape[1], w2 = gy.shape[2];
  TensorT<T> gx({c, h2 / 2, w2 / 2});
  for (int ch = 0; ch < c; ++ch) {
    for (int yy = 0; yy < h2 / 2; ++yy) {
      for (int xx = 0; xx < w2 / 2; ++xx) {
        gx.at(ch, yy, xx) = gy.at(ch, 2 * yy, 2 * xx) + gy.at(ch, 2 * yy, 2 * xx + 1) +
                            gy.at(ch, 2 * yy + 1, 2 * xx) + gy.at(ch, 2 * yy + 1, 2 * xx + 1);
      }
    }
  }
  return gx;
}

/**
 * Coarse predictor: per-stream 1x1 embeddings, attention fusion with the
 * time axis folded into channels, then a U-shaped encoder/decoder of state
 * space blocks. Produces the mean forecast and the bottleneck feature map.
 *
 * All tensors are single-sample: radar (n_in,1,h,w), satellite
 * (n_in,sat_channels,h,w), output (m_out,h,w), all in normalized units.
 */
template <class T>
class VmuNetT {
 public:
  VmuNetT(ParamStoreT<T>& ps, const VmuConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    embed_radar_ = DenseT<T>(ps, "vmu.embed_radar", 1, cfg_.c_radar, rng);
    embed_sat_ = DenseT<T>(ps, "vmu.embed_sat", cfg_.sat_channels, cfg_.c_sat, rng);
    if (!cfg_.ablate_msfusion) {
      StabConfig sc;
      sc.t_len = cfg_.n_in;
      sc.c_radar = cfg_.c_radar;
      sc.c_sat = cfg_.c_sat;
      sc.h = cfg_.h;
      sc.w = cfg_.w;
      sc.sab_kernel = cfg_.sab_kernel;
      sc.ratio = cfg_.attn_ratio;
      stab_ = StabT<T>(ps, "vmu.stab", sc, rng);
    }
    const int folded = cfg_.n_in * (cfg_.c_radar + cfg_.c_sat);
    enc_embed_ = Conv2dT<T>(ps, "vmu.enc_embed", folded, cfg_.c0, 1, 1, 0, rng);
    enc_blocks_.resize(cfg_.levels);
    for (int l = 0; l < cfg_.levels; ++l) {
      int c = cfg_.c0 << l;
      for (int i = 0; i < cfg_.blocks_per_level; ++i) {
        enc_blocks_[l].emplace_back(ps, "vmu.enc" + std::to_string(l) + ".block" + std::to_string(i),
                                    c, cfg_.scan, rng);
      }
      if (l + 1 < cfg_.levels) {
        down_.emplace_back(ps, "vmu.down" + std::to_string(l), c, 2 * c, 2, 2, 0, rng);
      }
    }
    dec_up_.resize(cfg_.levels - 1);
    dec_fuse_.resize(cfg_.levels - 1);
    dec_blocks_.resize(cfg_.levels - 1);
    for (int l = cfg_.levels - 2; l >= 0; --l) {
      int c = cfg_.c0 << l;
      dec_up_[l] = Conv2dT<T>(ps, "vmu.up" + std::to_string(l), 2 * c, c, 3, 1, 1, rng);
      dec_fuse_[l] = Conv2dT<T>(ps, "vmu.fuse" + std::to_string(l), 2 * c, c, 1, 1, 0, rng);
      for (int i = 0; i < cfg_.blocks_per_level; ++i) {
        dec_blocks_[l].emplace_back(ps, "vmu.dec" + std::to_string(l) + ".block" + std::to_string(i),
                                    c, cfg_.scan, rng);
      }
    }
    head_ = Conv2dT<T>(ps, "vmu.head", cfg_.c0, cfg_.m_out, 1, 1, 0, rng, InitKind::Zero);
  }

  const VmuConfig& config() const { return cfg_; }

  /** radar (n_in,1,h,w), sat (n_in,sat_channels,h,w), both normalized. */
  TensorT<T> forward(const TensorT<T>& radar, const TensorT<T>& sat) {
    require(radar.rank == 4 && radar.shape[0] == cfg_.n_in && radar.shape[1] == 1 &&
                radar.shape[2] == cfg_.h && radar.shape[3] == cfg_.w,
            ErrorKind::ShapeMismatch, "vmu: radar input shape mismatch");
    require(sat.rank == 4 && sat.shape[0] == cfg_.n_in && sat.shape[1] == cfg_.sat_channels &&
                sat.shape[2] == cfg_.h && sat.shape[3] == cfg_.w,
            ErrorKind::ShapeMismatch, "vmu: satellite input shape mismatch");
    const int tl = cfg_.n_in, hw = cfg_.h * cfg_.w;

    TensorT<T> er_rows = embed_radar_.forward(to_rows(radar));
    TensorT<T> es_rows = embed_sat_.forward(to_rows(sat));
    TensorT<T> er = from_rows(er_rows, tl, cfg_.c_radar, cfg_.h, cfg_.w);
    TensorT<T> es = from_rows(es_rows, tl, cfg_.c_sat, cfg_.h, cfg_.w);

    TensorT<T> folded;
    if (cfg_.ablate_msfusion) {
      // plain per-timestep concat, time folded into channels
      const int ct = cfg_.c_radar + cfg_.c_sat;
      folded.reset({tl * ct, cfg_.h, cfg_.w});
      for (int t = 0; t < tl; ++t) {
        std::copy_n(er.data() + static_cast<std::size_t>(t) * cfg_.c_radar * hw,
                    static_cast<std::size_t>(cfg_.c_radar) * hw,
                    folded.data() + static_cast<std::size_t>(t) * ct * hw);
        std::copy_n(es.data() + static_cast<std::size_t>(t) * cfg_.c_sat * hw,
                    static_cast<std::size_t>(cfg_.c_sat) * hw,
                    folded.data() + (static_cast<std::size_t>(t) * ct + cfg_.c_radar) * hw);
      }
    } else {
      folded = stab_.forward(er, es);
    }

    TensorT<T> x = enc_embed_.forward(folded);
    skips_.clear();
    for (int l = 0; l < cfg_.levels; ++l) {
      for (auto& blk : enc_blocks_[l]) x = blk.forward(x);
      if (l + 1 < cfg_.levels) {
        skips_.push_back(x);
        x = down_[l].forward(x);
      }
    }
    f_fused_ = x;

    for (int l = cfg_.levels - 2; l >= 0; --l) {
      x = dec_up_[l].forward(upsample_nearest2(x));
      x = dec_fuse_[l].forward(concat_channels(x, skips_[l]));
      for (auto& blk : dec_blocks_[l]) x = blk.forward(x);
    }
    pre_clamp_ = head_.forward(x);

    TensorT<T> mu = TensorT<T>::zeros_like(pre_clamp_);
    const T lo = static_cast<T>(kCoarseClampLo), hi = static_cast<T>(kCoarseClampHi);
    for (int i = 0; i < mu.numel(); ++i) {
      mu.v[i] = std::min(hi, std::max(lo, pre_clamp_.v[i]));
    }
    return mu;
  }

  /** Bottleneck features from the last forward: (bottleneck_channels, h', w'). */
  const TensorT<T>& fused_features() const { return f_fused_; }

  /**
   * gmu is d(loss)/d(mu); gf, if non-null, is an extra gradient flowing into
   * the bottleneck features. Returns (g_radar, g_sat).
   */
  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& gmu, const TensorT<T>* gf = nullptr) {
    const T lo = static_cast<T>(kCoarseClampLo), hi = static_cast<T>(kCoarseClampHi);
    TensorT<T> gpre = TensorT<T>::zeros_like(gmu);
    // gradient passes on the closed clamp interval
    for (int i = 0; i < gmu.numel(); ++i) {
      T p = pre_clamp_.v[i];
      gpre.v[i] = (p >= lo && p <= hi) ? gmu.v[i] : T(0);
    }
    TensorT<T> gx = head_.backward(gpre);

    gskip_.assign(cfg_.levels - 1, TensorT<T>());
    for (int l = 0; l <= cfg_.levels - 2; ++l) {
      for (int i = cfg_.blocks_per_level - 1; i >= 0; --i) gx = dec_blocks_[l][i].backward(gx);
      auto [gup, gskip] = split_channels(dec_fuse_[l].backward(gx), cfg_.c0 << l);
      gskip_[l] = std::move(gskip);
      gx = upsample_nearest2_backward(dec_up_[l].backward(gup));
    }

    if (gf != nullptr) {
      require(gf->numel() == gx.numel(), ErrorKind::ShapeMismatch,
              "vmu: bottleneck gradient shape mismatch");
      for (int i = 0; i < gx.numel(); ++i) gx.v[i] += gf->v[i];
    }

    for (int l = cfg_.levels - 1; l >= 0; --l) {
      if (l + 1 < cfg_.levels) {
        gx = down_[l].backward(gx);
        gx.add_(gskip_[l]);
      }
      for (int i = cfg_.blocks_per_level - 1; i >= 0; --i) gx = enc_blocks_[l][i].backward(gx);
    }
    TensorT<T> gfolded = enc_embed_.backward(gx);

    TensorT<T> ger, ges;
    const int tl = cfg_.n_in, hw = cfg_.h * cfg_.w;
    if (cfg_.ablate_msfusion) {
      const int ct = cfg_.c_radar + cfg_.c_sat;
      ger.reset({tl, cfg_.c_radar, cfg_.h, cfg_.w});
      ges.reset({tl, cfg_.c_sat, cfg_.h, cfg_.w});
      for (int t = 0; t < tl; ++t) {
        std::copy_n(gfolded.data() + static_cast<std::size_t>(t) * ct * hw,
                    static_cast<std::size_t>(cfg_.c_radar) * hw,
                    ger.data() + static_cast<std::size_t>(t) * cfg_.c_radar * hw);
        std::copy_n(gfolded.data() + (static_cast<std::size_t>(t) * ct + cfg_.c_radar) * hw,
                    static_cast<std::size_t>(cfg_.c_sat) * hw,
                    ges.data() + static_cast<std::size_t>(t) * cfg_.c_sat * hw);
      }
    } else {
      std::tie(ger, ges) = stab_.backward(gfolded);
    }

    TensorT<T> gradar_rows = embed_radar_.backward(to_row_grads(ger));
    TensorT<T> gsat_rows = embed_sat_.backward(to_row_grads(ges));
    return {rows_to_frames(gradar_rows, tl, 1, cfg_.h, cfg_.w),
            rows_to_frames(gsat_rows, tl, cfg_.sat_channels, cfg_.h, cfg_.w)};
  }

 private:
  // (T,C,H,W) -> (T*H*W, C) so a shared 1x1 map is one dense call
  static TensorT<T> to_rows(const TensorT<T>& x) {
    const int tl = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    TensorT<T> rows({tl * hw, c});
    for (int t = 0; t < tl; ++t) {
      for (int ch = 0; ch < c; ++ch) {
        const T* src = x.data() + (static_cast<std::size_t>(t) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) rows.v[(static_cast<std::size_t>(t) * hw + p) * c + ch] = src[p];
      }
    }
    return rows;
  }
  static TensorT<T> to_row_grads(const TensorT<T>& g) { return to_rows(g); }

  // (T*H*W, C) -> (T,C,H,W)
  static TensorT<T> from_rows(const TensorT<T>& rows, int tl, int c, int h, int w) {
    const int hw = h * w;
    TensorT<T> x({tl, c, h, w});
    for (int t = 0; t < tl; ++t) {
      for (int ch = 0; ch < c; ++ch) {
        T* dst = x.data() + (static_cast<std::size_t>(t) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) dst[p] = rows.v[(static_cast<std::size_t>(t) * hw + p) * c + ch];
      }
    }
    return x;
  }
  static TensorT<T> rows_to_frames(const TensorT<T>& rows, int tl, int c, int h, int w) {
    return from_rows(rows, tl, c, h, w);
  }

  VmuConfig cfg_;
  DenseT<T> embed_radar_, embed_sat_;
  StabT<T> stab_;
  Conv2dT<T> enc_embed_;
  std::vector<std::vector<VmssBlockT<T>>> enc_blocks_;
  std::vector<Conv2dT<T>> down_;
  std::vector<Conv2dT<T>> dec_up_, dec_fuse_;
  std::vector<std::vector<VmssBlockT<T>>> dec_blocks_;
  Conv2dT<T> head_;

  std::vector<TensorT<T>> skips_;
  std::vector<TensorT<T>> gskip_;
  TensorT<T> f_fused_, pre_clamp_;
};

}  // namespace vmudiff
