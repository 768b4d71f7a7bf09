#pragma once

#include <cmath>
#include <vector>

#include "vmudiff/nn.hpp"

namespace vmudiff {

/** Zero-order-hold conversion of continuous (a, b) at step delta. */
template <class T>
struct Discretized {
  T abar;
  T bbar;
};

/**
 * Simplified ZOH, the selective-SSM convention: abar = exp(delta*a),
 * bbar = delta*b. The exact variant divides through a instead.
 */
template <class T>
Discretized<T> discretize_zoh(T a, T b, T delta, bool exact = false) {
  require(delta > T(0), ErrorKind::Usage, "discretize_zoh: delta must be positive");
  T abar = std::exp(delta * a);
  if (!exact) return {abar, delta * b};
  // Exact ZOH: bbar = (exp(delta*a) - 1)/a * b; limit delta*b as a -> 0.
  if (std::abs(static_cast<double>(a)) < 1e-12) return {abar, delta * b};
  return {abar, (abar - T(1)) / a * b};
}

// ---------------------------------------------------------------------------
// Selective scan kernel.
//
// State recurrence per position k, channel d, state index i:
//   h[k,d,i] = abar[k,d,i] * h[k-1,d,i] + bbar[k,(d,)i] * u[k,d]
//   y[k,d]   = sum_i c[k,i] * h[k,d,i] + d_skip * u[k,d]
// bbar is (L,N) shared across channels in the simplified-ZOH path and
// (L,D,N) in the exact path (bbar_per_channel).

template <class T>
void scan_forward(int L, int D, int N, const T* u, const T* abar, const T* bbar,
                  bool bbar_per_channel, const T* cpos, T d_skip, T* h, T* y) {
  require(L >= 1, ErrorKind::Usage, "scan: length must be >= 1");
  for (int k = 0; k < L; ++k) {
    const T* ck = cpos + static_cast<std::size_t>(k) * N;
    const T* uk = u + static_cast<std::size_t>(k) * D;
    T* yk = y + static_cast<std::size_t>(k) * D;
    for (int d = 0; d < D; ++d) {
      std::size_t row = (static_cast<std::size_t>(k) * D + d) * N;
      const T* ab = abar + row;
      const T* bb = bbar_per_channel ? bbar + row : bbar + static_cast<std::size_t>(k) * N;
      const T* hp = k == 0 ? nullptr : h + (static_cast<std::size_t>(k - 1) * D + d) * N;
      T* hk = h + row;
      T ud = uk[d];
      T acc = T(0);
      if (k == 0) {
        for (int i = 0; i < N; ++i) {
          T hv = bb[i] * ud;
          hk[i] = hv;
          acc += ck[i] * hv;
        }
      } else {
        for (int i = 0; i < N; ++i) {
          T hv = ab[i] * hp[i] + bb[i] * ud;
          hk[i] = hv;
          acc += ck[i] * hv;
        }
      }
      yk[d] = acc + d_skip * ud;
    }
  }
}

/**
 * Reverse-time adjoint of scan_forward. All gradient outputs are
 * accumulated into, so callers can sum over directions; gh is caller-provided
 * scratch of size D*N and is overwritten.
 */
template <class T>
void scan_backward(int L, int D, int N, const T* u, const T* abar, const T* bbar,
                   bool bbar_per_channel, const T* cpos, T d_skip, const T* h, const T* gy,
                   T* gu, T* gabar, T* gbbar, T* gcpos, T& gd_skip, T* gh) {
  for (std::size_t i = 0; i < static_cast<std::size_t>(D) * N; ++i) gh[i] = T(0);
  for (int k = L - 1; k >= 0; --k) {
    const T* ck = cpos + static_cast<std::size_t>(k) * N;
    T* gck = gcpos + static_cast<std::size_t>(k) * N;
    const T* uk = u + static_cast<std::size_t>(k) * D;
    const T* gyk = gy + static_cast<std::size_t>(k) * D;
    T* guk = gu + static_cast<std::size_t>(k) * D;
    for (int d = 0; d < D; ++d) {
      std::size_t row = (static_cast<std::size_t>(k) * D + d) * N;
      const T* ab = abar + row;
      const T* bb = bbar_per_channel ? bbar + row : bbar + static_cast<std::size_t>(k) * N;
      T* gbb = bbar_per_channel ? gbbar + row : gbbar + static_cast<std::size_t>(k) * N;
      const T* hk = h + row;
      const T* hp = k == 0 ? nullptr : h + (static_cast<std::size_t>(k - 1) * D + d) * N;
      T* ghd = gh + static_cast<std::size_t>(d) * N;
      T go = gyk[d];
      T ud = uk[d];
      gd_skip += go * ud;
      T gud = d_skip * go;
      for (int i = 0; i < N; ++i) {
        T ghv = ghd[i] + go * ck[i];
        gck[i] += go * hk[i];
        if (k > 0) gabar[row + i] += ghv * hp[i];
        gbb[i] += ghv * ud;
        gud += ghv * bb[i];
        ghd[i] = ghv * ab[i];
      }
      guk[d] += gud;
    }
  }
}

enum class ScanDirection { RowFwd = 0, RowBwd = 1, ColFwd = 2, ColBwd = 3 };

/**
 * perm[j] = flat (row-major) index of the j-th element in scan order.
 * The four orders cover rows and columns in both senses.
 */
inline std::vector<int> scan_permutation(ScanDirection dir, int h, int w) {
  int L = h * w;
  std::vector<int> perm(static_cast<std::size_t>(L));
  switch (dir) {
    case ScanDirection::RowFwd:
      for (int j = 0; j < L; ++j) perm[static_cast<std::size_t>(j)] = j;
      break;
    case ScanDirection::RowBwd:
      for (int j = 0; j < L; ++j) perm[static_cast<std::size_t>(j)] = L - 1 - j;
      break;
    case ScanDirection::ColFwd:
      for (int j = 0; j < L; ++j) perm[static_cast<std::size_t>(j)] = (j % h) * w + j / h;
      break;
    case ScanDirection::ColBwd:
      for (int j = 0; j < L; ++j) {
        int jj = L - 1 - j;
        perm[static_cast<std::size_t>(j)] = (jj % h) * w + jj / h;
      }
      break;
  }
  return perm;
}

struct Ss2dConfig {
  int d_model = 0;
  int n_state = 8;
  bool selective = true;   // input-dependent b, c, delta; false = learned constants
  bool exact_zoh = false;  // exact ZOH bbar instead of delta*b
  double delta_init = 0.05;
};

/**
 * Four-direction selective scan over a (C,H,W) map: shared projections
 * produce per-position b, c, delta; each direction runs the recurrence with
 * its own state matrix A and skip gain; merged by inverse-permutation sum,
 * then layer norm over channels.
 */
template <class T>
class Ss2dT {
 public:
  Ss2dT() = default;
  Ss2dT(ParamStoreT<T>& ps, const std::string& name, const Ss2dConfig& cfg, Rng& rng)
      : cfg_(cfg), ln_(ps, name + ".ln", cfg.d_model) {
    const int d = cfg.d_model, n = cfg.n_state;
    require(d >= 1 && n >= 1, ErrorKind::Usage, "ss2d: widths must be >= 1");
    if (cfg.selective) {
      xproj_ = DenseT<T>(ps, name + ".xproj", d, 1 + 2 * n, rng);
    } else {
      b_const_ = &ps.create(name + ".b_const", {n});
      c_const_ = &ps.create(name + ".c_const", {n});
      init_param(*b_const_, InitKind::Uniform, n, rng);
      init_param(*c_const_, InitKind::Uniform, n, rng);
    }
    delta_bias_ = &ps.create(name + ".delta_bias", {1});
    delta_bias_->v[0] = static_cast<T>(std::log(std::exp(cfg.delta_init) - 1.0));
    for (int dir = 0; dir < 4; ++dir) {
      auto& al = ps.create(name + ".dir" + std::to_string(dir) + ".a_log", {d, n});
      for (int dd = 0; dd < d; ++dd) {
        for (int i = 0; i < n; ++i) {
          al.v[static_cast<std::size_t>(dd) * n + i] = static_cast<T>(std::log(i + 1.0));
        }
      }
      a_log_[dir] = &al;
      auto& ds = ps.create(name + ".dir" + std::to_string(dir) + ".d_skip", {1});
      ds.v[0] = T(1);
      d_skip_[dir] = &ds;
    }
  }

  TensorT<T> forward(const TensorT<T>& x) {
    const int D = cfg_.d_model, N = cfg_.n_state;
    require(x.rank == 3 && x.shape[0] == D, ErrorKind::ShapeMismatch,
            "ss2d: input must be (C, H, W)");
    h_ = x.shape[1];
    w_ = x.shape[2];
    const int L = h_ * w_;
    build_perms();

    // (C,H,W) -> (L,D) position-major layout for the projections and scans.
    u0_.reset({L, D});
    for (int d = 0; d < D; ++d) {
      const T* src = x.data() + static_cast<std::size_t>(d) * L;
      for (int j = 0; j < L; ++j) u0_.v[static_cast<std::size_t>(j) * D + d] = src[j];
    }

    delta_.assign(static_cast<std::size_t>(L), T(0));
    draw_.assign(static_cast<std::size_t>(L), T(0));
    b0_.assign(static_cast<std::size_t>(L) * N, T(0));
    c0_.assign(static_cast<std::size_t>(L) * N, T(0));
    if (cfg_.selective) {
      xp_ = xproj_.forward(u0_);
      for (int j = 0; j < L; ++j) {
        const T* row = xp_.data() + static_cast<std::size_t>(j) * (1 + 2 * N);
        T raw = row[0] + delta_bias_->v[0];
        draw_[static_cast<std::size_t>(j)] = raw;
        delta_[static_cast<std::size_t>(j)] = softplus_scalar(raw);
        for (int i = 0; i < N; ++i) {
          b0_[static_cast<std::size_t>(j) * N + i] = row[1 + i];
          c0_[static_cast<std::size_t>(j) * N + i] = row[1 + N + i];
        }
      }
    } else {
      T raw = delta_bias_->v[0];
      for (int j = 0; j < L; ++j) {
        draw_[static_cast<std::size_t>(j)] = raw;
        delta_[static_cast<std::size_t>(j)] = softplus_scalar(raw);
        for (int i = 0; i < N; ++i) {
          b0_[static_cast<std::size_t>(j) * N + i] = b_const_->v[i];
          c0_[static_cast<std::size_t>(j) * N + i] = c_const_->v[i];
        }
      }
    }

    merged_.reset({L, D});
    const bool per_channel = cfg_.exact_zoh;
    const std::size_t bbar_sz =
        per_channel ? static_cast<std::size_t>(L) * D * N : static_cast<std::size_t>(L) * N;
    for (int dir = 0; dir < 4; ++dir) {
      DirState& st = dirs_[dir];
      const std::vector<int>& perm = perms_[dir];
      st.u.assign(static_cast<std::size_t>(L) * D, T(0));
      st.dlt.assign(static_cast<std::size_t>(L), T(0));
      st.b.assign(static_cast<std::size_t>(L) * N, T(0));
      st.c.assign(static_cast<std::size_t>(L) * N, T(0));
      for (int j = 0; j < L; ++j) {
        int src = perm[static_cast<std::size_t>(j)];
        for (int d = 0; d < D; ++d) {
          st.u[static_cast<std::size_t>(j) * D + d] = u0_.v[static_cast<std::size_t>(src) * D + d];
        }
        st.dlt[static_cast<std::size_t>(j)] = delta_[static_cast<std::size_t>(src)];
        for (int i = 0; i < N; ++i) {
          st.b[static_cast<std::size_t>(j) * N + i] = b0_[static_cast<std::size_t>(src) * N + i];
          st.c[static_cast<std::size_t>(j) * N + i] = c0_[static_cast<std::size_t>(src) * N + i];
        }
      }

      // abar = exp(delta * a) with a = -exp(a_log), filled as one flat
      // sweep so the compiler can vectorize the exp.
      st.a.assign(static_cast<std::size_t>(D) * N, T(0));
      for (std::size_t e = 0; e < st.a.size(); ++e) {
        st.a[e] = -std::exp(a_log_[dir]->v[e]);
      }
      st.abar.assign(static_cast<std::size_t>(L) * D * N, T(0));
      for (int j = 0; j < L; ++j) {
        T dl = st.dlt[static_cast<std::size_t>(j)];
        T* dst = st.abar.data() + static_cast<std::size_t>(j) * D * N;
        const T* av = st.a.data();
        for (std::size_t e = 0; e < static_cast<std::size_t>(D) * N; ++e) {
          dst[e] = std::exp(dl * av[e]);
        }
      }
      st.bbar.assign(bbar_sz, T(0));
      if (!per_channel) {
        for (int j = 0; j < L; ++j) {
          T dl = st.dlt[static_cast<std::size_t>(j)];
          for (int i = 0; i < N; ++i) {
            st.bbar[static_cast<std::size_t>(j) * N + i] =
                dl * st.b[static_cast<std::size_t>(j) * N + i];
          }
        }
      } else {
        for (int j = 0; j < L; ++j) {
          for (int d = 0; d < D; ++d) {
            std::size_t row = (static_cast<std::size_t>(j) * D + d) * N;
            for (int i = 0; i < N; ++i) {
              T a = st.a[static_cast<std::size_t>(d) * N + i];
              st.bbar[row + i] =
                  (st.abar[row + i] - T(1)) / a * st.b[static_cast<std::size_t>(j) * N + i];
            }
          }
        }
      }

      st.h.assign(static_cast<std::size_t>(L) * D * N, T(0));
      st.y.assign(static_cast<std::size_t>(L) * D, T(0));
      scan_forward(L, D, N, st.u.data(), st.abar.data(), st.bbar.data(), per_channel,
                   st.c.data(), d_skip_[dir]->v[0], st.h.data(), st.y.data());
    }

    // Merge: undo each permutation and sum, in fixed direction order.
    merged_.fill(T(0));
    for (int dir = 0; dir < 4; ++dir) {
      const std::vector<int>& perm = perms_[dir];
      const DirState& st = dirs_[dir];
      for (int j = 0; j < L; ++j) {
        int dst = perm[static_cast<std::size_t>(j)];
        T* out = merged_.data() + static_cast<std::size_t>(dst) * D;
        const T* src = st.y.data() + static_cast<std::size_t>(j) * D;
        for (int d = 0; d < D; ++d) out[d] += src[d];
      }
    }

    // Back to (C,H,W) and normalize across channels.
    TensorT<T> pre({D, h_, w_});
    const int L2 = L;
    for (int d = 0; d < D; ++d) {
      T* dst = pre.data() + static_cast<std::size_t>(d) * L2;
      for (int j = 0; j < L2; ++j) dst[j] = merged_.v[static_cast<std::size_t>(j) * D + d];
    }
    return ln_.forward(pre);
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const int D = cfg_.d_model, N = cfg_.n_state;
    const int L = h_ * w_;
    TensorT<T> gpre = ln_.backward(gy);

    // (C,H,W) grad -> (L,D) merged grad.
    gmerged_.reset({L, D});
    for (int d = 0; d < D; ++d) {
      const T* src = gpre.data() + static_cast<std::size_t>(d) * L;
      for (int j = 0; j < L; ++j) gmerged_.v[static_cast<std::size_t>(j) * D + d] = src[j];
    }

    gu0_.assign(static_cast<std::size_t>(L) * D, T(0));
    gdelta_.assign(static_cast<std::size_t>(L), T(0));
    gb0_.assign(static_cast<std::size_t>(L) * N, T(0));
    gc0_.assign(static_cast<std::size_t>(L) * N, T(0));
    const bool per_channel = cfg_.exact_zoh;

    std::vector<T> gy_dir(static_cast<std::size_t>(L) * D);
    std::vector<T> gu_dir(static_cast<std::size_t>(L) * D);
    std::vector<T> gab(static_cast<std::size_t>(L) * D * N);
    std::vector<T> gbb(per_channel ? static_cast<std::size_t>(L) * D * N
                                   : static_cast<std::size_t>(L) * N);
    std::vector<T> gc_dir(static_cast<std::size_t>(L) * N);
    std::vector<T> gh_scratch(static_cast<std::size_t>(D) * N);

    for (int dir = 0; dir < 4; ++dir) {
      DirState& st = dirs_[dir];
      const std::vector<int>& perm = perms_[dir];
      for (int j = 0; j < L; ++j) {
        int src = perm[static_cast<std::size_t>(j)];
        const T* s = gmerged_.data() + static_cast<std::size_t>(src) * D;
        T* dst = gy_dir.data() + static_cast<std::size_t>(j) * D;
        for (int d = 0; d < D; ++d) dst[d] = s[d];
      }
      std::fill(gu_dir.begin(), gu_dir.end(), T(0));
      std::fill(gab.begin(), gab.end(), T(0));
      std::fill(gbb.begin(), gbb.end(), T(0));
      std::fill(gc_dir.begin(), gc_dir.end(), T(0));
      T gds = T(0);
      scan_backward(L, D, N, st.u.data(), st.abar.data(), st.bbar.data(), per_channel,
                    st.c.data(), d_skip_[dir]->v[0], st.h.data(), gy_dir.data(), gu_dir.data(),
                    gab.data(), gbb.data(), gc_dir.data(), gds, gh_scratch.data());
      d_skip_[dir]->g[0] += gds;

      // Chain abar = exp(delta*a) and bbar back to delta, b, a_log.
      T* ga_log = a_log_[dir]->g.data();
      for (int j = 0; j < L; ++j) {
        int src = perm[static_cast<std::size_t>(j)];
        T dl = st.dlt[static_cast<std::size_t>(j)];
        T gdl = T(0);
        const std::size_t base = static_cast<std::size_t>(j) * D * N;
        for (int d = 0; d < D; ++d) {
          for (int i = 0; i < N; ++i) {
            std::size_t e = base + static_cast<std::size_t>(d) * N + i;
            std::size_t ai = static_cast<std::size_t>(d) * N + i;
            T a = st.a[ai];
            T ab = st.abar[e];
            T gab_e = gab[e];
            if (per_channel) {
              // bbar = (abar - 1)/a * b
              T b = st.b[static_cast<std::size_t>(j) * N + i];
              T gbb_e = gbb[e];
              gdl += gab_e * ab * a + gbb_e * ab * b;
              T ga = gab_e * ab * dl + gbb_e * b * (dl * ab * a - (ab - T(1))) / (a * a);
              ga_log[ai] += ga * a;  // da/d(a_log) = a
              gb0_[static_cast<std::size_t>(src) * N + i] += gbb_e * (ab - T(1)) / a;
            } else {
              gdl += gab_e * ab * a;
              ga_log[ai] += gab_e * ab * dl * a;
            }
          }
        }
        if (!per_channel) {
          for (int i = 0; i < N; ++i) {
            T gbb_e = gbb[static_cast<std::size_t>(j) * N + i];
            gdl += gbb_e * st.b[static_cast<std::size_t>(j) * N + i];
            gb0_[static_cast<std::size_t>(src) * N + i] += gbb_e * dl;
          }
        }
        gdelta_[static_cast<std::size_t>(src)] += gdl;
        for (int i = 0; i < N; ++i) {
          gc0_[static_cast<std::size_t>(src) * N + i] +=
              gc_dir[static_cast<std::size_t>(j) * N + i];
        }
        T* gu0_row = gu0_.data() + static_cast<std::size_t>(src) * D;
        const T* gu_row = gu_dir.data() + static_cast<std::size_t>(j) * D;
        for (int d = 0; d < D; ++d) gu0_row[d] += gu_row[d];
      }
    }

    // delta = softplus(draw); back through the projection or the constants.
    if (cfg_.selective) {
      TensorT<T> gxp = TensorT<T>::zeros_like(xp_);
      for (int j = 0; j < L; ++j) {
        T gsp = gdelta_[static_cast<std::size_t>(j)] *
                sigmoid_scalar(draw_[static_cast<std::size_t>(j)]);
        T* row = gxp.data() + static_cast<std::size_t>(j) * (1 + 2 * N);
        row[0] = gsp;
        delta_bias_->g[0] += gsp;
        for (int i = 0; i < N; ++i) {
          row[1 + i] = gb0_[static_cast<std::size_t>(j) * N + i];
          row[1 + N + i] = gc0_[static_cast<std::size_t>(j) * N + i];
        }
      }
      TensorT<T> gu_proj = xproj_.backward(gxp);
      for (std::size_t e = 0; e < gu0_.size(); ++e) gu0_[e] += gu_proj.v[e];
    } else {
      for (int j = 0; j < L; ++j) {
        T gsp = gdelta_[static_cast<std::size_t>(j)] *
                sigmoid_scalar(draw_[static_cast<std::size_t>(j)]);
        delta_bias_->g[0] += gsp;
        for (int i = 0; i < N; ++i) {
          b_const_->g[i] += gb0_[static_cast<std::size_t>(j) * N + i];
          c_const_->g[i] += gc0_[static_cast<std::size_t>(j) * N + i];
        }
      }
    }

    // (L,D) -> (C,H,W).
    TensorT<T> gx({D, h_, w_});
    for (int d = 0; d < D; ++d) {
      T* dst = gx.data() + static_cast<std::size_t>(d) * L;
      for (int j = 0; j < L; ++j) dst[j] = gu0_[static_cast<std::size_t>(j) * D + d];
    }
    return gx;
  }

 private:
  struct DirState {
    std::vector<T> u, dlt, b, c, a, abar, bbar, h, y;
  };

  void build_perms() {
    if (perm_h_ == h_ && perm_w_ == w_) return;
    for (int dir = 0; dir < 4; ++dir) {
      perms_[dir] = scan_permutation(static_cast<ScanDirection>(dir), h_, w_);
    }
    perm_h_ = h_;
    perm_w_ = w_;
  }

  Ss2dConfig cfg_;
  DenseT<T> xproj_;
  ParamT<T>* b_const_ = nullptr;
  ParamT<T>* c_const_ = nullptr;
  ParamT<T>* delta_bias_ = nullptr;
  ParamT<T>* a_log_[4] = {nullptr, nullptr, nullptr, nullptr};
  ParamT<T>* d_skip_[4] = {nullptr, nullptr, nullptr, nullptr};
  LayerNormChannelsT<T> ln_;

  int h_ = 0, w_ = 0;
  int perm_h_ = -1, perm_w_ = -1;
  std::vector<int> perms_[4];

  TensorT<T> u0_, xp_, merged_, gmerged_;
  std::vector<T> delta_, draw_, b0_, c0_;
  std::vector<T> gu0_, gdelta_, gb0_, gc0_;
  DirState dirs_[4];
};

/**
 * Gated block: one embedding feeds a conv+scan pathway and a plain SiLU
 * gate; their product is projected and added back to the input. No
 * positional embeddings, no MLP stage. Zero-initialized projection makes
 * the block an exact identity at init.
 */
template <class T>
class VmssBlockT {
 public:
  VmssBlockT() = default;
  VmssBlockT(ParamStoreT<T>& ps, const std::string& name, int c, const Ss2dConfig& scan_cfg,
             Rng& rng)
      : embed_(ps, name + ".embed", c, c, 1, 1, 0, rng),
        dw_(ps, name + ".dw", c, 3, 1, 1, rng),
        ss2d_(ps, name + ".ss2d", with_width(scan_cfg, c), rng),
        out_proj_(ps, name + ".out", c, c, 1, 1, 0, rng, InitKind::Zero) {}

  TensorT<T> forward(const TensorT<T>& x) {
    z_ = embed_.forward(x);
    dw_out_ = dw_.forward(z_);
    p1_ = ss2d_.forward(silu_forward(dw_out_));
    p2_ = silu_forward(z_);
    TensorT<T> gated = TensorT<T>::zeros_like(p1_);
    for (int i = 0; i < gated.numel(); ++i) gated.v[i] = p1_.v[i] * p2_.v[i];
    TensorT<T> y = out_proj_.forward(gated);
    y.add_(x);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    TensorT<T> ggated = out_proj_.backward(gy);
    TensorT<T> gp1 = TensorT<T>::zeros_like(ggated);
    TensorT<T> gp2 = TensorT<T>::zeros_like(ggated);
    for (int i = 0; i < ggated.numel(); ++i) {
      gp1.v[i] = ggated.v[i] * p2_.v[i];
      gp2.v[i] = ggated.v[i] * p1_.v[i];
    }
    TensorT<T> gz = silu_backward(z_, gp2);
    TensorT<T> gsilu_dw = ss2d_.backward(gp1);
    TensorT<T> gdw_out = silu_backward(dw_out_, gsilu_dw);
    gz.add_(dw_.backward(gdw_out));
    TensorT<T> gx = embed_.backward(gz);
    gx.add_(gy);  // residual
    return gx;
  }

 private:
  static Ss2dConfig with_width(Ss2dConfig cfg, int c) {
    cfg.d_model = c;
    return cfg;
  }

  Conv2dT<T> embed_;
  DepthwiseConv2dT<T> dw_;
  Ss2dT<T> ss2d_;
  Conv2dT<T> out_proj_;
  TensorT<T> z_, dw_out_, p1_, p2_;
};

/** One row of the scan timing table. */
struct ScanBenchRow {
  int length = 0;
  double nanos = 0.0;
  double nanos_per_element = 0.0;
};

/**
 * Times the float scan kernel at each length (fixed D and N), reporting
 * the best of `reps` runs to suppress scheduler noise.
 */
std::vector<ScanBenchRow> scan_benchmark(const std::vector<int>& lengths, int d = 16, int n = 8,
                                         int reps = 20);

}  // namespace vmudiff
