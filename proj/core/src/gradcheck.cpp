#include "vmudiff/gradcheck.hpp"

#include <cmath>

#include "vmudiff/stab.hpp"
#include "vmudiff/stdiff.hpp"
#include "vmudiff/vmu.hpp"

namespace vmudiff {

double l2_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorKind::ShapeMismatch, "gradcheck: vector size mismatch");
  double na = 0.0, nb = 0.0, nd = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    double d = a[i] - b[i];
    nd += d * d;
  }
  return std::sqrt(nd) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

double fd_check(ParamStoreT<double>& ps, const std::function<double(bool)>& eval, double h) {
  ps.zero_grads();
  eval(true);
  std::vector<double> ga;
  ga.reserve(ps.total_scalars());
  for (const auto& [name, p] : ps.entries()) ga.insert(ga.end(), p.g.begin(), p.g.end());

  std::vector<double> gfd;
  gfd.reserve(ga.size());
  for (auto& [name, p] : ps.entries()) {
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      double orig = p.v[i];
      p.v[i] = orig + h;
      double lp = eval(false);
      p.v[i] = orig - h;
      double lm = eval(false);
      p.v[i] = orig;
      gfd.push_back((lp - lm) / (2.0 * h));
    }
  }
  return l2_relative_error(ga, gfd);
}

namespace {

void fill_uniform(TensorT<double>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.v) v = rng.uniform(lo, hi);
}

double project(const TensorT<double>& y, const TensorT<double>& w) {
  require(y.numel() == w.numel(), ErrorKind::ShapeMismatch, "gradcheck: projection mismatch");
  double acc = 0.0;
  for (int i = 0; i < y.numel(); ++i) acc += y.v[i] * w.v[i];
  return acc;
}

/** Zero-initialized parameters carry no gradient signal; give them values. */
void liven_zero_params(ParamStoreT<double>& ps, Rng& rng, double scale) {
  for (auto& [name, p] : ps.entries()) {
    bool all_zero = true;
    for (double v : p.v) {
      if (v != 0.0) {
        all_zero = false;
        break;
      }
    }
    if (all_zero) {
      for (auto& v : p.v) v = rng.uniform(-scale, scale);
    }
  }
}

Ss2dConfig tiny_scan(int d_model, bool selective = true, bool exact = false) {
  Ss2dConfig c;
  c.d_model = d_model;
  c.n_state = 2;
  c.selective = selective;
  c.exact_zoh = exact;
  return c;
}

GradCheckCase ss2d_case(const std::string& name, bool selective, bool exact) {
  return {name, 1e-4, [selective, exact] {
            Rng rng(420 + (selective ? 1 : 0) + (exact ? 2 : 0));
            ParamStoreT<double> ps;
            Ss2dT<double> ss(ps, "ss", tiny_scan(3, selective, exact), rng);
            TensorT<double> x({3, 4, 4}), w({3, 4, 4});
            fill_uniform(x, rng);
            fill_uniform(w, rng);
            auto eval = [&](bool grad) {
              double l = project(ss.forward(x), w);
              if (grad) ss.backward(w);
              return l;
            };
            return fd_check(ps, eval);
          }};
}

}  // namespace

std::vector<GradCheckCase> standard_gradcheck_cases() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"dense", 1e-4, [] {
                     Rng rng(101);
                     ParamStoreT<double> ps;
                     DenseT<double> fc(ps, "fc", 5, 4, rng);
                     TensorT<double> x({3, 5}), w({3, 4});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(fc.forward(x), w);
                       if (grad) fc.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"mlp", 1e-4, [] {
                     Rng rng(102);
                     ParamStoreT<double> ps;
                     MlpT<double> mlp(ps, "mlp", 4, 3, 2, rng);
                     TensorT<double> x({4}), w({2});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(mlp.forward(x), w);
                       if (grad) mlp.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"conv", 1e-4, [] {
                     Rng rng(103);
                     ParamStoreT<double> ps;
                     Conv2dT<double> conv(ps, "conv", 2, 3, 3, 1, 1, rng);
                     TensorT<double> x({2, 6, 6}), w({3, 6, 6});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(conv.forward(x), w);
                       if (grad) conv.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"conv_stride2", 1e-4, [] {
                     Rng rng(104);
                     ParamStoreT<double> ps;
                     Conv2dT<double> conv(ps, "conv", 3, 2, 2, 2, 0, rng);
                     TensorT<double> x({3, 6, 6}), w({2, 3, 3});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(conv.forward(x), w);
                       if (grad) conv.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"depthwise_conv", 1e-4, [] {
                     Rng rng(105);
                     ParamStoreT<double> ps;
                     DepthwiseConv2dT<double> conv(ps, "dw", 3, 3, 1, 1, rng);
                     TensorT<double> x({3, 6, 6}), w({3, 6, 6});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(conv.forward(x), w);
                       if (grad) conv.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"layer_norm", 1e-4, [] {
                     Rng rng(106);
                     ParamStoreT<double> ps;
                     LayerNormChannelsT<double> ln(ps, "ln", 4);
                     TensorT<double> x({4, 3, 3}), w({4, 3, 3});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(ln.forward(x), w);
                       if (grad) ln.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"sab", 1e-4, [] {
                     Rng rng(107);
                     ParamStoreT<double> ps;
                     SabT<double> sab(ps, "sab", 3, 5, rng);
                     TensorT<double> x({2, 3, 8, 8}), w({2, 3, 8, 8});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(sab.forward(x), w);
                       if (grad) sab.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"ctab", 1e-4, [] {
                     Rng rng(108);
                     ParamStoreT<double> ps;
                     CtabT<double> ctab(ps, "ctab", 3, 4, 2, rng);
                     TensorT<double> x({3, 4, 6, 6}), w({3, 4, 6, 6});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(ctab.forward(x), w);
                       if (grad) ctab.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"selective_scan", 1e-4, [] {
                     const int L = 12, D = 3, N = 2;
                     Rng rng(109);
                     ParamStoreT<double> ps;
                     auto& u = ps.create("a_u", {L, D});
                     auto& ab = ps.create("b_abar", {L, D, N});
                     auto& bb = ps.create("c_bbar", {L, D, N});
                     auto& cp = ps.create("d_c", {L, N});
                     auto& dsk = ps.create("e_d", {1});
                     for (auto& v : u.v) v = rng.uniform(-1, 1);
                     for (auto& v : ab.v) v = rng.uniform(0.2, 0.9);
                     for (auto& v : bb.v) v = rng.uniform(-1, 1);
                     for (auto& v : cp.v) v = rng.uniform(-1, 1);
                     dsk.v[0] = 0.7;
                     TensorT<double> w({L, D});
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       std::vector<double> hbuf(static_cast<std::size_t>(L) * D * N);
                       std::vector<double> y(static_cast<std::size_t>(L) * D);
                       scan_forward<double>(L, D, N, u.v.data(), ab.v.data(), bb.v.data(), true,
                                            cp.v.data(), dsk.v[0], hbuf.data(), y.data());
                       double l = 0.0;
                       for (std::size_t i = 0; i < y.size(); ++i) l += y[i] * w.v[i];
                       if (grad) {
                         std::vector<double> gh(static_cast<std::size_t>(D) * N);
                         double gd = 0.0;
                         scan_backward<double>(L, D, N, u.v.data(), ab.v.data(), bb.v.data(), true,
                                               cp.v.data(), dsk.v[0], hbuf.data(), w.v.data(),
                                               u.g.data(), ab.g.data(), bb.g.data(), cp.g.data(),
                                               gd, gh.data());
                         dsk.g[0] += gd;
                       }
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"selective_scan_shared_b", 1e-4, [] {
                     const int L = 10, D = 3, N = 2;
                     Rng rng(110);
                     ParamStoreT<double> ps;
                     auto& u = ps.create("a_u", {L, D});
                     auto& ab = ps.create("b_abar", {L, D, N});
                     auto& bb = ps.create("c_bbar", {L, N});
                     auto& cp = ps.create("d_c", {L, N});
                     auto& dsk = ps.create("e_d", {1});
                     for (auto& v : u.v) v = rng.uniform(-1, 1);
                     for (auto& v : ab.v) v = rng.uniform(0.2, 0.9);
                     for (auto& v : bb.v) v = rng.uniform(-1, 1);
                     for (auto& v : cp.v) v = rng.uniform(-1, 1);
                     dsk.v[0] = -0.4;
                     TensorT<double> w({L, D});
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       std::vector<double> hbuf(static_cast<std::size_t>(L) * D * N);
                       std::vector<double> y(static_cast<std::size_t>(L) * D);
                       scan_forward<double>(L, D, N, u.v.data(), ab.v.data(), bb.v.data(), false,
                                            cp.v.data(), dsk.v[0], hbuf.data(), y.data());
                       double l = 0.0;
                       for (std::size_t i = 0; i < y.size(); ++i) l += y[i] * w.v[i];
                       if (grad) {
                         std::vector<double> gh(static_cast<std::size_t>(D) * N);
                         double gd = 0.0;
                         scan_backward<double>(L, D, N, u.v.data(), ab.v.data(), bb.v.data(), false,
                                               cp.v.data(), dsk.v[0], hbuf.data(), w.v.data(),
                                               u.g.data(), ab.g.data(), bb.g.data(), cp.g.data(),
                                               gd, gh.data());
                         dsk.g[0] += gd;
                       }
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back(ss2d_case("ss2d", true, false));
  cases.push_back(ss2d_case("ss2d_exact_zoh", true, true));
  cases.push_back(ss2d_case("ss2d_lti", false, false));

  cases.push_back({"vmss_block", 1e-4, [] {
                     Rng rng(111);
                     ParamStoreT<double> ps;
                     VmssBlockT<double> blk(ps, "blk", 3, tiny_scan(3), rng);
                     liven_zero_params(ps, rng, 0.3);
                     TensorT<double> x({3, 4, 4}), w({3, 4, 4});
                     fill_uniform(x, rng);
                     fill_uniform(w, rng);
                     auto eval = [&](bool grad) {
                       double l = project(blk.forward(x), w);
                       if (grad) blk.backward(w);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"cmss_block", 1e-4, [] {
                     Rng rng(112);
                     StdiffConfig dc;
                     dc.m = 2;
                     dc.h = 4;
                     dc.w = 4;
                     dc.width = 3;
                     dc.blocks = 1;
                     dc.ffn_mult = 2;
                     dc.temb_dim = 4;
                     dc.cond_dim = 5;
                     dc.mu_patch_channels = 2;
                     dc.f_channels = 3;
                     dc.f_h = 2;
                     dc.f_w = 2;
                     dc.t_diff = 10;
                     dc.scan = tiny_scan(3);
                     NoiseSchedule sched = NoiseSchedule::linear(dc.t_diff);
                     ParamStoreT<double> ps;
                     StdiffT<double> stdiff(ps, dc, sched, rng);
                     liven_zero_params(ps, rng, 0.3);
                     TensorT<double> z0({2, 4, 4}), mu({2, 4, 4}), f({3, 2, 2});
                     fill_uniform(z0, rng, -0.5, 0.5);
                     fill_uniform(mu, rng, 0.0, 1.0);
                     fill_uniform(f, rng);
                     auto eval = [&](bool grad) {
                       stdiff.build_condition(mu, f);
                       Rng draw(777);  // same (t, eps) draw on every call
                       double l = stdiff.refine_loss(z0, draw);
                       if (grad) stdiff.backward_refine(1.0);
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  cases.push_back({"full_coarse_model", 1e-3, [] {
                     Rng rng(113);
                     VmuConfig vc;
                     vc.n_in = 2;
                     vc.m_out = 2;
                     vc.h = 8;
                     vc.w = 8;
                     vc.c_radar = 2;
                     vc.c_sat = 2;
                     vc.c0 = 4;
                     vc.levels = 2;
                     vc.blocks_per_level = 1;
                     vc.scan = tiny_scan(0);
                     ParamStoreT<double> ps;
                     VmuNetT<double> net(ps, vc, rng);
                     // keep pre-clamp activations strictly inside the clamp
                     // interval so finite differences never straddle a kink
                     auto* hw = ps.find("vmu.head.w");
                     auto* hb = ps.find("vmu.head.b");
                     for (auto& v : hw->v) v = rng.uniform(-0.05, 0.05);
                     for (auto& v : hb->v) v = 0.6;
                     TensorT<double> radar({2, 1, 8, 8}), sat({2, 4, 8, 8}), target({2, 8, 8});
                     fill_uniform(radar, rng, 0.0, 1.0);
                     fill_uniform(sat, rng, 0.0, 1.0);
                     fill_uniform(target, rng, 0.0, 1.0);
                     auto eval = [&](bool grad) {
                       TensorT<double> mu = net.forward(radar, sat);
                       double l = mse_loss(mu, target);
                       if (grad) net.backward(mse_loss_grad(mu, target));
                       return l;
                     };
                     return fd_check(ps, eval);
                   }});

  return cases;
}

GradCheckCase corrupted_backward_control() {
  return {"corrupted_dense_control", 1e-4, [] {
            Rng rng(999);
            ParamStoreT<double> ps;
            DenseT<double> fc(ps, "fc", 4, 3, rng);
            TensorT<double> x({2, 4}), w({2, 3});
            fill_uniform(x, rng);
            fill_uniform(w, rng);
            auto eval = [&](bool grad) {
              double l = project(fc.forward(x), w);
              if (grad) {
                fc.backward(w);
                // deliberate corruption: the control must be caught
                for (auto& g : ps.find("fc.w")->g) g *= 1.5;
              }
              return l;
            };
            return fd_check(ps, eval);
          }};
}

std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCheckCase>& cases) {
  std::vector<GradCheckResult> results;
  results.reserve(cases.size());
  for (const auto& c : cases) {
    GradCheckResult r;
    r.name = c.name;
    r.tol = c.tol;
    r.rel_err = c.run();
    r.pass = std::isfinite(r.rel_err) && r.rel_err < c.tol;
    results.push_back(r);
  }
  return results;
}

}  // namespace vmudiff
