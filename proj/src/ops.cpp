// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "hanet/errors.hpp"
#include "hanet/log.hpp"

namespace hanet::ops {

using detail::make_result;
using detail::TensorImpl;

namespace {

using Impl = std::shared_ptr<TensorImpl>;

[[noreturn]] void reject(const std::string& msg) { throw ValidationError(msg); }

std::size_t idx(const Shape& s, std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  return static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w);
}

// Output columns ow for which ow*stride + offset lies in [0, in_w).
void valid_range(std::int64_t out_w, std::int64_t in_w, int stride, std::int64_t offset,
                 std::int64_t& lo, std::int64_t& hi) {
  lo = 0;
  while (lo < out_w && lo * stride + offset < 0) ++lo;
  hi = out_w;
  while (hi > lo && (hi - 1) * stride + offset >= in_w) --hi;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.c != is.c) {
    reject(fmt::format("conv2d: input has {} channels but weight {} expects {}", is.c, ws.str(),
                       ws.c));
  }
  if (ws.h != ws.w || ws.h % 2 == 0) reject("conv2d: kernel must be square and odd, got " + ws.str());
  if (stride < 1) reject(fmt::format("conv2d: stride must be >= 1, got {}", stride));
  if (padding < 0) reject(fmt::format("conv2d: padding must be >= 0, got {}", padding));
  if (bias.defined() && bias.numel() != ws.n) {
    reject(fmt::format("conv2d: bias length {} does not match {} output channels", bias.numel(),
                       ws.n));
  }
  const std::int64_t r = ws.h;
  const std::int64_t oh_n = (is.h + 2 * padding - r) / stride + 1;
  const std::int64_t ow_n = (is.w + 2 * padding - r) / stride + 1;
  if (is.h + 2 * padding < r || is.w + 2 * padding < r) {
    reject(fmt::format("conv2d: kernel {} larger than padded input {}", r, is.str()));
  }
  const Shape os{is.n, ws.n, oh_n, ow_n};
  const std::int64_t cin = is.c;
  const std::int64_t cout = ws.n;

  std::vector<double> out(static_cast<std::size_t>(os.numel()), 0.0);
  const double* x = input.data().data();
  const double* wt = weight.data().data();
  const double* bs = bias.defined() ? bias.data().data() : nullptr;

  // Column ranges per kernel offset, shared by forward and backward.
  std::vector<std::int64_t> col_lo(static_cast<std::size_t>(r)), col_hi(static_cast<std::size_t>(r));
  for (std::int64_t k = 0; k < r; ++k) {
    valid_range(ow_n, is.w, stride, k - padding, col_lo[static_cast<std::size_t>(k)],
                col_hi[static_cast<std::size_t>(k)]);
  }

  for (std::int64_t n = 0; n < is.n; ++n) {
    for (std::int64_t co = 0; co < cout; ++co) {
      double* op = out.data() + idx(os, n, co, 0, 0);
      if (bs) std::fill(op, op + os.plane(), bs[co]);
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const double* xp = x + idx(is, n, ci, 0, 0);
        const double* wp = wt + idx(ws, co, ci, 0, 0);
        for (std::int64_t kh = 0; kh < r; ++kh) {
          for (std::int64_t kw = 0; kw < r; ++kw) {
            const double wv = wp[kh * r + kw];
            const std::int64_t lo = col_lo[static_cast<std::size_t>(kw)];
            const std::int64_t hi = col_hi[static_cast<std::size_t>(kw)];
            for (std::int64_t oh = 0; oh < oh_n; ++oh) {
              const std::int64_t ih = oh * stride + kh - padding;
              if (ih < 0 || ih >= is.h) continue;
              double* orow = op + oh * ow_n;
              const double* irow = xp + ih * is.w + kw - padding;
              if (stride == 1) {
                for (std::int64_t ow = lo; ow < hi; ++ow) orow[ow] += wv * irow[ow];
              } else {
                for (std::int64_t ow = lo; ow < hi; ++ow) orow[ow] += wv * irow[ow * stride];
              }
            }
          }
        }
      }
    }
  }

  Impl xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_result(
      os, std::move(out), "conv2d", {xi, wi, bi},
      [xi, wi, is, ws, os, r, stride, padding, col_lo, col_hi](std::span<const double> g,
                                                               std::vector<std::vector<double>>& gin) {
        const double* x = xi->data.data();
        const double* wt = wi->data.data();
        auto& gx = gin[0];
        auto& gw = gin[1];
        auto& gb = gin[2];
        for (std::int64_t n = 0; n < os.n; ++n) {
          for (std::int64_t co = 0; co < os.c; ++co) {
            const double* gp = g.data() + idx(os, n, co, 0, 0);
            if (!gb.empty()) {
              double s = 0.0;
              for (std::int64_t p = 0; p < os.plane(); ++p) s += gp[p];
              gb[static_cast<std::size_t>(co)] += s;
            }
            for (std::int64_t ci = 0; ci < is.c; ++ci) {
              const double* xp = x + idx(is, n, ci, 0, 0);
              const std::size_t wbase = idx(ws, co, ci, 0, 0);
              for (std::int64_t kh = 0; kh < r; ++kh) {
                for (std::int64_t kw = 0; kw < r; ++kw) {
                  const std::int64_t lo = col_lo[static_cast<std::size_t>(kw)];
                  const std::int64_t hi = col_hi[static_cast<std::size_t>(kw)];
                  const double wv = wt[wbase + static_cast<std::size_t>(kh * r + kw)];
                  double acc = 0.0;
                  for (std::int64_t oh = 0; oh < os.h; ++oh) {
                    const std::int64_t ih = oh * stride + kh - padding;
                    if (ih < 0 || ih >= is.h) continue;
                    const double* grow = gp + oh * os.w;
                    const double* irow = xp + ih * is.w + kw - padding;
                    if (!gw.empty()) {
                      if (stride == 1) {
                        for (std::int64_t ow = lo; ow < hi; ++ow) acc += grow[ow] * irow[ow];
                      } else {
                        for (std::int64_t ow = lo; ow < hi; ++ow) acc += grow[ow] * irow[ow * stride];
                      }
                    }
                    if (!gx.empty()) {
                      double* gxrow = gx.data() + idx(is, n, ci, ih, 0) + kw - padding;
                      if (stride == 1) {
                        for (std::int64_t ow = lo; ow < hi; ++ow) gxrow[ow] += wv * grow[ow];
                      } else {
                        for (std::int64_t ow = lo; ow < hi; ++ow) gxrow[ow * stride] += wv * grow[ow];
                      }
                    }
                  }
                  if (!gw.empty()) gw[wbase + static_cast<std::size_t>(kh * r + kw)] += acc;
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// batchnorm2d

BatchNormState::BatchNormState(std::int64_t channels, double momentum_, double eps_)
    : running_mean(static_cast<std::size_t>(channels), 0.0),
      running_var(static_cast<std::size_t>(channels), 1.0),
      momentum(momentum_),
      eps(eps_) {}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode) {
  const Shape s = input.shape();
  if (gamma.numel() != s.c || beta.numel() != s.c) {
    reject(fmt::format("batchnorm2d: gamma/beta lengths {}/{} do not match {} channels",
                       gamma.numel(), beta.numel(), s.c));
  }
  if (static_cast<std::int64_t>(state.running_mean.size()) != s.c ||
      static_cast<std::int64_t>(state.running_var.size()) != s.c) {
    reject(fmt::format("batchnorm2d: running statistics sized {} for {} channels",
                       state.running_mean.size(), s.c));
  }
  if (!(state.eps > 0.0)) reject("batchnorm2d: eps must be > 0");

  const std::int64_t count = s.n * s.plane();
  const std::size_t cs = static_cast<std::size_t>(s.c);
  std::vector<double> mean(cs), invstd(cs);
  const double* x = input.data().data();

  if (mode == Mode::kTrain) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      double m = 0.0;
      for (std::int64_t n = 0; n < s.n; ++n) {
        const double* p = x + idx(s, n, c, 0, 0);
        for (std::int64_t i = 0; i < s.plane(); ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::int64_t n = 0; n < s.n; ++n) {
        const double* p = x + idx(s, n, c, 0, 0);
        for (std::int64_t i = 0; i < s.plane(); ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double biased = v / static_cast<double>(count);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : biased;
      mean[static_cast<std::size_t>(c)] = m;
      invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(biased + state.eps);
      auto& rm = state.running_mean[static_cast<std::size_t>(c)];
      auto& rv = state.running_var[static_cast<std::size_t>(c)];
      rm = (1.0 - state.momentum) * rm + state.momentum * m;
      rv = (1.0 - state.momentum) * rv + state.momentum * unbiased;
    }
    ++state.updates;
  } else {
    if (state.updates == 0 && !state.warned_uninitialized) {
      logger()->warn("batchnorm2d: eval mode before any running-stat update; using mean 0, var 1");
      state.warned_uninitialized = true;
    }
    for (std::size_t c = 0; c < cs; ++c) {
      mean[c] = state.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  std::vector<double> xhat(static_cast<std::size_t>(s.numel()));
  std::vector<double> out(xhat.size());
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const std::size_t base = idx(s, n, c, 0, 0);
      const std::size_t ci = static_cast<std::size_t>(c);
      for (std::int64_t i = 0; i < s.plane(); ++i) {
        const std::size_t k = base + static_cast<std::size_t>(i);
        xhat[k] = (x[k] - mean[ci]) * invstd[ci];
        out[k] = gm[c] * xhat[k] + bt[c];
      }
    }
  }

  Impl xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  const bool train = mode == Mode::kTrain;
  return make_result(
      s, std::move(out), "batchnorm2d", {xi, gi, bi},
      [s, gi, train, count, xhat = std::move(xhat), invstd = std::move(invstd)](
          std::span<const double> g, std::vector<std::vector<double>>& gin) {
        const double* gm = gi->data.data();
        auto& gx = gin[0];
        auto& gg = gin[1];
        auto& gbeta = gin[2];
        for (std::int64_t c = 0; c < s.c; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t n = 0; n < s.n; ++n) {
            const std::size_t base = idx(s, n, c, 0, 0);
            for (std::int64_t i = 0; i < s.plane(); ++i) {
              const std::size_t k = base + static_cast<std::size_t>(i);
              sum_g += g[k];
              sum_gx += g[k] * xhat[k];
            }
          }
          if (!gg.empty()) gg[static_cast<std::size_t>(c)] += sum_gx;
          if (!gbeta.empty()) gbeta[static_cast<std::size_t>(c)] += sum_g;
          if (gx.empty()) continue;
          const double scale = gm[c] * invstd[static_cast<std::size_t>(c)];
          const double inv_count = 1.0 / static_cast<double>(count);
          for (std::int64_t n = 0; n < s.n; ++n) {
            const std::size_t base = idx(s, n, c, 0, 0);
            for (std::int64_t i = 0; i < s.plane(); ++i) {
              const std::size_t k = base + static_cast<std::size_t>(i);
              if (train) {
                gx[k] += scale * (g[k] - inv_count * sum_g - xhat[k] * inv_count * sum_gx);
              } else {
                gx[k] += scale * g[k];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// pooling

Tensor max_pool2d(const Tensor& input, int kernel, int stride) {
  const Shape is = input.shape();
  if (kernel < 1 || stride < 1) reject("max_pool2d: kernel and stride must be >= 1");
  if (is.h < kernel || is.w < kernel) {
    reject(fmt::format("max_pool2d: input {} smaller than kernel {}", is.str(), kernel));
  }
  const Shape os{is.n, is.c, (is.h - kernel) / stride + 1, (is.w - kernel) / stride + 1};
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  std::vector<std::size_t> arg(out.size());
  const double* x = input.data().data();
  for (std::int64_t n = 0; n < os.n; ++n) {
    for (std::int64_t c = 0; c < os.c; ++c) {
      for (std::int64_t oh = 0; oh < os.h; ++oh) {
        for (std::int64_t ow = 0; ow < os.w; ++ow) {
          std::size_t best = idx(is, n, c, oh * stride, ow * stride);
          for (int kh = 0; kh < kernel; ++kh) {
            for (int kw = 0; kw < kernel; ++kw) {
              const std::size_t k = idx(is, n, c, oh * stride + kh, ow * stride + kw);
              if (x[k] > x[best]) best = k;
            }
          }
          const std::size_t o = idx(os, n, c, oh, ow);
          out[o] = x[best];
          arg[o] = best;
        }
      }
    }
  }
  return make_result(os, std::move(out), "max_pool2d", {input.impl()},
                     [arg = std::move(arg)](std::span<const double> g,
                                            std::vector<std::vector<double>>& gin) {
                       for (std::size_t o = 0; o < arg.size(); ++o) gin[0][arg[o]] += g[o];
                     });
}

Tensor adaptive_avg_pool(const Tensor& input, int k) {
  const Shape is = input.shape();
  if (k < 1 || k > is.h || k > is.w) {
    reject(fmt::format("adaptive_avg_pool: K={} must satisfy 1 <= K <= min(H,W) for input {}", k,
                       is.str()));
  }
  const Shape os{is.n, is.c, k, k};
  auto bounds = [k](std::int64_t i, std::int64_t len, std::int64_t& lo, std::int64_t& hi) {
    lo = (i * len) / k;
    hi = ((i + 1) * len + k - 1) / k;
  };
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  const double* x = input.data().data();
  for (std::int64_t n = 0; n < is.n; ++n) {
    for (std::int64_t c = 0; c < is.c; ++c) {
      for (std::int64_t i = 0; i < k; ++i) {
        std::int64_t r0, r1;
        bounds(i, is.h, r0, r1);
        for (std::int64_t j = 0; j < k; ++j) {
          std::int64_t c0, c1;
          bounds(j, is.w, c0, c1);
          double s = 0.0;
          for (std::int64_t r = r0; r < r1; ++r) {
            for (std::int64_t q = c0; q < c1; ++q) s += x[idx(is, n, c, r, q)];
          }
          out[idx(os, n, c, i, j)] = s / static_cast<double>((r1 - r0) * (c1 - c0));
        }
      }
    }
  }
  return make_result(os, std::move(out), "adaptive_avg_pool", {input.impl()},
                     [is, os, k, bounds](std::span<const double> g,
                                         std::vector<std::vector<double>>& gin) {
                       auto& gx = gin[0];
                       for (std::int64_t n = 0; n < is.n; ++n) {
                         for (std::int64_t c = 0; c < is.c; ++c) {
                           for (std::int64_t i = 0; i < k; ++i) {
                             std::int64_t r0, r1;
                             bounds(i, is.h, r0, r1);
                             for (std::int64_t j = 0; j < k; ++j) {
                               std::int64_t c0, c1;
                               bounds(j, is.w, c0, c1);
                               const double share = g[idx(os, n, c, i, j)] /
                                                    static_cast<double>((r1 - r0) * (c1 - c0));
                               for (std::int64_t r = r0; r < r1; ++r) {
                                 for (std::int64_t q = c0; q < c1; ++q) gx[idx(is, n, c, r, q)] += share;
                               }
                             }
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// bilinear_resize

namespace {

struct Tap {
  std::int64_t i0;
  std::int64_t i1;
  double frac;
};

std::vector<Tap> bilinear_taps(std::int64_t in, std::int64_t out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(d)] = Tap{i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1) {
    reject(fmt::format("bilinear_resize: target {}x{} must be >= 1", out_h, out_w));
  }
  const Shape is = input.shape();
  const Shape os{is.n, is.c, out_h, out_w};
  const auto ty = bilinear_taps(is.h, out_h);
  const auto tx = bilinear_taps(is.w, out_w);
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  const double* x = input.data().data();
  for (std::int64_t n = 0; n < is.n; ++n) {
    for (std::int64_t c = 0; c < is.c; ++c) {
      const double* p = x + idx(is, n, c, 0, 0);
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[static_cast<std::size_t>(oy)];
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[static_cast<std::size_t>(ox)];
          const double v00 = p[a.i0 * is.w + b.i0], v01 = p[a.i0 * is.w + b.i1];
          const double v10 = p[a.i1 * is.w + b.i0], v11 = p[a.i1 * is.w + b.i1];
          // Lerp form keeps constants and identity resampling exact.
          const double top = v00 + b.frac * (v01 - v00);
          const double bot = v10 + b.frac * (v11 - v10);
          out[idx(os, n, c, oy, ox)] = top + a.frac * (bot - top);
        }
      }
    }
  }
  return make_result(os, std::move(out), "bilinear_resize", {input.impl()},
                     [is, os, ty, tx](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       auto& gx = gin[0];
                       for (std::int64_t n = 0; n < is.n; ++n) {
                         for (std::int64_t c = 0; c < is.c; ++c) {
                           double* p = gx.data() + idx(is, n, c, 0, 0);
                           for (std::int64_t oy = 0; oy < os.h; ++oy) {
                             const Tap& a = ty[static_cast<std::size_t>(oy)];
                             for (std::int64_t ox = 0; ox < os.w; ++ox) {
                               const Tap& b = tx[static_cast<std::size_t>(ox)];
                               const double go = g[idx(os, n, c, oy, ox)];
                               p[a.i0 * is.w + b.i0] += go * (1.0 - a.frac) * (1.0 - b.frac);
                               p[a.i0 * is.w + b.i1] += go * (1.0 - a.frac) * b.frac;
                               p[a.i1 * is.w + b.i0] += go * a.frac * (1.0 - b.frac);
                               p[a.i1 * is.w + b.i1] += go * a.frac * b.frac;
                             }
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// fully_connected

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const Shape is = input.shape();
  const Shape ws = weight.shape();
  const std::int64_t f = is.c * is.h * is.w;
  if (ws.c * ws.h * ws.w != f) {
    reject(fmt::format("fully_connected: input features {} (shape {}) do not match weight {}", f,
                       is.str(), ws.str()));
  }
  const std::int64_t fo = ws.n;
  if (bias.defined() && bias.numel() != fo) {
    reject(fmt::format("fully_connected: bias length {} does not match {} outputs", bias.numel(), fo));
  }
  const Shape os{is.n, fo, 1, 1};
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  const double* x = input.data().data();
  const double* w = weight.data().data();
  const double* b = bias.defined() ? bias.data().data() : nullptr;
  for (std::int64_t n = 0; n < is.n; ++n) {
    for (std::int64_t o = 0; o < fo; ++o) {
      double s = b ? b[o] : 0.0;
      const double* wr = w + o * f;
      const double* xr = x + n * f;
      for (std::int64_t i = 0; i < f; ++i) s += wr[i] * xr[i];
      out[static_cast<std::size_t>(n * fo + o)] = s;
    }
  }
  Impl xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_result(os, std::move(out), "fully_connected", {xi, wi, bi},
                     [xi, wi, n_ = is.n, f, fo](std::span<const double> g,
                                                std::vector<std::vector<double>>& gin) {
                       const double* x = xi->data.data();
                       const double* w = wi->data.data();
                       for (std::int64_t n = 0; n < n_; ++n) {
                         for (std::int64_t o = 0; o < fo; ++o) {
                           const double go = g[static_cast<std::size_t>(n * fo + o)];
                           if (!gin[2].empty()) gin[2][static_cast<std::size_t>(o)] += go;
                           if (!gin[1].empty()) {
                             double* gw = gin[1].data() + o * f;
                             const double* xr = x + n * f;
                             for (std::int64_t i = 0; i < f; ++i) gw[i] += go * xr[i];
                           }
                           if (!gin[0].empty()) {
                             double* gx = gin[0].data() + n * f;
                             const double* wr = w + o * f;
                             for (std::int64_t i = 0; i < f; ++i) gx[i] += go * wr[i];
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// activations

Tensor activation(const Tensor& input, Activation kind) {
  const auto x = input.data();
  std::vector<double> out(x.size());
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    Impl xi = input.impl();
    return make_result(input.shape(), std::move(out), "relu", {xi},
                       [xi](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                         const auto& x = xi->data;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           if (x[i] > 0.0) gin[0][i] += g[i];
                         }
                       });
  }
  // Saturated values are pinned inside the open interval (0,1).
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s;
    if (x[i] >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      s = e / (1.0 + e);
    }
    out[i] = std::clamp(s, lo, hi);
  }
  std::vector<double> saved = out;
  return make_result(input.shape(), std::move(out), "sigmoid", {input.impl()},
                     [saved = std::move(saved)](std::span<const double> g,
                                                std::vector<std::vector<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gin[0][i] += g[i] * saved[i] * (1.0 - saved[i]);
                       }
                     });
}

// ---------------------------------------------------------------------------
// channel concat / slice

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    reject(fmt::format("concat_channels: {} and {} disagree on N,H,W", as.str(), bs.str()));
  }
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  const std::int64_t na = as.c * as.plane(), nb = bs.c * bs.plane();
  for (std::int64_t n = 0; n < as.n; ++n) {
    std::copy_n(a.data().data() + n * na, na, out.data() + n * (na + nb));
    std::copy_n(b.data().data() + n * nb, nb, out.data() + n * (na + nb) + na);
  }
  return make_result(os, std::move(out), "concat_channels", {a.impl(), b.impl()},
                     [n_ = as.n, na, nb](std::span<const double> g,
                                         std::vector<std::vector<double>>& gin) {
                       for (std::int64_t n = 0; n < n_; ++n) {
                         const double* gp = g.data() + n * (na + nb);
                         if (!gin[0].empty()) {
                           for (std::int64_t i = 0; i < na; ++i) gin[0][static_cast<std::size_t>(n * na + i)] += gp[i];
                         }
                         if (!gin[1].empty()) {
                           for (std::int64_t i = 0; i < nb; ++i) {
                             gin[1][static_cast<std::size_t>(n * nb + i)] += gp[na + i];
                           }
                         }
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t end) {
  const Shape is = x.shape();
  if (begin < 0 || end > is.c || begin >= end) {
    reject(fmt::format("slice_channels: range [{},{}) invalid for {}", begin, end, is.str()));
  }
  const Shape os{is.n, end - begin, is.h, is.w};
  std::vector<double> out(static_cast<std::size_t>(os.numel()));
  const std::int64_t len = os.c * is.plane();
  for (std::int64_t n = 0; n < is.n; ++n) {
    std::copy_n(x.data().data() + idx(is, n, begin, 0, 0), len, out.data() + n * len);
  }
  return make_result(os, std::move(out), "slice_channels", {x.impl()},
                     [is, begin, len](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       for (std::int64_t n = 0; n < is.n; ++n) {
                         double* dst = gin[0].data() + idx(is, n, begin, 0, 0);
                         for (std::int64_t i = 0; i < len; ++i) dst[i] += g[static_cast<std::size_t>(n * len + i)];
                       }
                     });
}

// ---------------------------------------------------------------------------
// broadcasting elementwise

Tensor elementwise(const Tensor& a, const Tensor& b, Binary kind) {
  const Shape as = a.shape(), bs = b.shape();
  auto ok = [](std::int64_t da, std::int64_t db) { return db == da || db == 1; };
  if (!ok(as.n, bs.n) || !ok(as.c, bs.c) || !ok(as.h, bs.h) || !ok(as.w, bs.w)) {
    reject(fmt::format("elementwise: {} is not broadcastable against {}", bs.str(), as.str()));
  }
  // Strides of b, zero along broadcast axes.
  const std::int64_t sw = bs.w == 1 ? 0 : 1;
  const std::int64_t sh = bs.h == 1 ? 0 : bs.w;
  const std::int64_t sc = bs.c == 1 ? 0 : bs.h * bs.w;
  const std::int64_t sn = bs.n == 1 ? 0 : bs.c * bs.h * bs.w;
  auto bidx = [=](std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return static_cast<std::size_t>(n * sn + c * sc + h * sh + w * sw);
  };
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  std::size_t k = 0;
  for (std::int64_t n = 0; n < as.n; ++n)
    for (std::int64_t c = 0; c < as.c; ++c)
      for (std::int64_t h = 0; h < as.h; ++h)
        for (std::int64_t w = 0; w < as.w; ++w, ++k) {
          const double yv = y[bidx(n, c, h, w)];
          out[k] = kind == Binary::kAdd ? x[k] + yv : x[k] * yv;
        }
  Impl ai = a.impl(), bi = b.impl();
  return make_result(as, std::move(out), kind == Binary::kAdd ? "add" : "mul", {ai, bi},
                     [ai, bi, as, kind, bidx](std::span<const double> g,
                                              std::vector<std::vector<double>>& gin) {
                       const auto& x = ai->data;
                       const auto& y = bi->data;
                       std::size_t k = 0;
                       for (std::int64_t n = 0; n < as.n; ++n)
                         for (std::int64_t c = 0; c < as.c; ++c)
                           for (std::int64_t h = 0; h < as.h; ++h)
                             for (std::int64_t w = 0; w < as.w; ++w, ++k) {
                               const std::size_t j = bidx(n, c, h, w);
                               if (kind == Binary::kAdd) {
                                 if (!gin[0].empty()) gin[0][k] += g[k];
                                 if (!gin[1].empty()) gin[1][j] += g[k];
                               } else {
                                 if (!gin[0].empty()) gin[0][k] += g[k] * y[j];
                                 if (!gin[1].empty()) gin[1][j] += g[k] * x[k];
                               }
                             }
                     });
}

// ---------------------------------------------------------------------------
// reductions and reshapes

Tensor scale(const Tensor& x, double factor) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return make_result(x.shape(), std::move(out), "scale", {x.impl()},
                     [factor](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * factor;
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result(Shape{}, {s}, "sum", {x.impl()},
                     [](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       for (double& v : gin[0]) v += g[0];
                     });
}

Tensor sum_per_image(const Tensor& x) {
  const Shape s = x.shape();
  const std::int64_t per = s.c * s.plane();
  std::vector<double> out(static_cast<std::size_t>(s.n), 0.0);
  const auto in = x.data();
  for (std::int64_t n = 0; n < s.n; ++n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < per; ++i) acc += in[static_cast<std::size_t>(n * per + i)];
    out[static_cast<std::size_t>(n)] = acc;
  }
  return make_result(Shape{s.n, 1, 1, 1}, std::move(out), "sum_per_image", {x.impl()},
                     [n_ = s.n, per](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       for (std::int64_t n = 0; n < n_; ++n) {
                         for (std::int64_t i = 0; i < per; ++i) {
                           gin[0][static_cast<std::size_t>(n * per + i)] += g[static_cast<std::size_t>(n)];
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    reject(fmt::format("reshape: cannot view {} as {}", x.shape().str(), shape.str()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(shape, std::move(out), "reshape", {x.impl()},
                     [](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                     });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    reject(fmt::format("mse_loss: prediction {} and target {} differ", pred.shape().str(),
                       target.shape().str()));
  }
  const auto p = pred.data();
  const auto t = target.data();
  const double batch = static_cast<double>(pred.shape().n);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  Impl pi = pred.impl(), ti = target.impl();
  return make_result(Shape{}, {s / batch}, "mse_loss", {pi, ti},
                     [pi, ti, batch](std::span<const double> g, std::vector<std::vector<double>>& gin) {
                       const auto& p = pi->data;
                       const auto& t = ti->data;
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         const double d = 2.0 * (p[i] - t[i]) / batch * g[0];
                         if (!gin[0].empty()) gin[0][i] += d;
                         if (!gin[1].empty()) gin[1][i] -= d;
                       }
                     });
}

Tensor reflect_pad(const Tensor& x, std::int64_t pad_bottom, std::int64_t pad_right) {
  const Shape is = x.shape();
  if (pad_bottom < 0 || pad_right < 0 || pad_bottom >= is.h || pad_right >= is.w) {
    reject(fmt::format("reflect_pad: padding ({},{}) invalid for {}", pad_bottom, pad_right, is.str()));
  }
  const Shape os{is.n, is.c, is.h + pad_bottom, is.w + pad_right};
  Tensor out(os);
  auto reflect = [](std::int64_t i, std::int64_t len) { return i < len ? i : 2 * (len - 1) - i; };
  for (std::int64_t n = 0; n < os.n; ++n)
    for (std::int64_t c = 0; c < os.c; ++c)
      for (std::int64_t h = 0; h < os.h; ++h)
        for (std::int64_t w = 0; w < os.w; ++w)
          out.at(n, c, h, w) = x.at(n, c, reflect(h, is.h), reflect(w, is.w));
  return out;
}

}  // namespace hanet::ops
