/* Copyright 2026 The advgen Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "advgen/core/autograd.hpp"
#include "advgen/core/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace advgen::ag {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b) {
  if (!a.value().same_shape(b.value())) {
    throw StructuralError("add: shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
  }
  Tensor<T> out = a.value().clone();
  out.add_(b.value());
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], n.grad);
  });
}

template <typename T>
Variable<T> sub(const Variable<T>& a, const Variable<T>& b) {
  if (!a.value().same_shape(b.value())) {
    throw StructuralError("sub: shape mismatch");
  }
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    accumulate(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor<T> neg = n.grad.clone();
      neg.scale_(T(-1));
      accumulate(n.parents[1], neg);
    }
  });
}

template <typename T>
Variable<T> mul(const Variable<T>& a, const Variable<T>& b) {
  if (!a.value().same_shape(b.value())) {
    throw StructuralError("mul: shape mismatch");
  }
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  Tensor<T> av = a.value(), bv = b.value();
  return make_op<T>(std::move(out), {a, b}, [av, bv](Node<T>& n) {
    if (n.parents[0]->requires_grad) {
      Tensor<T> d(av.shape());
      for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = n.grad[i] * bv[i];
      accumulate(n.parents[0], d);
    }
    if (n.parents[1]->requires_grad) {
      Tensor<T> d(bv.shape());
      for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = n.grad[i] * av[i];
      accumulate(n.parents[1], d);
    }
  });
}

template <typename T>
Variable<T> scale(const Variable<T>& a, T s) {
  Tensor<T> out = a.value().clone();
  out.scale_(s);
  return make_op<T>(std::move(out), {a}, [s](Node<T>& n) {
    if (n.parents[0]->requires_grad) {
      Tensor<T> d = n.grad.clone();
      d.scale_(s);
      accumulate(n.parents[0], d);
    }
  });
}

/// y = s - x
template <typename T>
Variable<T> rsub_scalar(const Variable<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = s - a.value()[i];
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (n.parents[0]->requires_grad) {
      Tensor<T> d = n.grad.clone();
      d.scale_(T(-1));
      accumulate(n.parents[0], d);
    }
  });
}

template <typename T>
Variable<T> relu(const Variable<T>& a) {
  Tensor<T> out(a.shape());
  const Tensor<T>& x = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  Tensor<T> xv = x;
  return make_op<T>(std::move(out), {a}, [xv](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<T> d(xv.shape());
    for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = xv[i] > T(0) ? n.grad[i] : T(0);
    accumulate(n.parents[0], d);
  });
}

/// Unit-interval tanh head: y = (tanh(x) + 1) / 2, so y in (0, 1).
template <typename T>
Variable<T> tanh_unit(const Variable<T>& a) {
  Tensor<T> out(a.shape());
  const Tensor<T>& x = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = (std::tanh(x[i]) + T(1)) / T(2);
  }
  Tensor<T> y = out;  // shares storage with the node's value
  return make_op<T>(std::move(out), {a}, [y](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<T> d(y.shape());
    // dy/dx = (1 - tanh^2)/2 = 2 y (1 - y)
    for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = n.grad[i] * T(2) * y[i] * (T(1) - y[i]);
    accumulate(n.parents[0], d);
  });
}

/// Elementwise clamp with tensor bounds. Gradient passes where the input is
/// inside [lo, hi] (inclusive), matching the usual clamp subgradient.
template <typename T>
Variable<T> clamp_box(const Variable<T>& a, const Tensor<T>& lo, const Tensor<T>& hi) {
  if (!a.value().same_shape(lo) || !a.value().same_shape(hi)) {
    throw StructuralError("clamp_box: bound shape mismatch");
  }
  const Tensor<T>& x = a.value();
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = std::min(std::max(x[i], lo[i]), hi[i]);
  }
  Tensor<T> xv = x, lov = lo, hiv = hi;
  return make_op<T>(std::move(out), {a}, [xv, lov, hiv](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<T> d(xv.shape());
    for (std::int64_t i = 0; i < d.numel(); ++i) {
      d[i] = (xv[i] >= lov[i] && xv[i] <= hiv[i]) ? n.grad[i] : T(0);
    }
    accumulate(n.parents[0], d);
  });
}

template <typename T>
Variable<T> clamp(const Variable<T>& a, T lo, T hi) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(x[i], lo), hi);
  Tensor<T> xv = x;
  return make_op<T>(std::move(out), {a}, [xv, lo, hi](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<T> d(xv.shape());
    for (std::int64_t i = 0; i < d.numel(); ++i) {
      d[i] = (xv[i] >= lo && xv[i] <= hi) ? n.grad[i] : T(0);
    }
    accumulate(n.parents[0], d);
  });
}

template <typename T>
Variable<T> sum_all(const Variable<T>& a) {
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(a.value().sum()));
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<T> d(n.parents[0]->value.shape());
    d.fill(n.grad[0]);
    accumulate(n.parents[0], d);
  });
}

template <typename T>
Variable<T> mean_all(const Variable<T>& a) {
  const T inv = T(1) / static_cast<T>(a.value().numel());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(a.value().sum()) * inv);
  return make_op<T>(std::move(out), {a}, [inv](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<T> d(n.parents[0]->value.shape());
    d.fill(n.grad[0] * inv);
    accumulate(n.parents[0], d);
  });
}

template <typename T>
Variable<T> reshape(const Variable<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshape(std::move(shape)).clone();
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    accumulate(n.parents[0], n.grad.reshape(n.parents[0]->value.shape()));
  });
}

// ---------------------------------------------------------------------------
// im2col / col2im kernels
// ---------------------------------------------------------------------------

/// Gather patches of `src` (C x H x W, contiguous) into `dst`
/// with layout (C*KH*KW) x (out_h*out_w).
template <typename T>
void im2col(const T* src, std::int64_t C, std::int64_t H, std::int64_t W,
            int kh, int kw, int stride, int pad,
            std::int64_t out_h, std::int64_t out_w, T* dst) {
  const std::int64_t cols = out_h * out_w;
  for (std::int64_t c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = dst + ((c * kh + i) * kw + j) * cols;
        for (std::int64_t y = 0; y < out_h; ++y) {
          const std::int64_t sy = y * stride - pad + i;
          if (sy < 0 || sy >= H) {
            for (std::int64_t x = 0; x < out_w; ++x) row[y * out_w + x] = T(0);
            continue;
          }
          const T* src_row = src + (c * H + sy) * W;
          for (std::int64_t x = 0; x < out_w; ++x) {
            const std::int64_t sx = x * stride - pad + j;
            row[y * out_w + x] = (sx >= 0 && sx < W) ? src_row[sx] : T(0);
          }
        }
      }
    }
  }
}

/// Scatter-add the column buffer back into `dst` (C x H x W). Adjoint of
/// im2col; also the forward kernel of the transposed convolution.
template <typename T>
void col2im(const T* cols_buf, std::int64_t C, std::int64_t H, std::int64_t W,
            int kh, int kw, int stride, int pad,
            std::int64_t out_h, std::int64_t out_w, T* dst) {
  const std::int64_t cols = out_h * out_w;
  for (std::int64_t c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* row = cols_buf + ((c * kh + i) * kw + j) * cols;
        for (std::int64_t y = 0; y < out_h; ++y) {
          const std::int64_t sy = y * stride - pad + i;
          if (sy < 0 || sy >= H) continue;
          T* dst_row = dst + (c * H + sy) * W;
          for (std::int64_t x = 0; x < out_w; ++x) {
            const std::int64_t sx = x * stride - pad + j;
            if (sx >= 0 && sx < W) dst_row[sx] += row[y * out_w + x];
          }
        }
      }
    }
  }
}

inline std::int64_t conv_out_size(std::int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 2D convolution, NCHW, weight [Cout, Cin, KH, KW], bias [Cout] (optional,
/// pass undefined Variable to skip). Parallel over samples; per-sample GEMMs
/// run single-threaded so the result is thread-count independent.
template <typename T>
Variable<T> conv2d(const Variable<T>& x, const Variable<T>& w, const Variable<T>& b,
                   int stride, int pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw StructuralError("conv2d expects 4-D tensors");
  const std::int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t Cout = wv.dim(0);
  const int kh = static_cast<int>(wv.dim(2)), kw = static_cast<int>(wv.dim(3));
  if (wv.dim(1) != Cin) {
    throw StructuralError("conv2d: input channels " + std::to_string(Cin) +
                          " do not match weight " + std::to_string(wv.dim(1)));
  }
  const std::int64_t out_h = conv_out_size(H, kh, stride, pad);
  const std::int64_t out_w = conv_out_size(W, kw, stride, pad);
  if (out_h <= 0 || out_w <= 0) throw StructuralError("conv2d: output would be empty");
  const std::int64_t K = Cin * kh * kw;
  const std::int64_t P = out_h * out_w;

  Tensor<T> out({N, Cout, out_h, out_w});
  const bool has_bias = b.defined();

  parallel_for(N, [&](std::int64_t n) {
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    im2col(xv.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, out_h, out_w,
           cols.data());
    CMapM<T> wm(wv.data(), Cout, K);
    CMapM<T> cm(cols.data(), K, P);
    MapM<T> om(out.data() + n * Cout * P, Cout, P);
    om.noalias() = wm * cm;
    if (has_bias) {
      const T* bp = b.value().data();
      for (std::int64_t co = 0; co < Cout; ++co) om.row(co).array() += bp[co];
    }
  });

  std::vector<Variable<T>> parents = has_bias ? std::vector<Variable<T>>{x, w, b}
                                              : std::vector<Variable<T>>{x, w};
  Tensor<T> xsave = xv, wsave = wv;
  auto bp_fn = [xsave, wsave, stride, pad, N, Cin, H, W, Cout, kh, kw, out_h, out_w, K, P,
                has_bias](Node<T>& node) {
    const Tensor<T>& gy = node.grad;
    const bool need_dx = node.parents[0]->requires_grad;
    const bool need_dw = node.parents[1]->requires_grad;
    const bool need_db = has_bias && node.parents[2]->requires_grad;

    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>({N, Cin, H, W});

    const int nt = max_threads();
    std::vector<Tensor<T>> dw_parts, db_parts;
    // one distinct accumulator per thread (Tensor copies share storage)
    for (int t = 0; t < nt; ++t) {
      if (need_dw) dw_parts.emplace_back(Shape{Cout, K});
      if (need_db) db_parts.emplace_back(Shape{Cout});
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t n = 0; n < N; ++n) {
#ifdef _OPENMP
      const int tid = omp_get_thread_num();
#else
      const int tid = 0;
#endif
      CMapM<T> gym(gy.data() + n * Cout * P, Cout, P);
      if (need_dw || need_dx) {
        std::vector<T> cols(static_cast<std::size_t>(K * P));
        if (need_dw) {
          im2col(xsave.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, out_h,
                 out_w, cols.data());
          CMapM<T> cm(cols.data(), K, P);
          MapM<T> dwm(dw_parts[tid].data(), Cout, K);
          dwm.noalias() += gym * cm.transpose();
        }
        if (need_dx) {
          CMapM<T> wm(wsave.data(), Cout, K);
          MapM<T> gcols(cols.data(), K, P);
          gcols.noalias() = wm.transpose() * gym;
          col2im(cols.data(), Cin, H, W, kh, kw, stride, pad, out_h, out_w,
                 dx.data() + n * Cin * H * W);
        }
      }
      if (need_db) {
        T* dbp = db_parts[tid].data();
        const T* gp = gy.data() + n * Cout * P;
        for (std::int64_t co = 0; co < Cout; ++co) {
          T s = 0;
          for (std::int64_t p = 0; p < P; ++p) s += gp[co * P + p];
          dbp[co] += s;
        }
      }
    }

    if (need_dx) accumulate(node.parents[0], dx);
    if (need_dw) {
      Tensor<T> dw({Cout, K});
      for (auto& part : dw_parts) dw.add_(part);
      accumulate(node.parents[1], dw.reshape({Cout, Cin, kh, kw}));
    }
    if (need_db) {
      Tensor<T> db({Cout});
      for (auto& part : db_parts) db.add_(part);
      accumulate(node.parents[2], db);
    }
  };
  return make_op<T>(std::move(out), std::move(parents), std::move(bp_fn));
}

/// Transposed 2D convolution, NCHW, weight [Cin, Cout, KH, KW].
/// out = (in - 1) * stride - 2 pad + k + output_padding.
template <typename T>
Variable<T> conv_transpose2d(const Variable<T>& x, const Variable<T>& w,
                             const Variable<T>& b, int stride, int pad,
                             int output_padding) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) {
    throw StructuralError("conv_transpose2d expects 4-D tensors");
  }
  const std::int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t Cout = wv.dim(1);
  const int kh = static_cast<int>(wv.dim(2)), kw = static_cast<int>(wv.dim(3));
  if (wv.dim(0) != Cin) throw StructuralError("conv_transpose2d: channel mismatch");
  if (output_padding >= stride) {
    throw StructuralError("conv_transpose2d: output_padding must be < stride");
  }
  const std::int64_t out_h = (H - 1) * stride - 2 * pad + kh + output_padding;
  const std::int64_t out_w = (W - 1) * stride - 2 * pad + kw + output_padding;
  const std::int64_t K = Cout * kh * kw;
  const std::int64_t P = H * W;

  Tensor<T> out({N, Cout, out_h, out_w});
  const bool has_bias = b.defined();

  parallel_for(N, [&](std::int64_t n) {
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    CMapM<T> wm(wv.data(), Cin, K);
    CMapM<T> xm(xv.data() + n * Cin * P, Cin, P);
    MapM<T> cm(cols.data(), K, P);
    cm.noalias() = wm.transpose() * xm;
    // scatter into the (larger) output plane; out_h/out_w play the "input"
    // role of col2im while H/W are the column grid
    col2im(cols.data(), Cout, out_h, out_w, kh, kw, stride, pad, H, W,
           out.data() + n * Cout * out_h * out_w);
    if (has_bias) {
      const T* bp = b.value().data();
      T* op = out.data() + n * Cout * out_h * out_w;
      for (std::int64_t co = 0; co < Cout; ++co) {
        for (std::int64_t i = 0; i < out_h * out_w; ++i) op[co * out_h * out_w + i] += bp[co];
      }
    }
  });

  std::vector<Variable<T>> parents = has_bias ? std::vector<Variable<T>>{x, w, b}
                                              : std::vector<Variable<T>>{x, w};
  Tensor<T> xsave = xv, wsave = wv;
  auto bp_fn = [xsave, wsave, stride, pad, N, Cin, H, W, Cout, kh, kw, out_h, out_w, K, P,
                has_bias](Node<T>& node) {
    const Tensor<T>& gy = node.grad;
    const bool need_dx = node.parents[0]->requires_grad;
    const bool need_dw = node.parents[1]->requires_grad;
    const bool need_db = has_bias && node.parents[2]->requires_grad;

    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>({N, Cin, H, W});
    const int nt = max_threads();
    std::vector<Tensor<T>> dw_parts, db_parts;
    for (int t = 0; t < nt; ++t) {
      if (need_dw) dw_parts.emplace_back(Shape{Cin, K});
      if (need_db) db_parts.emplace_back(Shape{Cout});
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t n = 0; n < N; ++n) {
#ifdef _OPENMP
      const int tid = omp_get_thread_num();
#else
      const int tid = 0;
#endif
      if (need_dx || need_dw) {
        // dcols gathers gy patches back onto the input grid
        std::vector<T> dcols(static_cast<std::size_t>(K * P));
        im2col(gy.data() + n * Cout * out_h * out_w, Cout, out_h, out_w, kh, kw, stride,
               pad, H, W, dcols.data());
        CMapM<T> dcm(dcols.data(), K, P);
        if (need_dx) {
          CMapM<T> wm(wsave.data(), Cin, K);
          MapM<T> dxm(dx.data() + n * Cin * P, Cin, P);
          dxm.noalias() = wm * dcm;
        }
        if (need_dw) {
          CMapM<T> xm(xsave.data() + n * Cin * P, Cin, P);
          MapM<T> dwm(dw_parts[tid].data(), Cin, K);
          dwm.noalias() += xm * dcm.transpose();
        }
      }
      if (need_db) {
        T* dbp = db_parts[tid].data();
        const T* gp = gy.data() + n * Cout * out_h * out_w;
        for (std::int64_t co = 0; co < Cout; ++co) {
          T s = 0;
          for (std::int64_t i = 0; i < out_h * out_w; ++i) s += gp[co * out_h * out_w + i];
          dbp[co] += s;
        }
      }
    }

    if (need_dx) accumulate(node.parents[0], dx);
    if (need_dw) {
      Tensor<T> dw({Cin, K});
      for (auto& part : dw_parts) dw.add_(part);
      accumulate(node.parents[1], dw.reshape({Cin, Cout, kh, kw}));
    }
    if (need_db) {
      Tensor<T> db({Cout});
      for (auto& part : db_parts) db.add_(part);
      accumulate(node.parents[2], db);
    }
  };
  return make_op<T>(std::move(out), std::move(parents), std::move(bp_fn));
}

// ---------------------------------------------------------------------------
// Normalization, pooling, linear
// ---------------------------------------------------------------------------

/// Instance normalization: statistics per (sample, channel) over the spatial
/// plane; affine parameters gamma/beta per channel. Per-sample statistics
/// make evaluation independent of batch composition.
template <typename T>
Variable<T> instance_norm(const Variable<T>& x, const Variable<T>& gamma,
                          const Variable<T>& beta, T eps = T(1e-5)) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw StructuralError("instance_norm expects NCHW");
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t M = H * W;
  if (gamma.value().numel() != C || beta.value().numel() != C) {
    throw StructuralError("instance_norm: affine parameter size mismatch");
  }

  Tensor<T> out({N, C, H, W});
  Tensor<T> xhat({N, C, H, W});
  Tensor<T> invstd({N, C});
  const T* gp = gamma.value().data();
  const T* bp = beta.value().data();

  parallel_for(N * C, [&](std::int64_t nc) {
    const T* src = xv.data() + nc * M;
    T* xh = xhat.data() + nc * M;
    T* dst = out.data() + nc * M;
    double mean = 0;
    for (std::int64_t i = 0; i < M; ++i) mean += src[i];
    mean /= static_cast<double>(M);
    double var = 0;
    for (std::int64_t i = 0; i < M; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(M);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    invstd[nc] = inv;
    const std::int64_t c = nc % C;
    const T g = gp[c], b = bp[c], mu = static_cast<T>(mean);
    for (std::int64_t i = 0; i < M; ++i) {
      xh[i] = (src[i] - mu) * inv;
      dst[i] = g * xh[i] + b;
    }
  });

  Tensor<T> gsave = gamma.value();
  auto bp_fn = [xhat, invstd, gsave, N, C, M](Node<T>& node) {
    const Tensor<T>& gy = node.grad;
    const bool need_dx = node.parents[0]->requires_grad;
    const bool need_dg = node.parents[1]->requires_grad;
    const bool need_db = node.parents[2]->requires_grad;

    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(node.parents[0]->value.shape());
    Tensor<T> dg_nc, db_nc;
    if (need_dg) dg_nc = Tensor<T>({N * C});
    if (need_db) db_nc = Tensor<T>({N * C});

    parallel_for(N * C, [&](std::int64_t nc) {
      const T* gyp = gy.data() + nc * M;
      const T* xh = xhat.data() + nc * M;
      const std::int64_t c = nc % C;
      if (need_dg) {
        T s = 0;
        for (std::int64_t i = 0; i < M; ++i) s += gyp[i] * xh[i];
        dg_nc[nc] = s;
      }
      if (need_db) {
        T s = 0;
        for (std::int64_t i = 0; i < M; ++i) s += gyp[i];
        db_nc[nc] = s;
      }
      if (need_dx) {
        const T g = gsave[c];
        const T inv = invstd[nc];
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (std::int64_t i = 0; i < M; ++i) {
          const T dxh = gyp[i] * g;
          sum_dxhat += dxh;
          sum_dxhat_xhat += static_cast<double>(dxh) * xh[i];
        }
        const T m1 = static_cast<T>(sum_dxhat / static_cast<double>(M));
        const T m2 = static_cast<T>(sum_dxhat_xhat / static_cast<double>(M));
        T* dxp = dx.data() + nc * M;
        for (std::int64_t i = 0; i < M; ++i) {
          const T dxh = gyp[i] * g;
          dxp[i] = inv * (dxh - m1 - xh[i] * m2);
        }
      }
    });

    if (need_dx) accumulate(node.parents[0], dx);
    if (need_dg) {
      Tensor<T> dg({C});
      for (std::int64_t nc = 0; nc < N * C; ++nc) dg[nc % C] += dg_nc[nc];
      accumulate(node.parents[1], dg);
    }
    if (need_db) {
      Tensor<T> db({C});
      for (std::int64_t nc = 0; nc < N * C; ++nc) db[nc % C] += db_nc[nc];
      accumulate(node.parents[2], db);
    }
  };
  return make_op<T>(std::move(out), {x, gamma, beta}, std::move(bp_fn));
}

template <typename T>
Variable<T> maxpool2d(const Variable<T>& x, int k, int stride) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw StructuralError("maxpool2d expects NCHW");
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t out_h = (H - k) / stride + 1;
  const std::int64_t out_w = (W - k) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw StructuralError("maxpool2d: input too small");

  Tensor<T> out({N, C, out_h, out_w});
  auto arg = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(N * C * out_h * out_w));

  parallel_for(N * C, [&](std::int64_t nc) {
    const T* src = xv.data() + nc * H * W;
    T* dst = out.data() + nc * out_h * out_w;
    std::int32_t* ap = arg->data() + nc * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      for (std::int64_t xo = 0; xo < out_w; ++xo) {
        T best = -std::numeric_limits<T>::infinity();
        std::int32_t best_idx = 0;
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            const std::int64_t sy = y * stride + i, sx = xo * stride + j;
            const T v = src[sy * W + sx];
            if (v > best) {
              best = v;
              best_idx = static_cast<std::int32_t>(sy * W + sx);
            }
          }
        }
        dst[y * out_w + xo] = best;
        ap[y * out_w + xo] = best_idx;
      }
    }
  });

  auto bp_fn = [arg, N, C, H, W, out_h, out_w](Node<T>& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor<T> dx({N, C, H, W});
    const Tensor<T>& gy = node.grad;
    parallel_for(N * C, [&](std::int64_t nc) {
      const T* gp = gy.data() + nc * out_h * out_w;
      const std::int32_t* ap = arg->data() + nc * out_h * out_w;
      T* dp = dx.data() + nc * H * W;
      for (std::int64_t i = 0; i < out_h * out_w; ++i) dp[ap[i]] += gp[i];
    });
    accumulate(node.parents[0], dx);
  };
  return make_op<T>(std::move(out), {x}, std::move(bp_fn));
}

template <typename T>
Variable<T> global_avg_pool(const Variable<T>& x) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw StructuralError("global_avg_pool expects NCHW");
  const std::int64_t N = xv.dim(0), C = xv.dim(1), M = xv.dim(2) * xv.dim(3);
  Tensor<T> out({N, C});
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    double s = 0;
    const T* p = xv.data() + nc * M;
    for (std::int64_t i = 0; i < M; ++i) s += p[i];
    out[nc] = static_cast<T>(s / static_cast<double>(M));
  }
  Shape in_shape = xv.shape();
  auto bp_fn = [in_shape, N, C, M](Node<T>& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor<T> dx(in_shape);
    const T inv = T(1) / static_cast<T>(M);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
      const T g = node.grad[nc] * inv;
      T* p = dx.data() + nc * M;
      for (std::int64_t i = 0; i < M; ++i) p[i] = g;
    }
    accumulate(node.parents[0], dx);
  };
  return make_op<T>(std::move(out), {x}, std::move(bp_fn));
}

/// y = x W^T + b with x [N, K], W [M, K], b [M].
template <typename T>
Variable<T> linear(const Variable<T>& x, const Variable<T>& w, const Variable<T>& b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1)) {
    throw StructuralError("linear: shape mismatch");
  }
  const std::int64_t N = xv.dim(0), K = xv.dim(1), M = wv.dim(0);
  Tensor<T> out({N, M});
  {
    CMapM<T> xm(xv.data(), N, K);
    CMapM<T> wm(wv.data(), M, K);
    MapM<T> om(out.data(), N, M);
    om.noalias() = xm * wm.transpose();
    if (b.defined()) {
      const T* bp = b.value().data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t m = 0; m < M; ++m) om(n, m) += bp[m];
    }
  }
  const bool has_bias = b.defined();
  std::vector<Variable<T>> parents = has_bias ? std::vector<Variable<T>>{x, w, b}
                                              : std::vector<Variable<T>>{x, w};
  Tensor<T> xsave = xv, wsave = wv;
  auto bp_fn = [xsave, wsave, N, K, M, has_bias](Node<T>& node) {
    CMapM<T> gym(node.grad.data(), N, M);
    if (node.parents[0]->requires_grad) {
      Tensor<T> dx({N, K});
      MapM<T> dxm(dx.data(), N, K);
      CMapM<T> wm(wsave.data(), M, K);
      dxm.noalias() = gym * wm;
      accumulate(node.parents[0], dx);
    }
    if (node.parents[1]->requires_grad) {
      Tensor<T> dw({M, K});
      MapM<T> dwm(dw.data(), M, K);
      CMapM<T> xm(xsave.data(), N, K);
      dwm.noalias() = gym.transpose() * xm;
      accumulate(node.parents[1], dw);
    }
    if (has_bias && node.parents[2]->requires_grad) {
      Tensor<T> db({M});
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t m = 0; m < M; ++m) db[m] += node.grad[n * M + m];
      accumulate(node.parents[2], db);
    }
  };
  return make_op<T>(std::move(out), std::move(parents), std::move(bp_fn));
}

template <typename T>
Variable<T> concat_channels(const Variable<T>& a, const Variable<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) ||
      av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw StructuralError("concat_channels: incompatible shapes");
  }
  const std::int64_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1);
  const std::int64_t M = av.dim(2) * av.dim(3);
  Tensor<T> out({N, Ca + Cb, av.dim(2), av.dim(3)});
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy(av.data() + n * Ca * M, av.data() + (n + 1) * Ca * M,
              out.data() + n * (Ca + Cb) * M);
    std::copy(bv.data() + n * Cb * M, bv.data() + (n + 1) * Cb * M,
              out.data() + (n * (Ca + Cb) + Ca) * M);
  }
  auto bp_fn = [N, Ca, Cb, M](Node<T>& node) {
    if (node.parents[0]->requires_grad) {
      Tensor<T> da(node.parents[0]->value.shape());
      for (std::int64_t n = 0; n < N; ++n) {
        std::copy(node.grad.data() + n * (Ca + Cb) * M,
                  node.grad.data() + n * (Ca + Cb) * M + Ca * M, da.data() + n * Ca * M);
      }
      accumulate(node.parents[0], da);
    }
    if (node.parents[1]->requires_grad) {
      Tensor<T> db(node.parents[1]->value.shape());
      for (std::int64_t n = 0; n < N; ++n) {
        std::copy(node.grad.data() + (n * (Ca + Cb) + Ca) * M,
                  node.grad.data() + (n + 1) * (Ca + Cb) * M, db.data() + n * Cb * M);
      }
      accumulate(node.parents[1], db);
    }
  };
  return make_op<T>(std::move(out), {a, b}, std::move(bp_fn));
}

// ---------------------------------------------------------------------------
// Similarity, softmax, classification losses
// ---------------------------------------------------------------------------

inline std::atomic<std::uint64_t>& zero_norm_warnings() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

/// Per-sample cosine similarity over flattened features: output shape [N].
/// Denominators carry a +1e-12 guard; an exactly-zero vector contributes
/// cosine 0 with zero gradient and bumps the zero-norm warning counter.
template <typename T>
Variable<T> cosine_pairs(const Variable<T>& a, const Variable<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (!av.same_shape(bv)) throw StructuralError("cosine_pairs: shape mismatch");
  if (av.ndim() < 1) throw StructuralError("cosine_pairs: empty tensor");
  const std::int64_t N = av.dim(0);
  const std::int64_t D = av.numel() / std::max<std::int64_t>(N, 1);
  if (N == 0 || D == 0) throw StructuralError("cosine_pairs: degenerate tensor");

  Tensor<T> out({N});
  Tensor<T> na({N}), nb({N}), dots({N});
  for (std::int64_t n = 0; n < N; ++n) {
    const T* pa = av.data() + n * D;
    const T* pb = bv.data() + n * D;
    double sa = 0, sb = 0, d = 0;
    for (std::int64_t i = 0; i < D; ++i) {
      sa += static_cast<double>(pa[i]) * pa[i];
      sb += static_cast<double>(pb[i]) * pb[i];
      d += static_cast<double>(pa[i]) * pb[i];
    }
    na[n] = static_cast<T>(std::sqrt(sa));
    nb[n] = static_cast<T>(std::sqrt(sb));
    dots[n] = static_cast<T>(d);
    const double denom = static_cast<double>(na[n]) * nb[n] + 1e-12;
    out[n] = static_cast<T>(d / denom);
    if (na[n] == T(0) || nb[n] == T(0)) zero_norm_warnings()++;
  }

  Tensor<T> asave = av, bsave = bv;
  auto bp_fn = [asave, bsave, na, nb, dots, N, D](Node<T>& node) {
    const bool need_da = node.parents[0]->requires_grad;
    const bool need_db = node.parents[1]->requires_grad;
    Tensor<T> da, db;
    if (need_da) da = Tensor<T>(asave.shape());
    if (need_db) db = Tensor<T>(bsave.shape());
    for (std::int64_t n = 0; n < N; ++n) {
      const T gc = node.grad[n];
      const double denom = static_cast<double>(na[n]) * nb[n] + 1e-12;
      const T* pa = asave.data() + n * D;
      const T* pb = bsave.data() + n * D;
      if (need_da && na[n] != T(0)) {
        // d cos / d a = b/denom - dot * (nb/na) * a / denom^2
        const double k = static_cast<double>(dots[n]) * nb[n] /
                         (static_cast<double>(na[n]) * denom * denom);
        T* pda = da.data() + n * D;
        for (std::int64_t i = 0; i < D; ++i) {
          pda[i] = gc * static_cast<T>(pb[i] / denom - k * pa[i]);
        }
      }
      if (need_db && nb[n] != T(0)) {
        const double k = static_cast<double>(dots[n]) * na[n] /
                         (static_cast<double>(nb[n]) * denom * denom);
        T* pdb = db.data() + n * D;
        for (std::int64_t i = 0; i < D; ++i) {
          pdb[i] = gc * static_cast<T>(pa[i] / denom - k * pb[i]);
        }
      }
    }
    if (need_da) accumulate(node.parents[0], da);
    if (need_db) accumulate(node.parents[1], db);
  };
  return make_op<T>(std::move(out), {a, b}, std::move(bp_fn));
}

/// Stack scalar variables into a 1-D vector (used for per-block loss terms).
template <typename T>
Variable<T> stack_scalars(const std::vector<Variable<T>>& xs) {
  if (xs.empty()) throw StructuralError("stack_scalars: empty input");
  const std::int64_t L = static_cast<std::int64_t>(xs.size());
  Tensor<T> out({L});
  for (std::int64_t i = 0; i < L; ++i) {
    if (xs[static_cast<std::size_t>(i)].value().numel() != 1) {
      throw StructuralError("stack_scalars expects scalars");
    }
    out[i] = xs[static_cast<std::size_t>(i)].value()[0];
  }
  auto bp_fn = [L](Node<T>& node) {
    for (std::int64_t i = 0; i < L; ++i) {
      if (node.parents[static_cast<std::size_t>(i)]->requires_grad) {
        accumulate(node.parents[static_cast<std::size_t>(i)],
                   Tensor<T>::scalar(node.grad[i]));
      }
    }
  };
  return make_op<T>(std::move(out), xs, std::move(bp_fn));
}

/// Softmax over a 1-D logits vector.
template <typename T>
Variable<T> softmax1d(const Variable<T>& logits) {
  const Tensor<T>& lv = logits.value();
  if (lv.ndim() != 1) throw StructuralError("softmax1d expects a vector");
  const std::int64_t L = lv.numel();
  Tensor<T> out({L});
  T mx = lv[0];
  for (std::int64_t i = 1; i < L; ++i) mx = std::max(mx, lv[i]);
  double z = 0;
  for (std::int64_t i = 0; i < L; ++i) z += std::exp(static_cast<double>(lv[i] - mx));
  for (std::int64_t i = 0; i < L; ++i) {
    out[i] = static_cast<T>(std::exp(static_cast<double>(lv[i] - mx)) / z);
  }
  Tensor<T> w = out;
  auto bp_fn = [w, L](Node<T>& node) {
    if (!node.parents[0]->requires_grad) return;
    double inner = 0;
    for (std::int64_t i = 0; i < L; ++i) inner += static_cast<double>(node.grad[i]) * w[i];
    Tensor<T> d({L});
    for (std::int64_t i = 0; i < L; ++i) {
      d[i] = w[i] * (node.grad[i] - static_cast<T>(inner));
    }
    accumulate(node.parents[0], d);
  };
  return make_op<T>(std::move(out), {logits}, std::move(bp_fn));
}

/// Mean cross entropy of logits [N, K] against integer labels.
template <typename T>
Variable<T> cross_entropy(const Variable<T>& logits, const std::vector<int>& labels) {
  const Tensor<T>& lv = logits.value();
  if (lv.ndim() != 2) throw StructuralError("cross_entropy expects [N, K] logits");
  const std::int64_t N = lv.dim(0), K = lv.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N) {
    throw StructuralError("cross_entropy: label count mismatch");
  }
  Tensor<T> probs({N, K});
  double loss = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    const T* row = lv.data() + n * K;
    T mx = row[0];
    for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double z = 0;
    for (std::int64_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k] - mx));
    const double logz = std::log(z) + mx;
    for (std::int64_t k = 0; k < K; ++k) {
      probs[n * K + k] = static_cast<T>(std::exp(row[k] - logz));
    }
    loss -= static_cast<double>(row[labels[static_cast<std::size_t>(n)]]) - logz;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(N)));
  auto labels_copy = labels;
  auto bp_fn = [probs, labels_copy, N, K](Node<T>& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor<T> d({N, K});
    const T g = node.grad[0] / static_cast<T>(N);
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t k = 0; k < K; ++k) {
        const T onehot = (labels_copy[static_cast<std::size_t>(n)] == k) ? T(1) : T(0);
        d[n * K + k] = g * (probs[n * K + k] - onehot);
      }
    }
    accumulate(node.parents[0], d);
  };
  return make_op<T>(std::move(out), {logits}, std::move(bp_fn));
}

/// Row-wise argmax with ties broken toward the lowest class index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.ndim() != 2) throw StructuralError("argmax_rows expects [N, K]");
  const std::int64_t N = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(N));
  for (std::int64_t n = 0; n < N; ++n) {
    const T* row = logits.data() + n * K;
    int best = 0;
    for (std::int64_t k = 1; k < K; ++k) {
      if (row[k] > row[best]) best = static_cast<int>(k);
    }
    out[static_cast<std::size_t>(n)] = best;
  }
  return out;
}

}  // namespace advgen::ag
