#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/tensor.hpp"

// Differentiable primitives. Every op takes an optional Graph*: with a graph
// the application is recorded for reverse-mode differentiation, without one it
// is a plain forward computation. Storage is float32; reductions that feed
// losses or statistics accumulate in double.

namespace voxcam {

enum class ConvAlgo { im2col, direct };

namespace detail {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm_nn(const float* A, const float* B, float* C, int m, int k, int n, bool acc) {
  CMatMap a(A, m, k), b(B, k, n);
  MatMap c(C, m, n);
  if (acc)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
inline void gemm_nt(const float* A, const float* B, float* C, int m, int k, int n, bool acc) {
  CMatMap a(A, m, k), b(B, n, k);
  MatMap c(C, m, n);
  if (acc)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
inline void gemm_tn(const float* A, const float* B, float* C, int m, int k, int n, bool acc) {
  CMatMap a(A, k, m), b(B, k, n);
  MatMap c(C, m, n);
  if (acc)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Patch matrix layout: col[c*kh*kw + i*kw + j][ho*Wo + wo].
inline void im2col(const float* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int Ho, int Wo, float* col) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    const float* plane = x + static_cast<std::int64_t>(c) * H * W;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        float* row = col + (static_cast<std::int64_t>(c) * kh * kw + i * kw + j) * P;
        for (int ho = 0; ho < Ho; ++ho) {
          const int y = ho * stride - pad + i;
          if (y < 0 || y >= H) {
            std::fill(row + ho * Wo, row + (ho + 1) * Wo, 0.0f);
            continue;
          }
          for (int wo = 0; wo < Wo; ++wo) {
            const int xx = wo * stride - pad + j;
            row[ho * Wo + wo] = (xx >= 0 && xx < W) ? plane[y * W + xx] : 0.0f;
          }
        }
      }
    }
  }
}

inline void col2im_accumulate(const float* col, int C, int H, int W, int kh, int kw, int stride,
                              int pad, int Ho, int Wo, float* gx) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    float* plane = gx + static_cast<std::int64_t>(c) * H * W;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const float* row = col + (static_cast<std::int64_t>(c) * kh * kw + i * kw + j) * P;
        for (int ho = 0; ho < Ho; ++ho) {
          const int y = ho * stride - pad + i;
          if (y < 0 || y >= H) continue;
          for (int wo = 0; wo < Wo; ++wo) {
            const int xx = wo * stride - pad + j;
            if (xx >= 0 && xx < W) plane[y * W + xx] += row[ho * Wo + wo];
          }
        }
      }
    }
  }
}

// Scratch cap for the 3D patch matrix; chunks of output depths share one GEMM.
inline int conv3d_depth_chunk(int K, int P, int Do) {
  const std::int64_t cap = 16ll << 20;  // floats (~64 MB)
  const std::int64_t per_depth = static_cast<std::int64_t>(K) * P;
  const int chunk = static_cast<int>(std::max<std::int64_t>(1, cap / std::max<std::int64_t>(1, per_depth)));
  return std::min(chunk, Do);
}

// 3D patch matrix for output depths [d0, d0+dn):
// col[((c*kd + dk)*kh + i)*kw + j][d*Ho*Wo + ho*Wo + wo].
inline void vol2col_block(const float* x, int C, int D, int H, int W, int kd, int kh, int kw,
                          int stride, int pad, int d0, int dn, int Ho, int Wo, float* col) {
  const int P = Ho * Wo;
  const std::int64_t ld = static_cast<std::int64_t>(dn) * P;
  for (int c = 0; c < C; ++c) {
    for (int dk = 0; dk < kd; ++dk) {
      for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
          float* row = col + ((static_cast<std::int64_t>(c) * kd + dk) * kh * kw + i * kw + j) * ld;
          for (int d = 0; d < dn; ++d) {
            const int z = (d0 + d) * stride - pad + dk;
            float* seg = row + static_cast<std::int64_t>(d) * P;
            if (z < 0 || z >= D) {
              std::fill(seg, seg + P, 0.0f);
              continue;
            }
            const float* plane = x + (static_cast<std::int64_t>(c) * D + z) * H * W;
            for (int ho = 0; ho < Ho; ++ho) {
              const int y = ho * stride - pad + i;
              if (y < 0 || y >= H) {
                std::fill(seg + ho * Wo, seg + (ho + 1) * Wo, 0.0f);
                continue;
              }
              for (int wo = 0; wo < Wo; ++wo) {
                const int xx = wo * stride - pad + j;
                seg[ho * Wo + wo] = (xx >= 0 && xx < W) ? plane[y * W + xx] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

inline void col2vol_block_accumulate(const float* col, int C, int D, int H, int W, int kd, int kh,
                                     int kw, int stride, int pad, int d0, int dn, int Ho, int Wo,
                                     float* gx) {
  const int P = Ho * Wo;
  const std::int64_t ld = static_cast<std::int64_t>(dn) * P;
  for (int c = 0; c < C; ++c) {
    for (int dk = 0; dk < kd; ++dk) {
      for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
          const float* row =
              col + ((static_cast<std::int64_t>(c) * kd + dk) * kh * kw + i * kw + j) * ld;
          for (int d = 0; d < dn; ++d) {
            const int z = (d0 + d) * stride - pad + dk;
            if (z < 0 || z >= D) continue;
            float* plane = gx + (static_cast<std::int64_t>(c) * D + z) * H * W;
            const float* seg = row + static_cast<std::int64_t>(d) * P;
            for (int ho = 0; ho < Ho; ++ho) {
              const int y = ho * stride - pad + i;
              if (y < 0 || y >= H) continue;
              for (int wo = 0; wo < Wo; ++wo) {
                const int xx = wo * stride - pad + j;
                if (xx >= 0 && xx < W) plane[y * W + xx] += seg[ho * Wo + wo];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: input [C,H,W] or [N,C,H,W], kernels [F,C,kh,kw], bias [F].
// Cross-correlation (no kernel flip); H' = floor((H+2p-kh)/stride)+1.
// ---------------------------------------------------------------------------
inline Tensor conv2d(Graph* g, const Tensor& x, const Tensor& kernels, const Tensor& bias,
                     int stride, int padding, ConvAlgo algo = ConvAlgo::im2col) {
  require(x.rank() == 3 || x.rank() == 4, Errc::shape_mismatch,
          "conv2d input must be [C,H,W] or [N,C,H,W]");
  require(kernels.rank() == 4, Errc::shape_mismatch, "conv2d kernels must be [F,C,kh,kw]");
  require(stride >= 1, Errc::shape_mismatch, "stride must be >= 1");
  require(padding >= 0, Errc::shape_mismatch, "padding must be >= 0");
  const bool batched = x.rank() == 4;
  const int N = batched ? x.shape()[0] : 1;
  const int C = x.shape()[batched ? 1 : 0];
  const int H = x.shape()[batched ? 2 : 1];
  const int W = x.shape()[batched ? 3 : 2];
  const int F = kernels.shape()[0];
  const int kh = kernels.shape()[2];
  const int kw = kernels.shape()[3];
  require(kernels.shape()[1] == C, Errc::shape_mismatch, "kernel channel count != input channels");
  require(kh <= H + 2 * padding && kw <= W + 2 * padding, Errc::shape_mismatch,
          "kernel larger than padded input");
  if (bias.defined()) {
    require(bias.size() == F, Errc::shape_mismatch, "bias length != filter count");
  }
  const int Ho = detail::conv_out_extent(H, kh, stride, padding);
  const int Wo = detail::conv_out_extent(W, kw, stride, padding);
  require(Ho > 0 && Wo > 0, Errc::shape_mismatch, "empty conv output");

  const int K = C * kh * kw;
  const int P = Ho * Wo;
  std::vector<float> out(static_cast<std::size_t>(N) * F * P, 0.0f);

  if (algo == ConvAlgo::im2col) {
    std::vector<float> col(static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
      const float* xn = x.data() + static_cast<std::int64_t>(n) * C * H * W;
      detail::im2col(xn, C, H, W, kh, kw, stride, padding, Ho, Wo, col.data());
      detail::gemm_nn(kernels.data(), col.data(),
                      out.data() + static_cast<std::int64_t>(n) * F * P, F, K, P, false);
    }
  } else {
    for (int n = 0; n < N; ++n) {
      const float* xn = x.data() + static_cast<std::int64_t>(n) * C * H * W;
      float* on = out.data() + static_cast<std::int64_t>(n) * F * P;
      for (int f = 0; f < F; ++f) {
        const float* kf = kernels.data() + static_cast<std::int64_t>(f) * K;
        for (int ho = 0; ho < Ho; ++ho) {
          for (int wo = 0; wo < Wo; ++wo) {
            float acc = 0.0f;
            for (int c = 0; c < C; ++c) {
              for (int i = 0; i < kh; ++i) {
                const int y = ho * stride - padding + i;
                if (y < 0 || y >= H) continue;
                for (int j = 0; j < kw; ++j) {
                  const int xx = wo * stride - padding + j;
                  if (xx < 0 || xx >= W) continue;
                  acc += kf[(c * kh + i) * kw + j] *
                         xn[(static_cast<std::int64_t>(c) * H + y) * W + xx];
                }
              }
            }
            on[(static_cast<std::int64_t>(f) * Ho + ho) * Wo + wo] = acc;
          }
        }
      }
    }
  }
  if (bias.defined()) {
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f) {
        float* dst = out.data() + (static_cast<std::int64_t>(n) * F + f) * P;
        const float b = bias.data()[f];
        for (int p = 0; p < P; ++p) dst[p] += b;
      }
  }

  Shape out_shape = batched ? Shape{N, F, Ho, Wo} : Shape{F, Ho, Wo};
  if (!g) return Tensor(std::move(out_shape), std::move(out));

  const int xid = g->leaf(x);
  const int wid = g->leaf(kernels);
  const int bid = bias.defined() ? g->leaf(bias) : -1;
  auto xbuf = x.buffer();
  auto wbuf = kernels.buffer();
  return g->op(
      std::move(out_shape), std::move(out), {&x, &kernels},
      [=, has_bias = bias.defined()](Graph& gr, const std::vector<float>& gout) {
        std::vector<float>& gx = gr.grad_buffer(xid, static_cast<std::int64_t>(N) * C * H * W);
        std::vector<float>& gw = gr.grad_buffer(wid, static_cast<std::int64_t>(F) * K);
        std::vector<float> col(static_cast<std::size_t>(K) * P);
        std::vector<float> gcol(static_cast<std::size_t>(K) * P);
        for (int n = 0; n < N; ++n) {
          const float* xn = xbuf->data() + static_cast<std::int64_t>(n) * C * H * W;
          const float* gon = gout.data() + static_cast<std::int64_t>(n) * F * P;
          detail::im2col(xn, C, H, W, kh, kw, stride, padding, Ho, Wo, col.data());
          detail::gemm_nt(gon, col.data(), gw.data(), F, P, K, true);
          detail::gemm_tn(wbuf->data(), gon, gcol.data(), K, F, P, false);
          detail::col2im_accumulate(gcol.data(), C, H, W, kh, kw, stride, padding, Ho, Wo,
                                    gx.data() + static_cast<std::int64_t>(n) * C * H * W);
        }
        if (has_bias) {
          std::vector<float>& gb = gr.grad_buffer(bid, F);
          for (int n = 0; n < N; ++n)
            for (int f = 0; f < F; ++f) {
              double acc = 0.0;
              const float* gon = gout.data() + (static_cast<std::int64_t>(n) * F + f) * P;
              for (int p = 0; p < P; ++p) acc += gon[p];
              gb[static_cast<std::size_t>(f)] += static_cast<float>(acc);
            }
        }
      });
}

// ---------------------------------------------------------------------------
// conv3d: input [C,D,H,W] or [N,C,D,H,W], kernels [F,C,kd,kh,kw], bias [F].
// ---------------------------------------------------------------------------
inline Tensor conv3d(Graph* g, const Tensor& x, const Tensor& kernels, const Tensor& bias,
                     int stride, int padding) {
  require(x.rank() == 4 || x.rank() == 5, Errc::shape_mismatch,
          "conv3d input must be [C,D,H,W] or [N,C,D,H,W]");
  require(kernels.rank() == 5, Errc::shape_mismatch, "conv3d kernels must be [F,C,kd,kh,kw]");
  require(stride >= 1 && padding >= 0, Errc::shape_mismatch, "bad stride/padding");
  const bool batched = x.rank() == 5;
  const int N = batched ? x.shape()[0] : 1;
  const int C = x.shape()[batched ? 1 : 0];
  const int D = x.shape()[batched ? 2 : 1];
  const int H = x.shape()[batched ? 3 : 2];
  const int W = x.shape()[batched ? 4 : 3];
  const int F = kernels.shape()[0];
  const int kd = kernels.shape()[2];
  const int kh = kernels.shape()[3];
  const int kw = kernels.shape()[4];
  require(kernels.shape()[1] == C, Errc::shape_mismatch, "kernel channel count != input channels");
  require(kd <= D + 2 * padding && kh <= H + 2 * padding && kw <= W + 2 * padding,
          Errc::shape_mismatch, "kernel larger than padded input");
  if (bias.defined()) require(bias.size() == F, Errc::shape_mismatch, "bias length != filters");
  const int Do = detail::conv_out_extent(D, kd, stride, padding);
  const int Ho = detail::conv_out_extent(H, kh, stride, padding);
  const int Wo = detail::conv_out_extent(W, kw, stride, padding);
  require(Do > 0 && Ho > 0 && Wo > 0, Errc::shape_mismatch, "empty conv output");

  const int K = C * kd * kh * kw;
  const int P = Ho * Wo;
  // Depth slices are stacked into one patch matrix per chunk so the GEMM has a
  // long inner dimension; chunk size bounds the scratch buffer.
  const int chunk = detail::conv3d_depth_chunk(K, P, Do);
  std::vector<float> out(static_cast<std::size_t>(N) * F * Do * P, 0.0f);
  {
    std::vector<float> col(static_cast<std::size_t>(K) * chunk * P);
    std::vector<float> block(static_cast<std::size_t>(F) * chunk * P);
    for (int n = 0; n < N; ++n) {
      const float* xn = x.data() + static_cast<std::int64_t>(n) * C * D * H * W;
      for (int d0 = 0; d0 < Do; d0 += chunk) {
        const int dn = std::min(chunk, Do - d0);
        detail::vol2col_block(xn, C, D, H, W, kd, kh, kw, stride, padding, d0, dn, Ho, Wo,
                              col.data());
        detail::gemm_nn(kernels.data(), col.data(), block.data(), F, K, dn * P, false);
        for (int f = 0; f < F; ++f) {
          for (int d = 0; d < dn; ++d) {
            float* dst = out.data() + ((static_cast<std::int64_t>(n) * F + f) * Do + d0 + d) * P;
            const float* src = block.data() + (static_cast<std::int64_t>(f) * dn + d) * P;
            const float b = bias.defined() ? bias.data()[f] : 0.0f;
            for (int p = 0; p < P; ++p) dst[p] = src[p] + b;
          }
        }
      }
    }
  }

  Shape out_shape = batched ? Shape{N, F, Do, Ho, Wo} : Shape{F, Do, Ho, Wo};
  if (!g) return Tensor(std::move(out_shape), std::move(out));

  const int xid = g->leaf(x);
  const int wid = g->leaf(kernels);
  const int bid = bias.defined() ? g->leaf(bias) : -1;
  auto xbuf = x.buffer();
  auto wbuf = kernels.buffer();
  return g->op(
      std::move(out_shape), std::move(out), {&x, &kernels},
      [=, has_bias = bias.defined()](Graph& gr, const std::vector<float>& gout) {
        std::vector<float>& gx =
            gr.grad_buffer(xid, static_cast<std::int64_t>(N) * C * D * H * W);
        std::vector<float>& gw = gr.grad_buffer(wid, static_cast<std::int64_t>(F) * K);
        std::vector<float> col(static_cast<std::size_t>(K) * chunk * P);
        std::vector<float> gcol(static_cast<std::size_t>(K) * chunk * P);
        std::vector<float> gblock(static_cast<std::size_t>(F) * chunk * P);
        for (int n = 0; n < N; ++n) {
          const float* xn = xbuf->data() + static_cast<std::int64_t>(n) * C * D * H * W;
          float* gxn = gx.data() + static_cast<std::int64_t>(n) * C * D * H * W;
          for (int d0 = 0; d0 < Do; d0 += chunk) {
            const int dn = std::min(chunk, Do - d0);
            for (int f = 0; f < F; ++f) {
              for (int d = 0; d < dn; ++d) {
                const float* src =
                    gout.data() + ((static_cast<std::int64_t>(n) * F + f) * Do + d0 + d) * P;
                std::copy(src, src + P,
                          gblock.data() + (static_cast<std::int64_t>(f) * dn + d) * P);
              }
            }
            detail::vol2col_block(xn, C, D, H, W, kd, kh, kw, stride, padding, d0, dn, Ho, Wo,
                                  col.data());
            detail::gemm_nt(gblock.data(), col.data(), gw.data(), F, dn * P, K, true);
            detail::gemm_tn(wbuf->data(), gblock.data(), gcol.data(), K, F, dn * P, false);
            detail::col2vol_block_accumulate(gcol.data(), C, D, H, W, kd, kh, kw, stride, padding,
                                             d0, dn, Ho, Wo, gxn);
          }
        }
        if (has_bias) {
          std::vector<float>& gb = gr.grad_buffer(bid, F);
          for (int n = 0; n < N; ++n)
            for (int f = 0; f < F; ++f) {
              double acc = 0.0;
              const float* src =
                  gout.data() + (static_cast<std::int64_t>(n) * F + f) * (Do * P);
              for (int p = 0; p < Do * P; ++p) acc += src[p];
              gb[static_cast<std::size_t>(f)] += static_cast<float>(acc);
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Max pooling. Gradient routes to the argmax only; ties break to the lowest
// linear index (first maximum in scan order). Per-axis windows support the 3D
// conversion of 2D pools; the isotropic maxpool() entry point covers rank 2/3.
// ---------------------------------------------------------------------------
namespace detail {

struct PoolPlan {
  Shape out_shape;
  std::vector<std::int64_t> argmax;  // absolute input offsets, one per output cell
  std::vector<float> out;
};

inline PoolPlan maxpool_nd(const Tensor& x, bool batched, const std::vector<int>& windows,
                           const std::vector<int>& strides) {
  const int spatial = static_cast<int>(windows.size());
  const int N = batched ? x.shape()[0] : 1;
  const int C = x.shape()[batched ? 1 : 0];
  std::vector<int> in(spatial), out(spatial);
  std::int64_t in_plane = 1, out_plane = 1;
  for (int a = 0; a < spatial; ++a) {
    in[a] = x.shape()[(batched ? 2 : 1) + a];
    require(windows[a] >= 1 && windows[a] <= in[a], Errc::shape_mismatch,
            "pool window exceeds extent");
    require(strides[a] >= 1, Errc::shape_mismatch, "pool stride must be >= 1");
    out[a] = (in[a] - windows[a]) / strides[a] + 1;
    in_plane *= in[a];
    out_plane *= out[a];
  }
  PoolPlan plan;
  plan.out_shape = batched ? Shape{N, C} : Shape{C};
  for (int a = 0; a < spatial; ++a) plan.out_shape.push_back(out[a]);
  plan.out.resize(static_cast<std::size_t>(N) * C * out_plane);
  plan.argmax.resize(plan.out.size());

  std::vector<int> oc(spatial, 0);
  std::vector<int> kc(spatial, 0);
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const float* src = x.data() + nc * in_plane;
    float* dst = plan.out.data() + nc * out_plane;
    std::int64_t* amax = plan.argmax.data() + nc * out_plane;
    std::fill(oc.begin(), oc.end(), 0);
    for (std::int64_t o = 0; o < out_plane; ++o) {
      // scan the window in row-major order, first max wins
      float best = -std::numeric_limits<float>::infinity();
      std::int64_t best_idx = -1;
      std::fill(kc.begin(), kc.end(), 0);
      while (true) {
        std::int64_t idx = 0;
        for (int a = 0; a < spatial; ++a) idx = idx * in[a] + (oc[a] * strides[a] + kc[a]);
        const float v = src[idx];
        if (v > best) {
          best = v;
          best_idx = idx;
        }
        int a = spatial - 1;
        while (a >= 0 && ++kc[a] == windows[a]) kc[a--] = 0;
        if (a < 0) break;
      }
      dst[o] = best;
      amax[o] = nc * in_plane + best_idx;
      int a = spatial - 1;
      while (a >= 0 && ++oc[a] == out[a]) oc[a--] = 0;
    }
  }
  return plan;
}

inline Tensor maxpool_record(Graph* g, const Tensor& x, bool batched,
                             const std::vector<int>& windows, const std::vector<int>& strides) {
  PoolPlan plan = maxpool_nd(x, batched, windows, strides);
  if (!g) return Tensor(std::move(plan.out_shape), std::move(plan.out));
  const int xid = g->leaf(x);
  const std::int64_t in_size = x.size();
  auto argmax = std::make_shared<std::vector<std::int64_t>>(std::move(plan.argmax));
  return g->op(std::move(plan.out_shape), std::move(plan.out), {&x},
               [xid, in_size, argmax](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gx = gr.grad_buffer(xid, in_size);
                 for (std::size_t o = 0; o < gout.size(); ++o)
                   gx[static_cast<std::size_t>((*argmax)[o])] += gout[o];
               });
}

}  // namespace detail

inline Tensor maxpool2d(Graph* g, const Tensor& x, int window, int stride) {
  require(x.rank() == 3 || x.rank() == 4, Errc::shape_mismatch,
          "maxpool2d input must be [C,H,W] or [N,C,H,W]");
  return detail::maxpool_record(g, x, x.rank() == 4, {window, window}, {stride, stride});
}

inline Tensor maxpool3d(Graph* g, const Tensor& x, std::array<int, 3> window,
                        std::array<int, 3> stride) {
  require(x.rank() == 4 || x.rank() == 5, Errc::shape_mismatch,
          "maxpool3d input must be [C,D,H,W] or [N,C,D,H,W]");
  return detail::maxpool_record(g, x, x.rank() == 5, {window[0], window[1], window[2]},
                                {stride[0], stride[1], stride[2]});
}

inline Tensor maxpool(Graph* g, const Tensor& x, int window, int stride, int rank) {
  require(rank == 2 || rank == 3, Errc::shape_mismatch, "maxpool rank must be 2 or 3");
  if (rank == 2) return maxpool2d(g, x, window, stride);
  return maxpool3d(g, x, {window, window, window}, {stride, stride, stride});
}

// ---------------------------------------------------------------------------
// Batch normalization over [N,C,...]: per-channel statistics across batch and
// spatial positions. Train mode requires N >= 2 and updates the running stats
// in place: running = (1-momentum)*running + momentum*batch.
// ---------------------------------------------------------------------------
inline Tensor batchnorm(Graph* g, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        Tensor& running_mean, Tensor& running_var, bool train,
                        float momentum = 0.1f, float eps = 1e-5f) {
  require(x.rank() >= 2, Errc::shape_mismatch, "batchnorm input must be [N,C,...]");
  const int N = x.shape()[0];
  const int C = x.shape()[1];
  require(gamma.size() == C && beta.size() == C, Errc::shape_mismatch,
          "gamma/beta length != channel count");
  require(running_mean.size() == C && running_var.size() == C, Errc::shape_mismatch,
          "running stats length != channel count");
  if (train) require(N >= 2, Errc::degenerate_batch, "batchnorm train mode needs batch >= 2");
  std::int64_t S = 1;
  for (int a = 2; a < x.rank(); ++a) S *= x.shape()[a];
  const std::int64_t m = static_cast<std::int64_t>(N) * S;

  std::vector<float> mean(C), var(C);
  if (train) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * S;
        for (std::int64_t s = 0; s < S; ++s) acc += src[s];
      }
      const double mu = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * S;
        for (std::int64_t s = 0; s < S; ++s) {
          const double d = src[s] - mu;
          vacc += d * d;
        }
      }
      mean[c] = static_cast<float>(mu);
      var[c] = static_cast<float>(vacc / static_cast<double>(m));
      running_mean.data()[c] = (1.0f - momentum) * running_mean.data()[c] + momentum * mean[c];
      running_var.data()[c] = (1.0f - momentum) * running_var.data()[c] + momentum * var[c];
    }
  } else {
    std::copy(running_mean.data(), running_mean.data() + C, mean.begin());
    std::copy(running_var.data(), running_var.data() + C, var.begin());
  }

  std::vector<float> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0f / std::sqrt(var[c] + eps);

  std::vector<float> out(static_cast<std::size_t>(x.size()));
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * S;
      float* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * S;
      const float gm = gamma.data()[c], bt = beta.data()[c];
      const float mu = mean[c], is = inv_std[c];
      for (std::int64_t s = 0; s < S; ++s) dst[s] = gm * (src[s] - mu) * is + bt;
    }
  }

  if (!g) return Tensor(x.shape(), std::move(out));

  const int xid = g->leaf(x);
  const int gid = g->leaf(gamma);
  const int bid = g->leaf(beta);
  auto xbuf = x.buffer();
  auto gbuf = gamma.buffer();
  auto mean_s = std::make_shared<std::vector<float>>(std::move(mean));
  auto istd_s = std::make_shared<std::vector<float>>(std::move(inv_std));
  return g->op(x.shape(), std::move(out), {&x, &gamma, &beta},
               [=](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gx = gr.grad_buffer(xid, static_cast<std::int64_t>(N) * C * S);
                 std::vector<float>& gg = gr.grad_buffer(gid, C);
                 std::vector<float>& gb = gr.grad_buffer(bid, C);
                 for (int c = 0; c < C; ++c) {
                   const float mu = (*mean_s)[c], is = (*istd_s)[c];
                   const float gm = gbuf->data()[c];
                   double sum_gy = 0.0, sum_gy_xhat = 0.0;
                   for (int n = 0; n < N; ++n) {
                     const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * S;
                     for (std::int64_t s = 0; s < S; ++s) {
                       const float gy = gout[static_cast<std::size_t>(base + s)];
                       const float xhat = (xbuf->data()[base + s] - mu) * is;
                       sum_gy += gy;
                       sum_gy_xhat += static_cast<double>(gy) * xhat;
                     }
                   }
                   gg[c] += static_cast<float>(sum_gy_xhat);
                   gb[c] += static_cast<float>(sum_gy);
                   if (train) {
                     const float mean_gy = static_cast<float>(sum_gy / static_cast<double>(m));
                     const float mean_gy_xhat =
                         static_cast<float>(sum_gy_xhat / static_cast<double>(m));
                     for (int n = 0; n < N; ++n) {
                       const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * S;
                       for (std::int64_t s = 0; s < S; ++s) {
                         const float gy = gout[static_cast<std::size_t>(base + s)];
                         const float xhat = (xbuf->data()[base + s] - mu) * is;
                         gx[static_cast<std::size_t>(base + s)] +=
                             gm * is * (gy - mean_gy - xhat * mean_gy_xhat);
                       }
                     }
                   } else {
                     for (int n = 0; n < N; ++n) {
                       const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * S;
                       for (std::int64_t s = 0; s < S; ++s)
                         gx[static_cast<std::size_t>(base + s)] +=
                             gm * is * gout[static_cast<std::size_t>(base + s)];
                     }
                   }
                 }
               });
}

inline Tensor relu(Graph* g, const Tensor& x) {
  std::vector<float> out(static_cast<std::size_t>(x.size()));
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] > 0.0f ? x.data()[i] : 0.0f;
  if (!g) return Tensor(x.shape(), std::move(out));
  const int xid = g->leaf(x);
  auto xbuf = x.buffer();
  const std::int64_t n = x.size();
  return g->op(x.shape(), std::move(out), {&x},
               [xid, xbuf, n](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gx = gr.grad_buffer(xid, n);
                 if (gr.guided_relu()) {
                   // guided rule: pass only positive gradients on positive inputs
                   for (std::int64_t i = 0; i < n; ++i)
                     if (xbuf->data()[i] > 0.0f && gout[i] > 0.0f) gx[i] += gout[i];
                 } else {
                   for (std::int64_t i = 0; i < n; ++i)
                     if (xbuf->data()[i] > 0.0f) gx[i] += gout[i];
                 }
               });
}

// Affine map y = x*W^T + b with x [N,F] or [F], W [U,F], b [U].
inline Tensor dense(Graph* g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.rank() == 1 || x.rank() == 2, Errc::shape_mismatch, "dense input must be [F] or [N,F]");
  require(weight.rank() == 2, Errc::shape_mismatch, "dense weight must be [U,F]");
  const bool batched = x.rank() == 2;
  const int N = batched ? x.shape()[0] : 1;
  const int F = x.shape()[batched ? 1 : 0];
  const int U = weight.shape()[0];
  require(weight.shape()[1] == F, Errc::shape_mismatch,
          "dense weight expects " + std::to_string(weight.shape()[1]) + " features, got " +
              std::to_string(F));
  if (bias.defined()) require(bias.size() == U, Errc::shape_mismatch, "bias length != units");

  std::vector<float> out(static_cast<std::size_t>(N) * U);
  detail::gemm_nt(x.data(), weight.data(), out.data(), N, F, U, false);
  if (bias.defined()) {
    for (int n = 0; n < N; ++n)
      for (int u = 0; u < U; ++u) out[static_cast<std::size_t>(n) * U + u] += bias.data()[u];
  }

  Shape out_shape = batched ? Shape{N, U} : Shape{U};
  if (!g) return Tensor(std::move(out_shape), std::move(out));
  const int xid = g->leaf(x);
  const int wid = g->leaf(weight);
  const int bid = bias.defined() ? g->leaf(bias) : -1;
  auto xbuf = x.buffer();
  auto wbuf = weight.buffer();
  return g->op(std::move(out_shape), std::move(out), {&x, &weight},
               [=, has_bias = bias.defined()](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gx = gr.grad_buffer(xid, static_cast<std::int64_t>(N) * F);
                 std::vector<float>& gw = gr.grad_buffer(wid, static_cast<std::int64_t>(U) * F);
                 detail::gemm_nn(gout.data(), wbuf->data(), gx.data(), N, U, F, true);
                 detail::gemm_tn(gout.data(), xbuf->data(), gw.data(), U, N, F, true);
                 if (has_bias) {
                   std::vector<float>& gb = gr.grad_buffer(bid, U);
                   for (int u = 0; u < U; ++u) {
                     double acc = 0.0;
                     for (int n = 0; n < N; ++n) acc += gout[static_cast<std::size_t>(n) * U + u];
                     gb[static_cast<std::size_t>(u)] += static_cast<float>(acc);
                   }
                 }
               });
}

// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
// Identity when not training or p == 0. Mask consumption is the only rng use,
// so a given (seed, call order) is bit-reproducible.
inline Tensor dropout(Graph* g, const Tensor& x, float p, Rng& rng, bool train) {
  require(p >= 0.0f && p < 1.0f, Errc::invalid_drop_probability,
          "drop probability must be in [0,1)");
  if (!train || p == 0.0f) return x;
  const float scale = 1.0f / (1.0f - p);
  auto mask = std::make_shared<std::vector<float>>(static_cast<std::size_t>(x.size()));
  std::vector<float> out(static_cast<std::size_t>(x.size()));
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const float m = rng.uniform() < static_cast<double>(p) ? 0.0f : scale;
    (*mask)[static_cast<std::size_t>(i)] = m;
    out[static_cast<std::size_t>(i)] = x.data()[i] * m;
  }
  if (!g) return Tensor(x.shape(), std::move(out));
  const int xid = g->leaf(x);
  const std::int64_t n = x.size();
  return g->op(x.shape(), std::move(out), {&x},
               [xid, mask, n](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gx = gr.grad_buffer(xid, n);
                 for (std::int64_t i = 0; i < n; ++i) gx[i] += gout[i] * (*mask)[i];
               });
}

inline Tensor reshape(Graph* g, const Tensor& x, Shape shape) {
  if (!g) return x.reshaped(std::move(shape));
  const int xid = g->leaf(x);
  const std::int64_t n = x.size();
  return g->alias_op(x, std::move(shape),
                     [xid, n](Graph& gr, const std::vector<float>& gout) {
                       gr.accumulate(xid, gout.data(), n);
                     });
}

// Collapses everything after the batch axis; rank-<=1 inputs pass through.
inline Tensor flatten(Graph* g, const Tensor& x, bool batched) {
  if (batched) {
    const int N = x.shape()[0];
    return reshape(g, x, {N, static_cast<int>(x.size() / N)});
  }
  return reshape(g, x, {static_cast<int>(x.size())});
}

inline Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch, "add shape mismatch");
  std::vector<float> out(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  if (!g) return Tensor(a.shape(), std::move(out));
  const int aid = g->leaf(a);
  const int bid = g->leaf(b);
  const std::int64_t n = a.size();
  return g->op(a.shape(), std::move(out), {&a, &b},
               [aid, bid, n](Graph& gr, const std::vector<float>& gout) {
                 gr.accumulate(aid, gout.data(), n);
                 gr.accumulate(bid, gout.data(), n);
               });
}

inline Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch, "mul shape mismatch");
  std::vector<float> out(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  if (!g) return Tensor(a.shape(), std::move(out));
  const int aid = g->leaf(a);
  const int bid = g->leaf(b);
  auto abuf = a.buffer();
  auto bbuf = b.buffer();
  const std::int64_t n = a.size();
  return g->op(a.shape(), std::move(out), {&a, &b},
               [=](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& ga = gr.grad_buffer(aid, n);
                 std::vector<float>& gb = gr.grad_buffer(bid, n);
                 for (std::int64_t i = 0; i < n; ++i) {
                   ga[i] += gout[i] * bbuf->data()[i];
                   gb[i] += gout[i] * abuf->data()[i];
                 }
               });
}

inline Tensor sum(Graph* g, const Tensor& x) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  if (!g) return Tensor::scalar(static_cast<float>(acc));
  const int xid = g->leaf(x);
  const std::int64_t n = x.size();
  return g->op({1}, {static_cast<float>(acc)}, {&x},
               [xid, n](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gx = gr.grad_buffer(xid, n);
                 for (std::int64_t i = 0; i < n; ++i) gx[i] += gout[0];
               });
}

// Mean softmax cross-entropy: -log softmax(logits)[label], averaged over the
// batch. Log-sum-exp is computed with the max subtracted, accumulated in double.
inline Tensor softmax_cross_entropy(Graph* g, const Tensor& logits,
                                    const std::vector<int>& labels) {
  require(logits.rank() == 1 || logits.rank() == 2, Errc::shape_mismatch,
          "logits must be [K] or [N,K]");
  const bool batched = logits.rank() == 2;
  const int N = batched ? logits.shape()[0] : 1;
  const int K = logits.shape()[batched ? 1 : 0];
  require(static_cast<int>(labels.size()) == N, Errc::shape_mismatch,
          "label count != batch size");
  for (int lbl : labels)
    require(lbl >= 0 && lbl < K, Errc::shape_mismatch, "label out of range");

  auto probs = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * K);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const float* z = logits.data() + static_cast<std::int64_t>(n) * K;
    float zmax = z[0];
    for (int k = 1; k < K; ++k) zmax = std::max(zmax, z[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z[k]) - zmax);
    const double lse = std::log(denom) + zmax;
    for (int k = 0; k < K; ++k)
      (*probs)[static_cast<std::size_t>(n) * K + k] =
          static_cast<float>(std::exp(static_cast<double>(z[k]) - lse));
    total += lse - static_cast<double>(z[labels[static_cast<std::size_t>(n)]]);
  }
  const float loss = static_cast<float>(total / static_cast<double>(N));

  if (!g) return Tensor::scalar(loss);
  const int zid = g->leaf(logits);
  auto labels_s = std::make_shared<std::vector<int>>(labels);
  return g->op({1}, {loss}, {&logits},
               [zid, probs, labels_s, N, K](Graph& gr, const std::vector<float>& gout) {
                 std::vector<float>& gz = gr.grad_buffer(zid, static_cast<std::int64_t>(N) * K);
                 const float scale = gout[0] / static_cast<float>(N);
                 for (int n = 0; n < N; ++n) {
                   for (int k = 0; k < K; ++k) {
                     const std::size_t i = static_cast<std::size_t>(n) * K + k;
                     const float onehot = k == (*labels_s)[static_cast<std::size_t>(n)] ? 1.0f : 0.0f;
                     gz[i] += scale * ((*probs)[i] - onehot);
                   }
                 }
               });
}

}  // namespace voxcam
