#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/nn.hpp"
#include "voxcam/volume.hpp"

// Gradient-weighted class activation mapping over trained models, plus guided
// backpropagation and their pointwise product. The class signal is the raw
// target logit: its gradient is seeded one-hot (non-target entries zero) and
// pushed back to the rectified feature maps of the last convolutional block.

namespace voxcam {

enum class RelevanceMode { gradcam2d_replicate, gradcam2d_slicegrad, gradcam3d, guided_gradcam };

inline const char* relevance_mode_name(RelevanceMode m) {
  switch (m) {
    case RelevanceMode::gradcam2d_replicate: return "gradcam2d_replicate";
    case RelevanceMode::gradcam2d_slicegrad: return "gradcam2d_slicegrad";
    case RelevanceMode::gradcam3d: return "gradcam3d";
    case RelevanceMode::guided_gradcam: return "guided_gradcam";
  }
  return "?";
}

// Nonnegative relevance volume aligned voxel-for-voxel with its input volume;
// max-normalized to [0,1] (an all-zero map stays all-zero).
struct Heatmap3D {
  Dims3 dims{0, 0, 0};
  std::vector<float> data;  // x-fastest, like BrainVolume
  int target_class = 0;
  RelevanceMode source_mode = RelevanceMode::gradcam2d_replicate;

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }

  float max_value() const {
    float m = 0.0f;
    for (float v : data) m = std::max(m, v);
    return m;
  }

  void normalize() {
    const float m = max_value();
    if (m <= 0.0f) return;
    for (auto& v : data) v /= m;
  }

  BrainVolume to_volume(const std::array<double, 3>& spacing, const Affine& affine) const {
    return BrainVolume(dims, spacing, affine, data);
  }
};

namespace detail {

// Bilinear upsample with edge clamping (half-pixel alignment).
inline std::vector<float> upsample_bilinear(const std::vector<float>& src, int sh, int sw, int dh,
                                            int dw) {
  std::vector<float> out(static_cast<std::size_t>(dh) * dw);
  const double sy = static_cast<double>(sh) / dh;
  const double sx = static_cast<double>(sw) / dw;
  for (int y = 0; y < dh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src[y0 * sw + x0] + wx * src[y0 * sw + x1];
      const double bot = (1.0 - wx) * src[y1 * sw + x0] + wx * src[y1 * sw + x1];
      out[static_cast<std::size_t>(y) * dw + x] = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

inline std::vector<float> upsample_trilinear(const std::vector<float>& src, int sd, int sh, int sw,
                                             int dd, int dh, int dw) {
  std::vector<float> out(static_cast<std::size_t>(dd) * dh * dw);
  const double sz = static_cast<double>(sd) / dd;
  const double sy = static_cast<double>(sh) / dh;
  const double sx = static_cast<double>(sw) / dw;
  for (int z = 0; z < dd; ++z) {
    double fz = std::clamp((z + 0.5) * sz - 0.5, 0.0, static_cast<double>(sd - 1));
    const int z0 = static_cast<int>(fz);
    const int z1 = std::min(z0 + 1, sd - 1);
    const double wz = fz - z0;
    for (int y = 0; y < dh; ++y) {
      double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, sh - 1);
      const double wy = fy - y0;
      for (int x = 0; x < dw; ++x) {
        double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, sw - 1);
        const double wx = fx - x0;
        auto v = [&](int zz, int yy, int xx) {
          return static_cast<double>(src[(static_cast<std::size_t>(zz) * sh + yy) * sw + xx]);
        };
        const double c00 = (1 - wx) * v(z0, y0, x0) + wx * v(z0, y0, x1);
        const double c01 = (1 - wx) * v(z0, y1, x0) + wx * v(z0, y1, x1);
        const double c10 = (1 - wx) * v(z1, y0, x0) + wx * v(z1, y0, x1);
        const double c11 = (1 - wx) * v(z1, y1, x0) + wx * v(z1, y1, x1);
        const double c0 = (1 - wy) * c00 + wy * c01;
        const double c1 = (1 - wy) * c10 + wy * c11;
        out[(static_cast<std::size_t>(z) * dh + y) * dw + x] =
            static_cast<float>((1 - wz) * c0 + wz * c1);
      }
    }
  }
  return out;
}

// Index of the last conv layer and of its rectified activation: the conv
// output extended through any immediately following batchnorm/relu.
struct TargetLayer {
  int conv_index = -1;
  int activation_index = -1;
};

inline TargetLayer find_target_layer(const ArchitectureSpec& spec) {
  TargetLayer t;
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
    const LayerKind k = spec.layers[i].kind;
    if (k == LayerKind::conv2d || k == LayerKind::conv3d) t.conv_index = i;
  }
  require(t.conv_index >= 0, Errc::no_conv_layer, "model has no convolutional layer");
  t.activation_index = t.conv_index;
  for (int i = t.conv_index + 1; i < static_cast<int>(spec.layers.size()); ++i) {
    const LayerKind k = spec.layers[i].kind;
    if (k == LayerKind::batchnorm || k == LayerKind::relu)
      t.activation_index = i;
    else
      break;
  }
  return t;
}

struct CamComputation {
  std::vector<float> coarse;          // ReLU(sum_k alpha_k A_k) on the conv grid
  Shape feature_shape;                // [F,(D),H,W]
  std::vector<float> input_gradient;  // d y_c / d input, input-shaped
};

inline CamComputation grad_cam_core(Model& model, const Tensor& input, int target_class) {
  require(model.mode == Mode::eval, Errc::not_eval_mode, "grad_cam requires eval mode");
  const TargetLayer target = find_target_layer(model.spec);

  Graph g;
  std::vector<Tensor> trace;
  Tensor x = input;
  Tensor logits = forward(model, x, &g, &trace);
  require(target_class >= 0 && target_class < static_cast<int>(logits.size()),
          Errc::shape_mismatch, "target class out of range");

  // one-hot seed on the raw logits: gradients of non-target classes are zero
  std::vector<float> seed(static_cast<std::size_t>(logits.size()), 0.0f);
  seed[static_cast<std::size_t>(target_class)] = 1.0f;
  g.backward(logits, std::move(seed));

  const Tensor& activation = trace[static_cast<std::size_t>(target.activation_index)];
  require(g.reached(activation), Errc::disconnected_tensor,
          "target activation unreachable from logits");
  const std::vector<float> act_grad = g.grad(activation);

  const Shape& fs = activation.shape();  // [F,(D),H,W] (unbatched input)
  const int F = fs[0];
  std::int64_t spatial = 1;
  for (std::size_t a = 1; a < fs.size(); ++a) spatial *= fs[a];

  // channel weights: spatial mean of the class-score gradients
  std::vector<double> alpha(static_cast<std::size_t>(F), 0.0);
  for (int f = 0; f < F; ++f) {
    double acc = 0.0;
    const float* gsrc = act_grad.data() + static_cast<std::int64_t>(f) * spatial;
    for (std::int64_t s = 0; s < spatial; ++s) acc += gsrc[s];
    alpha[static_cast<std::size_t>(f)] = acc / static_cast<double>(spatial);
  }

  CamComputation out;
  out.feature_shape = fs;
  out.coarse.assign(static_cast<std::size_t>(spatial), 0.0f);
  for (std::int64_t s = 0; s < spatial; ++s) {
    double acc = 0.0;
    for (int f = 0; f < F; ++f)
      acc += alpha[static_cast<std::size_t>(f)] *
             activation.data()[static_cast<std::int64_t>(f) * spatial + s];
    out.coarse[static_cast<std::size_t>(s)] = acc > 0.0 ? static_cast<float>(acc) : 0.0f;
  }
  out.input_gradient = g.grad(x);
  return out;
}

}  // namespace detail

struct GradCamMap {
  std::vector<float> coarse;  // conv-grid map
  int coarse_h = 0, coarse_w = 0;
  std::vector<float> plane;   // bilinear-upsampled to the input plane
  int plane_h = 0, plane_w = 0;
  std::vector<float> input_gradient;  // saved for slice attribution
};

// 2D Grad-CAM for a slices-as-channels model: one map over the conv grid of
// the last conv block, upsampled to the input plane (H=y, W=x).
inline GradCamMap grad_cam(Model& model, const BrainVolume& volume, int target_class) {
  require(!model.spec.is_3d(), Errc::mode_rank_mismatch, "grad_cam expects a 2D model");
  Tensor input = volume_to_input(model.spec, volume);
  detail::CamComputation cam = detail::grad_cam_core(model, input, target_class);
  GradCamMap out;
  out.coarse = std::move(cam.coarse);
  out.coarse_h = cam.feature_shape[1];
  out.coarse_w = cam.feature_shape[2];
  out.plane_h = model.spec.input_shape[1];
  out.plane_w = model.spec.input_shape[2];
  out.plane =
      detail::upsample_bilinear(out.coarse, out.coarse_h, out.coarse_w, out.plane_h, out.plane_w);
  out.input_gradient = std::move(cam.input_gradient);
  return out;
}

// Relevance volume aligned with the input. Three z-attribution modes:
//  - gradcam2d_replicate: the 2D map copied along z (a slices-as-channels
//    model has a single spatial map);
//  - gradcam2d_slicegrad: the 2D map modulated per-slice by the mean absolute
//    input gradient of that slice;
//  - gradcam3d: trilinear-upsampled 3D map from the last conv block of a 3D
//    model.
inline Heatmap3D relevance_volume(Model& model, const BrainVolume& volume, int target_class,
                                  RelevanceMode mode) {
  Heatmap3D heat;
  heat.dims = volume.dims;
  heat.target_class = target_class;
  heat.source_mode = mode;
  heat.data.assign(volume.size(), 0.0f);
  const int nx = volume.nx(), ny = volume.ny(), nz = volume.nz();

  if (mode == RelevanceMode::gradcam3d) {
    require(model.spec.is_3d(), Errc::mode_rank_mismatch, "gradcam3d requires a 3D model");
    Tensor input = volume_to_input(model.spec, volume);
    detail::CamComputation cam = detail::grad_cam_core(model, input, target_class);
    const Shape& fs = cam.feature_shape;
    heat.data = detail::upsample_trilinear(cam.coarse, fs[1], fs[2], fs[3], nz, ny, nx);
    for (auto& v : heat.data) v = std::max(0.0f, v);
  } else if (mode == RelevanceMode::gradcam2d_replicate ||
             mode == RelevanceMode::gradcam2d_slicegrad) {
    require(!model.spec.is_3d(), Errc::mode_rank_mismatch, "2D mode requires a 2D model");
    GradCamMap map = grad_cam(model, volume, target_class);
    std::vector<double> zweight(static_cast<std::size_t>(nz), 1.0);
    if (mode == RelevanceMode::gradcam2d_slicegrad) {
      // distribute relevance over z by each slice's share of |d y_c / d input|
      const std::int64_t plane = static_cast<std::int64_t>(ny) * nx;
      for (int z = 0; z < nz; ++z) {
        double acc = 0.0;
        const float* slice = map.input_gradient.data() + static_cast<std::int64_t>(z) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += std::abs(slice[i]);
        zweight[static_cast<std::size_t>(z)] = acc / static_cast<double>(plane);
      }
    }
    for (int z = 0; z < nz; ++z) {
      for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
          heat.data[heat.index(x, y, z)] = static_cast<float>(
              map.plane[static_cast<std::size_t>(y) * nx + x] * zweight[static_cast<std::size_t>(z)]);
        }
      }
    }
  } else {
    raise(Errc::mode_rank_mismatch, "guided_gradcam is produced by guided_grad_cam()");
  }
  heat.normalize();
  return heat;
}

// Guided backpropagation: a backward pass where every ReLU propagates only
// positive gradients on positive forward inputs. Returns the absolute input
// gradient as a volume-shaped saliency (x-fastest, like the input).
inline std::vector<float> guided_backprop(Model& model, const BrainVolume& volume,
                                          int target_class) {
  require(model.mode == Mode::eval, Errc::not_eval_mode, "guided_backprop requires eval mode");
  Tensor input = volume_to_input(model.spec, volume);
  Graph g;
  g.set_guided_relu(true);
  Tensor x = input;
  Tensor logits = forward(model, x, &g);
  require(target_class >= 0 && target_class < static_cast<int>(logits.size()),
          Errc::shape_mismatch, "target class out of range");
  std::vector<float> seed(static_cast<std::size_t>(logits.size()), 0.0f);
  seed[static_cast<std::size_t>(target_class)] = 1.0f;
  g.backward(logits, std::move(seed));
  std::vector<float> saliency = g.grad(x);
  for (auto& v : saliency) v = std::abs(v);
  return saliency;  // tensor layout [C=z,H=y,W=x] == volume x-fastest layout
}

// Pointwise product of the upsampled class map and guided-backprop saliency,
// renormalized. `base_mode` selects the z attribution of the class map.
inline Heatmap3D guided_grad_cam(Model& model, const BrainVolume& volume, int target_class,
                                 RelevanceMode base_mode = RelevanceMode::gradcam2d_slicegrad) {
  require(base_mode == RelevanceMode::gradcam2d_replicate ||
              base_mode == RelevanceMode::gradcam2d_slicegrad ||
              base_mode == RelevanceMode::gradcam3d,
          Errc::mode_rank_mismatch, "base mode must be a plain grad-cam mode");
  Heatmap3D heat = relevance_volume(model, volume, target_class, base_mode);
  const std::vector<float> saliency = guided_backprop(model, volume, target_class);
  for (std::size_t i = 0; i < heat.data.size(); ++i) heat.data[i] *= saliency[i];
  heat.source_mode = RelevanceMode::guided_gradcam;
  heat.normalize();
  return heat;
}

// Relevance mass inside a voxel mask (double accumulation).
inline double relevance_mass(const Heatmap3D& heat, const std::vector<std::uint8_t>& mask) {
  require(mask.size() == heat.data.size(), Errc::dim_mismatch, "mask size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) acc += heat.data[i];
  return acc;
}

}  // namespace voxcam
