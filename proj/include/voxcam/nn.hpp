#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/ops.hpp"
#include "voxcam/tensor.hpp"
#include "voxcam/volume.hpp"

namespace voxcam {

enum class LayerKind { conv2d, conv3d, batchnorm, relu, maxpool, flatten, dense, dropout };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv2d/conv3d
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  bool bias = true;
  // maxpool; window_depth covers 3D pools whose depth window differs (the 3D
  // conversion keeps depth resolution, window_depth = 1)
  int window = 0;
  int pool_stride = 0;
  int window_depth = -1;  // -1: same as window
  // dense
  int units = 0;
  // dropout; p == 1 is accepted in configs and means "disabled"
  float drop_p = 0.0f;

  static LayerSpec Conv2D(int filters, int kernel, int stride = 1, int padding = 0) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.filters = filters;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
  }
  static LayerSpec Conv3D(int filters, int kernel, int stride = 1, int padding = 0) {
    LayerSpec l = Conv2D(filters, kernel, stride, padding);
    l.kind = LayerKind::conv3d;
    return l;
  }
  static LayerSpec BatchNorm() {
    LayerSpec l;
    l.kind = LayerKind::batchnorm;
    return l;
  }
  static LayerSpec ReLU() {
    LayerSpec l;
    l.kind = LayerKind::relu;
    return l;
  }
  static LayerSpec MaxPool(int window, int stride = 0) {
    LayerSpec l;
    l.kind = LayerKind::maxpool;
    l.window = window;
    l.pool_stride = stride > 0 ? stride : window;
    return l;
  }
  static LayerSpec Flatten() {
    LayerSpec l;
    l.kind = LayerKind::flatten;
    return l;
  }
  static LayerSpec Dense(int units) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.units = units;
    return l;
  }
  static LayerSpec Dropout(float p) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.drop_p = p;
    return l;
  }
};

// Ordered layer description; the buildable unit for every model here and the
// phenotype of a search genome. Shapes are propagated statically so invalid
// topologies fail before any parameter is allocated.
struct ArchitectureSpec {
  Shape input_shape;  // (C,H,W) for 2D nets, (C,D,H,W) for 3D nets
  std::vector<LayerSpec> layers;
  int class_count = 2;

  bool is_3d() const { return input_shape.size() == 4; }

  // Per-layer output shapes (without batch axis). Throws ShapeUnderflow when
  // an extent would drop to zero and ShapeMismatch on rank errors.
  std::vector<Shape> propagate() const {
    require(input_shape.size() == 3 || input_shape.size() == 4, Errc::shape_mismatch,
            "input shape must be (C,H,W) or (C,D,H,W)");
    for (int e : input_shape)
      require(e > 0, Errc::shape_underflow, "non-positive input extent");
    std::vector<Shape> shapes;
    Shape cur = input_shape;
    for (const LayerSpec& l : layers) {
      switch (l.kind) {
        case LayerKind::conv2d: {
          require(cur.size() == 3, Errc::shape_mismatch, "conv2d on non-(C,H,W) input");
          require(l.kernel >= 1 && l.stride >= 1 && l.padding >= 0 && l.filters >= 1,
                  Errc::shape_mismatch, "bad conv2d fields");
          const int H = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
          const int W = (cur[2] + 2 * l.padding - l.kernel) / l.stride + 1;
          require(cur[1] + 2 * l.padding >= l.kernel && cur[2] + 2 * l.padding >= l.kernel &&
                      H > 0 && W > 0,
                  Errc::shape_underflow, "conv2d output would be empty");
          cur = {l.filters, H, W};
          break;
        }
        case LayerKind::conv3d: {
          require(cur.size() == 4, Errc::shape_mismatch, "conv3d on non-(C,D,H,W) input");
          require(l.kernel >= 1 && l.stride >= 1 && l.padding >= 0 && l.filters >= 1,
                  Errc::shape_mismatch, "bad conv3d fields");
          const int D = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
          const int H = (cur[2] + 2 * l.padding - l.kernel) / l.stride + 1;
          const int W = (cur[3] + 2 * l.padding - l.kernel) / l.stride + 1;
          require(cur[1] + 2 * l.padding >= l.kernel && cur[2] + 2 * l.padding >= l.kernel &&
                      cur[3] + 2 * l.padding >= l.kernel && D > 0 && H > 0 && W > 0,
                  Errc::shape_underflow, "conv3d output would be empty");
          cur = {l.filters, D, H, W};
          break;
        }
        case LayerKind::batchnorm:
        case LayerKind::relu:
          break;
        case LayerKind::maxpool: {
          require(cur.size() >= 3, Errc::shape_mismatch, "maxpool needs spatial input");
          const int stride = l.pool_stride > 0 ? l.pool_stride : l.window;
          require(l.window >= 1 && stride >= 1, Errc::shape_mismatch, "bad pool fields");
          Shape next = cur;
          for (std::size_t a = 1; a < cur.size(); ++a) {
            const int w =
                (cur.size() == 4 && a == 1 && l.window_depth >= 0) ? l.window_depth : l.window;
            const int s = (cur.size() == 4 && a == 1 && l.window_depth >= 0)
                              ? std::max(1, std::min(stride, l.window_depth))
                              : stride;
            require(w <= cur[a], Errc::shape_underflow, "pool window exceeds extent");
            next[a] = (cur[a] - w) / s + 1;
            require(next[a] > 0, Errc::shape_underflow, "pool output would be empty");
          }
          cur = next;
          break;
        }
        case LayerKind::flatten: {
          int n = 1;
          for (int e : cur) n *= e;
          cur = {n};
          break;
        }
        case LayerKind::dense: {
          require(cur.size() == 1, Errc::shape_mismatch, "dense expects a flat input");
          require(l.units >= 1, Errc::shape_mismatch, "dense units must be >= 1");
          cur = {l.units};
          break;
        }
        case LayerKind::dropout:
          require(l.drop_p >= 0.0f && l.drop_p <= 1.0f, Errc::invalid_drop_probability,
                  "dropout p out of [0,1]");
          break;
      }
      shapes.push_back(cur);
    }
    return shapes;
  }

  void validate() const {
    const auto shapes = propagate();
    require(!layers.empty() && layers.back().kind == LayerKind::dense &&
                layers.back().units == class_count,
            Errc::shape_mismatch, "spec must end with Dense(class_count)");
    (void)shapes;
  }
};

// Trainable parameter count derivable from the spec alone.
inline std::int64_t count_parameters(const ArchitectureSpec& spec) {
  std::int64_t total = 0;
  Shape cur = spec.input_shape;
  const auto shapes = spec.propagate();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv2d:
        total += static_cast<std::int64_t>(l.filters) * cur[0] * l.kernel * l.kernel +
                 (l.bias ? l.filters : 0);
        break;
      case LayerKind::conv3d:
        total += static_cast<std::int64_t>(l.filters) * cur[0] * l.kernel * l.kernel * l.kernel +
                 (l.bias ? l.filters : 0);
        break;
      case LayerKind::batchnorm:
        total += 2 * static_cast<std::int64_t>(cur[0]);  // gamma + beta
        break;
      case LayerKind::dense:
        total += static_cast<std::int64_t>(l.units) * cur[0] + (l.bias ? l.units : 0);
        break;
      default:
        break;
    }
    cur = shapes[i];
  }
  return total;
}

enum class Mode { train, eval };

// A built, runnable network: spec + named parameters (+ batchnorm running
// stats, which are state, not parameters).
struct Model {
  ArchitectureSpec spec;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> state;
  Mode mode = Mode::train;
  std::uint64_t seed = 0;
  Rng dropout_rng{0};

  Tensor* find_param(const std::string& name) {
    for (auto& [n, t] : params)
      if (n == name) return &t;
    return nullptr;
  }
  Tensor* find_state(const std::string& name) {
    for (auto& [n, t] : state)
      if (n == name) return &t;
    return nullptr;
  }

  void set_mode(Mode m) { mode = m; }

  // Deep copy (fresh buffers, same values).
  Model clone() const {
    Model m;
    m.spec = spec;
    m.mode = mode;
    m.seed = seed;
    m.dropout_rng = dropout_rng;
    for (const auto& [n, t] : params) m.params.emplace_back(n, t.clone());
    for (const auto& [n, t] : state) m.state.emplace_back(n, t.clone());
    return m;
  }
};

namespace detail {

inline std::string layer_prefix(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "l%02zu", i);
  return buf;
}

inline Tensor he_normal(Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<float>(rng.normal() * sd);
  return t;
}

}  // namespace detail

// Allocates and initializes parameters for a validated spec. He-normal
// initialization for conv/dense weights, zero biases, unit gamma.
inline Model build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model model;
  model.spec = spec;
  model.seed = seed;
  model.dropout_rng = Rng(mix_seed(seed, 0x64726f70));
  Rng init(mix_seed(seed, 0x696e6974));
  Shape cur = spec.input_shape;
  const auto shapes = spec.propagate();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string pfx = detail::layer_prefix(i);
    switch (l.kind) {
      case LayerKind::conv2d: {
        const std::int64_t fan_in = static_cast<std::int64_t>(cur[0]) * l.kernel * l.kernel;
        model.params.emplace_back(
            pfx + ".w", detail::he_normal({l.filters, cur[0], l.kernel, l.kernel}, fan_in, init));
        if (l.bias) model.params.emplace_back(pfx + ".b", Tensor({l.filters}));
        break;
      }
      case LayerKind::conv3d: {
        const std::int64_t fan_in =
            static_cast<std::int64_t>(cur[0]) * l.kernel * l.kernel * l.kernel;
        model.params.emplace_back(
            pfx + ".w",
            detail::he_normal({l.filters, cur[0], l.kernel, l.kernel, l.kernel}, fan_in, init));
        if (l.bias) model.params.emplace_back(pfx + ".b", Tensor({l.filters}));
        break;
      }
      case LayerKind::batchnorm: {
        const int C = cur[0];
        model.params.emplace_back(pfx + ".gamma", Tensor::full({C}, 1.0f));
        model.params.emplace_back(pfx + ".beta", Tensor({C}));
        model.state.emplace_back(pfx + ".rmean", Tensor({C}));
        model.state.emplace_back(pfx + ".rvar", Tensor::full({C}, 1.0f));
        break;
      }
      case LayerKind::dense: {
        const std::int64_t fan_in = cur[0];
        Tensor w = detail::he_normal({l.units, cur[0]}, fan_in, init);
        // Zero-sum two-class head: the second logit row starts as the negation
        // of the first. Softmax cross-entropy gradients are exactly
        // antisymmetric in the two logits, so the head stays zero-sum under
        // training and per-class activation maps are sign-dual rectifications
        // of one evidence field instead of carrying an untrained common mode.
        if (i + 1 == spec.layers.size() && l.units == 2) {
          for (int f = 0; f < cur[0]; ++f) w.data()[cur[0] + f] = -w.data()[f];
        }
        model.params.emplace_back(pfx + ".w", std::move(w));
        if (l.bias) model.params.emplace_back(pfx + ".b", Tensor({l.units}));
        break;
      }
      default:
        break;
    }
    cur = shapes[i];
  }
  for (auto& [name, t] : model.params) t.set_requires_grad(true);
  return model;
}

inline std::int64_t param_count(const Model& model) {
  std::int64_t total = 0;
  for (const auto& [name, t] : model.params) total += t.size();
  return total;
}

// Forward pass over a batch (leading N axis) or a single sample. When `trace`
// is given it receives every layer's output tensor, index-aligned with
// spec.layers.
inline Tensor forward(Model& model, const Tensor& input, Graph* g,
                      std::vector<Tensor>* trace = nullptr) {
  const bool batched = input.rank() == static_cast<int>(model.spec.input_shape.size()) + 1;
  require(batched || input.rank() == static_cast<int>(model.spec.input_shape.size()),
          Errc::dim_mismatch, "input rank does not match spec");
  for (std::size_t a = 0; a < model.spec.input_shape.size(); ++a) {
    require(input.shape()[a + (batched ? 1 : 0)] == model.spec.input_shape[a],
            Errc::dim_mismatch, "input extents do not match spec input shape");
  }
  const bool train = model.mode == Mode::train;
  Tensor cur = input;
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    const LayerSpec& l = model.spec.layers[i];
    const std::string pfx = detail::layer_prefix(i);
    switch (l.kind) {
      case LayerKind::conv2d:
        cur = conv2d(g, cur, *model.find_param(pfx + ".w"),
                     l.bias ? *model.find_param(pfx + ".b") : Tensor(), l.stride, l.padding);
        break;
      case LayerKind::conv3d:
        cur = conv3d(g, cur, *model.find_param(pfx + ".w"),
                     l.bias ? *model.find_param(pfx + ".b") : Tensor(), l.stride, l.padding);
        break;
      case LayerKind::batchnorm: {
        Tensor x = batched ? cur : cur.reshaped([&] {
          Shape s = cur.shape();
          s.insert(s.begin(), 1);
          return s;
        }());
        Tensor y = batchnorm(g, x, *model.find_param(pfx + ".gamma"),
                             *model.find_param(pfx + ".beta"), *model.find_state(pfx + ".rmean"),
                             *model.find_state(pfx + ".rvar"), train);
        cur = batched ? y : reshape(g, y, cur.shape());
        break;
      }
      case LayerKind::relu:
        cur = relu(g, cur);
        break;
      case LayerKind::maxpool: {
        const int stride = l.pool_stride > 0 ? l.pool_stride : l.window;
        const bool spatial3d = cur.rank() == (batched ? 5 : 4);
        if (spatial3d) {
          const int wd = l.window_depth >= 0 ? l.window_depth : l.window;
          const int sd = l.window_depth >= 0 ? std::max(1, std::min(stride, wd)) : stride;
          cur = maxpool3d(g, cur, {wd, l.window, l.window}, {sd, stride, stride});
        } else {
          cur = maxpool2d(g, cur, l.window, stride);
        }
        break;
      }
      case LayerKind::flatten:
        cur = flatten(g, cur, batched);
        break;
      case LayerKind::dense:
        cur = dense(g, cur, *model.find_param(pfx + ".w"),
                    l.bias ? *model.find_param(pfx + ".b") : Tensor());
        break;
      case LayerKind::dropout: {
        const float p = l.drop_p >= 1.0f ? 0.0f : l.drop_p;  // 1 means disabled
        cur = dropout(g, cur, p, model.dropout_rng, train);
        break;
      }
    }
    if (trace) trace->push_back(cur);
  }
  return cur;
}

// Maps a brain volume onto the model input layout. For 2D specs the axial (z)
// axis becomes the channel axis: tensor [nz,ny,nx] aliases the x-fastest
// voxel buffer directly. 3D specs take [1,nz,ny,nx].
inline Tensor volume_to_input(const ArchitectureSpec& spec, const BrainVolume& v) {
  Shape want = spec.input_shape;
  Shape have = spec.is_3d() ? Shape{1, v.nz(), v.ny(), v.nx()} : Shape{v.nz(), v.ny(), v.nx()};
  require(want == have, Errc::dim_mismatch,
          "volume dims " + shape_str(have) + " do not match spec input " + shape_str(want));
  return Tensor(have, v.data);
}

// Raw class scores for one masked volume; class 0 = typical, class 1 = dyslexic.
inline Tensor forward_logits(Model& model, const BrainVolume& volume, Graph* g = nullptr) {
  Tensor input = volume_to_input(model.spec, volume);
  return forward(model, input, g);
}

// ---------------------------------------------------------------------------
// Reference builders
// ---------------------------------------------------------------------------

// Two conv blocks [Conv -> BatchNorm -> ReLU -> MaxPool(2,2)] with 5x5 kernels,
// stride 1, no padding, then [Flatten -> Dense(fc_units) -> ReLU ->
// Dropout(0.5) -> Dense(2)]. Filter counts default to the reference
// configuration; kernel is overridable for small test inputs.
inline ArchitectureSpec lenet5_modified_spec(Shape input_shape, int fc_units, int filters1 = 16,
                                             int filters2 = 24, int kernel = 5) {
  ArchitectureSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.class_count = 2;
  for (int f : {filters1, filters2}) {
    spec.layers.push_back(LayerSpec::Conv2D(f, kernel, 1, 0));
    spec.layers.push_back(LayerSpec::BatchNorm());
    spec.layers.push_back(LayerSpec::ReLU());
    spec.layers.push_back(LayerSpec::MaxPool(2, 2));
  }
  spec.layers.push_back(LayerSpec::Flatten());
  spec.layers.push_back(LayerSpec::Dense(fc_units));
  spec.layers.push_back(LayerSpec::ReLU());
  spec.layers.push_back(LayerSpec::Dropout(0.5f));
  spec.layers.push_back(LayerSpec::Dense(2));
  spec.validate();  // surfaces ShapeUnderflow for undersized inputs
  return spec;
}

inline Model build_lenet5_modified(Shape input_shape, int fc_units, std::uint64_t seed,
                                   int filters1 = 16, int filters2 = 24, int kernel = 5) {
  return build_model(lenet5_modified_spec(std::move(input_shape), fc_units, filters1, filters2,
                                          kernel),
                     seed);
}

// Converts a 2D slices-as-channels spec into its 3D counterpart: the channel
// axis becomes the depth of a single-channel volume, Conv2D kernels become
// cubic Conv3D kernels, and pools act on the plane only (depth window 1) so
// the slice resolution carries through to the dense tail.
inline ArchitectureSpec to_3d(const ArchitectureSpec& spec) {
  require(!spec.is_3d(), Errc::shape_mismatch, "spec is already 3D");
  ArchitectureSpec out;
  out.class_count = spec.class_count;
  out.input_shape = {1, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
  for (const LayerSpec& l : spec.layers) {
    LayerSpec n = l;
    if (l.kind == LayerKind::conv2d) {
      n.kind = LayerKind::conv3d;
    } else if (l.kind == LayerKind::maxpool) {
      n.window_depth = 1;
    }
    out.layers.push_back(n);
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Architecture config text format: `input_shape = C H W`, `classes = K`,
// then one `layer <kind> key=value...` line per layer.
// ---------------------------------------------------------------------------

inline std::string arch_to_text(const ArchitectureSpec& spec) {
  std::ostringstream out;
  out << "input_shape =";
  for (int e : spec.input_shape) out << " " << e;
  out << "\nclasses = " << spec.class_count << "\n";
  for (const LayerSpec& l : spec.layers) {
    out << "layer " << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv3d:
        out << " filters=" << l.filters << " kernel=" << l.kernel << " stride=" << l.stride
            << " padding=" << l.padding;
        if (!l.bias) out << " bias=0";
        break;
      case LayerKind::maxpool:
        out << " window=" << l.window << " stride=" << (l.pool_stride > 0 ? l.pool_stride : l.window);
        if (l.window_depth >= 0) out << " window_depth=" << l.window_depth;
        break;
      case LayerKind::dense:
        out << " units=" << l.units;
        if (!l.bias) out << " bias=0";
        break;
      case LayerKind::dropout:
        out << " p=" << l.drop_p;
        break;
      default:
        break;
    }
    out << "\n";
  }
  return out.str();
}

inline ArchitectureSpec arch_from_text(const std::string& text) {
  ArchitectureSpec spec;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& why) {
    raise(Errc::config_error, "arch config line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.rfind("layer", 0) == 0) {
      const auto toks = split_ws(t);
      if (toks.size() < 2) bad("missing layer kind");
      LayerSpec l;
      const std::string& kind = toks[1];
      if (kind == "conv2d") l.kind = LayerKind::conv2d;
      else if (kind == "conv3d") l.kind = LayerKind::conv3d;
      else if (kind == "batchnorm") l.kind = LayerKind::batchnorm;
      else if (kind == "relu") l.kind = LayerKind::relu;
      else if (kind == "maxpool") l.kind = LayerKind::maxpool;
      else if (kind == "flatten") l.kind = LayerKind::flatten;
      else if (kind == "dense") l.kind = LayerKind::dense;
      else if (kind == "dropout") l.kind = LayerKind::dropout;
      else bad("unknown layer kind '" + kind + "'");
      for (std::size_t i = 2; i < toks.size(); ++i) {
        const auto kv = split(toks[i], '=');
        if (kv.size() != 2) bad("expected key=value, got '" + toks[i] + "'");
        const std::string& k = kv[0];
        const std::string& v = kv[1];
        try {
          if (k == "filters") l.filters = std::stoi(v);
          else if (k == "kernel") l.kernel = std::stoi(v);
          else if (k == "stride") { l.stride = std::stoi(v); l.pool_stride = l.stride; }
          else if (k == "padding") l.padding = std::stoi(v);
          else if (k == "window") l.window = std::stoi(v);
          else if (k == "window_depth") l.window_depth = std::stoi(v);
          else if (k == "units") l.units = std::stoi(v);
          else if (k == "p") l.drop_p = std::stof(v);
          else if (k == "bias") l.bias = std::stoi(v) != 0;
          else bad("unknown key '" + k + "'");
        } catch (const Error&) {
          throw;
        } catch (const std::exception&) {
          bad("bad value for '" + k + "'");
        }
      }
      spec.layers.push_back(l);
    } else {
      const auto eq = t.find('=');
      if (eq == std::string::npos) bad("expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string val = trim(t.substr(eq + 1));
      if (key == "input_shape") {
        spec.input_shape.clear();
        for (const auto& tok : split_ws(val)) spec.input_shape.push_back(std::stoi(tok));
      } else if (key == "classes") {
        spec.class_count = std::stoi(val);
      } else {
        bad("unknown key '" + key + "'");
      }
    }
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Named-tensor binary: u32 name length, name bytes, u32 rank, u32 extents,
// float32 payload; all little-endian.
// ---------------------------------------------------------------------------

inline void append_named_tensor(std::vector<std::uint8_t>& buf, const std::string& name,
                                const Tensor& t) {
  le::append<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
  buf.insert(buf.end(), name.begin(), name.end());
  le::append<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape()) le::append<std::uint32_t>(buf, static_cast<std::uint32_t>(e));
  const std::size_t off = buf.size();
  buf.resize(off + static_cast<std::size_t>(t.size()) * 4);
  std::memcpy(buf.data() + off, t.data(), static_cast<std::size_t>(t.size()) * 4);
}

inline std::vector<std::uint8_t> tensors_to_bytes(
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::vector<std::uint8_t> buf;
  le::append<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) append_named_tensor(buf, name, t);
  return buf;
}

inline std::vector<std::pair<std::string, Tensor>> tensors_from_bytes(
    std::span<const std::uint8_t> buf) {
  std::size_t off = 0;
  const auto count = le::get<std::uint32_t>(buf, off);
  off += 4;
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = le::get<std::uint32_t>(buf, off);
    off += 4;
    require(off + name_len <= buf.size(), Errc::truncated_data, "tensor name past end");
    std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
    off += name_len;
    const auto rank = le::get<std::uint32_t>(buf, off);
    off += 4;
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(le::get<std::uint32_t>(buf, off)));
      off += 4;
    }
    const std::int64_t n = shape_size(shape);
    require(off + static_cast<std::size_t>(n) * 4 <= buf.size(), Errc::truncated_data,
            "tensor payload past end");
    std::vector<float> values(static_cast<std::size_t>(n));
    std::memcpy(values.data(), buf.data() + off, static_cast<std::size_t>(n) * 4);
    off += static_cast<std::size_t>(n) * 4;
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

// Checkpoint directory: arch.cfg + params.bin (params then state).
inline void save_model(const std::filesystem::path& dir, const Model& model) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "arch.cfg", std::ios::trunc);
    require(out.good(), Errc::io_error, "cannot write arch.cfg");
    out << arch_to_text(model.spec);
  }
  std::vector<std::pair<std::string, Tensor>> all = model.params;
  for (const auto& [n, t] : model.state) all.emplace_back("state." + n, t);
  const auto bytes = tensors_to_bytes(all);
  std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io_error, "cannot write params.bin");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline Model load_model(const std::filesystem::path& dir) {
  std::ifstream cfg(dir / "arch.cfg");
  require(cfg.good(), Errc::io_error, "cannot open " + (dir / "arch.cfg").string());
  std::stringstream text;
  text << cfg.rdbuf();
  Model model = build_model(arch_from_text(text.str()), 0);
  std::ifstream pin(dir / "params.bin", std::ios::binary);
  require(pin.good(), Errc::io_error, "cannot open " + (dir / "params.bin").string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(pin)),
                                  std::istreambuf_iterator<char>());
  for (auto& [name, t] : tensors_from_bytes(bytes)) {
    Tensor* dst = nullptr;
    if (name.rfind("state.", 0) == 0) {
      dst = model.find_state(name.substr(6));
    } else {
      dst = model.find_param(name);
    }
    require(dst != nullptr, Errc::config_error, "checkpoint tensor '" + name + "' not in spec");
    require(dst->shape() == t.shape(), Errc::shape_mismatch,
            "checkpoint tensor '" + name + "' shape mismatch");
    std::copy(t.data(), t.data() + t.size(), dst->data());
  }
  return model;
}

}  // namespace voxcam
