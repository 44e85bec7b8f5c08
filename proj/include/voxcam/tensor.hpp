#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxcam/core.hpp"

namespace voxcam {

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) {
    require(e > 0, Errc::shape_mismatch, "non-positive extent in shape");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

class Graph;

// Dense float32 tensor. Copies share the underlying buffer; clone() deep-copies.
// When produced by a recorded op the tensor carries a (graph, node) reference.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : data_(std::make_shared<std::vector<float>>(shape_size(shape), 0.0f)),
        shape_(std::move(shape)) {}
  Tensor(Shape shape, std::vector<float> values)
      : data_(std::make_shared<std::vector<float>>(std::move(values))), shape_(std::move(shape)) {
    require(static_cast<std::int64_t>(data_->size()) == shape_size(shape_), Errc::shape_mismatch,
            "value count does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }
  static Tensor full(Shape shape, float v) {
    Tensor t(std::move(shape));
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  std::vector<float>& values() { return *data_; }
  const std::vector<float>& values() const { return *data_; }
  const std::shared_ptr<std::vector<float>>& buffer() const { return data_; }

  float item() const {
    require(size() == 1, Errc::shape_mismatch, "item() on non-scalar tensor");
    return (*data_)[0];
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool f) {
    requires_grad_ = f;
    return *this;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<float>>(*data_);
    t.requires_grad_ = requires_grad_;
    return t;
  }

  // Same buffer, new shape (element count must match).
  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == size(), Errc::shape_mismatch,
            "reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  Graph* graph() const { return graph_; }
  int node() const { return node_; }

 private:
  std::shared_ptr<std::vector<float>> data_;
  Shape shape_;
  bool requires_grad_ = false;
  Graph* graph_ = nullptr;
  int node_ = -1;

  friend class Graph;
};

// Recorded computation tape. Nodes are appended in forward order, which is a
// topological order, so the backward sweep is a single reverse pass visiting
// each node exactly once. Leaves (parameters, inputs) are registered on first
// use, keyed by their data buffer. One backward per graph.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const std::vector<float>&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int leaf(const Tensor& t) {
    require(t.defined(), Errc::internal, "leaf() on undefined tensor");
    if (t.graph_ == this && t.node_ >= 0) return t.node_;
    auto [it, inserted] = leaves_.try_emplace(t.buffer().get(), 0);
    if (inserted) {
      it->second = add_node(nullptr, t.size());
    }
    return it->second;
  }

  // Records one primitive application and returns the output tensor.
  Tensor op(Shape out_shape, std::vector<float> out_values,
            std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
    for (const Tensor* in : inputs) leaf(*in);
    Tensor out(std::move(out_shape), std::move(out_values));
    out.graph_ = this;
    out.node_ = add_node(std::move(backward), out.size());
    return out;
  }

  // Aliasing op (reshape): output shares the input buffer but gets its own node.
  Tensor alias_op(const Tensor& input, Shape out_shape, BackwardFn backward) {
    leaf(input);
    Tensor out = input.reshaped(std::move(out_shape));
    out.graph_ = this;
    out.node_ = add_node(std::move(backward), out.size());
    return out;
  }

  void backward(const Tensor& output, std::vector<float> seed) {
    require(!ran_backward_, Errc::internal, "graph backward already ran");
    require(output.graph_ == this && output.node_ >= 0, Errc::disconnected_tensor,
            "backward target was not recorded on this graph");
    require(static_cast<std::int64_t>(seed.size()) == output.size(), Errc::shape_mismatch,
            "seed gradient size mismatch");
    ran_backward_ = true;
    grads_[output.node_] = std::move(seed);
    for (int i = output.node_; i >= 0; --i) {
      if (grads_[i].empty() || !nodes_[i].backward) continue;
      nodes_[i].backward(*this, grads_[i]);
    }
  }

  void backward(const Tensor& scalar_loss) {
    require(scalar_loss.size() == 1, Errc::shape_mismatch, "loss must be scalar");
    backward(scalar_loss, {1.0f});
  }

  // Gradient of the backward target w.r.t. `t`. Unreachable tensors yield
  // zeros and are reported through `reached`.
  std::vector<float> grad(const Tensor& t) const {
    const int id = node_of(t);
    if (id < 0 || grads_[id].empty())
      return std::vector<float>(static_cast<std::size_t>(t.size()), 0.0f);
    return grads_[id];
  }

  bool reached(const Tensor& t) const {
    const int id = node_of(t);
    return id >= 0 && !grads_[static_cast<std::size_t>(id)].empty();
  }

  // Pointer to the internal gradient buffer; null when the tensor has no node
  // or was never reached by the backward sweep.
  const std::vector<float>* grad_ptr(const Tensor& t) const {
    const int id = node_of(t);
    if (id < 0 || grads_[static_cast<std::size_t>(id)].empty()) return nullptr;
    return &grads_[static_cast<std::size_t>(id)];
  }

  // Accumulation buffer for backward closures; zero-initialized on first touch.
  std::vector<float>& grad_buffer(int node, std::int64_t size) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(static_cast<std::size_t>(size), 0.0f);
    return g;
  }

  void accumulate(int node, const float* v, std::int64_t n) {
    auto& g = grad_buffer(node, n);
    for (std::int64_t i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] += v[i];
  }

  void set_guided_relu(bool on) { guided_relu_ = on; }
  bool guided_relu() const { return guided_relu_; }

  std::size_t node_count() const { return nodes_.size(); }
  bool ran_backward() const { return ran_backward_; }

 private:
  struct NodeRec {
    BackwardFn backward;  // null for leaves
  };

  int add_node(BackwardFn fn, std::int64_t size) {
    nodes_.push_back({std::move(fn)});
    grads_.emplace_back();
    sizes_.push_back(size);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int node_of(const Tensor& t) const {
    if (t.graph_ == this && t.node_ >= 0) return t.node_;
    auto it = leaves_.find(t.buffer().get());
    return it == leaves_.end() ? -1 : it->second;
  }

  std::vector<NodeRec> nodes_;
  std::vector<std::vector<float>> grads_;
  std::vector<std::int64_t> sizes_;
  std::unordered_map<const std::vector<float>*, int> leaves_;
  bool guided_relu_ = false;
  bool ran_backward_ = false;
};

}  // namespace voxcam
