#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace memcap::nn {

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Dense array with an optional same-shape gradient buffer. Nodes are either
// parameters (owned by a model, requires_grad) or activations (owned by a
// Graph). Gradient buffers are allocated on first backward pass.
template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string name;

  TensorNode() = default;
  TensorNode(std::vector<int> shape_in, bool requires_grad_in, std::string name_in = {});

  int64_t numel() const;
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  void alloc_grad();
  void zero_grad();
  void fill(T v);
};

enum class Reduction { kSum, kMean };

template <typename T>
class Op;

// Static computation graph: build once for a fixed batch geometry, then call
// forward()/backward() repeatedly while mutating bound id/target vectors and
// parameter values in place. Op creation order is execution order.
template <typename T>
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph();

  // Rows of `table` gathered by `ids` (size n, re-read every forward).
  TensorNode<T>* lookup(TensorNode<T>* table, const std::vector<int32_t>* ids, int n);
  TensorNode<T>* add(TensorNode<T>* a, TensorNode<T>* b);
  TensorNode<T>* add_bias(TensorNode<T>* x, TensorNode<T>* bias);
  TensorNode<T>* matmul(TensorNode<T>* a, TensorNode<T>* b);
  // a [m,k] times the transpose of the first `b_rows` rows of b [*,k].
  TensorNode<T>* matmul_nt(TensorNode<T>* a, TensorNode<T>* b, int b_rows = -1);
  TensorNode<T>* layernorm(TensorNode<T>* x, TensorNode<T>* gain, TensorNode<T>* bias);
  TensorNode<T>* gelu(TensorNode<T>* x);
  TensorNode<T>* reduce_sum(TensorNode<T>* x);
  // qkv [batch*time, 3*d]; causal softmax(q k^T / sqrt(d_head)) v per head.
  TensorNode<T>* causal_self_attention(TensorNode<T>* qkv, int batch, int time, int n_head);
  // logits [n, v]; targets re-read every forward; result is a scalar in nats.
  TensorNode<T>* softmax_cross_entropy(TensorNode<T>* logits, const std::vector<int32_t>* targets,
                                       Reduction reduction);

  void forward();
  void backward(TensorNode<T>* loss);

  size_t n_ops() const { return ops_.size(); }

 private:
  TensorNode<T>* activation(std::vector<int> shape, std::string name);
  void zero_activation_grads();

  std::vector<std::unique_ptr<TensorNode<T>>> nodes_;
  std::vector<std::unique_ptr<Op<T>>> ops_;
};

// C += A * B with fixed accumulation order (row-major, ikj).
template <typename T>
void gemm_acc(T* c, const T* a, const T* b, int m, int k, int n);

extern template struct TensorNode<float>;
extern template struct TensorNode<double>;
extern template class Graph<float>;
extern template class Graph<double>;
extern template void gemm_acc<float>(float*, const float*, const float*, int, int, int);
extern template void gemm_acc<double>(double*, const double*, const double*, int, int, int);

}  // namespace memcap::nn
