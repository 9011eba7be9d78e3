#include "memcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace memcap::nn {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

}  // namespace

template <typename T>
TensorNode<T>::TensorNode(std::vector<int> shape_in, bool requires_grad_in, std::string name_in)
    : shape(std::move(shape_in)), requires_grad(requires_grad_in), name(std::move(name_in)) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor '" + name + "' has non-positive dim in " + shape_str(shape));
    n *= d;
  }
  value.assign(static_cast<size_t>(n), T(0));
}

template <typename T>
int64_t TensorNode<T>::numel() const {
  return static_cast<int64_t>(value.size());
}

template <typename T>
void TensorNode<T>::alloc_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), T(0));
}

template <typename T>
void TensorNode<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void TensorNode<T>::fill(T v) {
  std::fill(value.begin(), value.end(), v);
}

template <typename T>
void gemm_acc(T* __restrict c, const T* __restrict a, const T* __restrict b, int m, int k,
              int n) {
  // ikj with 4-way k tiling: one c-row load/store per four rank-1 updates
  const int k4 = k & ~3;
  for (int i = 0; i < m; ++i) {
    T* __restrict crow = c + static_cast<size_t>(i) * n;
    const T* arow = a + static_cast<size_t>(i) * k;
    int p = 0;
    for (; p < k4; p += 4) {
      const T a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const T* b0 = b + static_cast<size_t>(p) * n;
      const T* b1 = b0 + n;
      const T* b2 = b1 + n;
      const T* b3 = b2 + n;
      for (int j = 0; j < n; ++j)
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
static void transpose_into(std::vector<T>& dst, const T* src, int rows, int cols) {
  dst.resize(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

template <typename T>
class Op {
 public:
  virtual ~Op() = default;
  virtual void forward() = 0;
  virtual void backward() = 0;
};

namespace {

template <typename T>
void require_2d(const TensorNode<T>* t, const char* who) {
  if (t->shape.size() != 2)
    throw ShapeError(std::string(who) + ": expected 2-d tensor, got " + shape_str(t->shape));
}

template <typename T>
class LookupOp final : public Op<T> {
 public:
  LookupOp(TensorNode<T>* table, const std::vector<int32_t>* ids, TensorNode<T>* out)
      : table_(table), ids_(ids), out_(out) {}

  void forward() override {
    const int n = out_->rows();
    const int d = table_->cols();
    if (static_cast<int>(ids_->size()) != n)
      throw InputError("lookup: bound id vector has size " + std::to_string(ids_->size()) +
                       ", graph was built for " + std::to_string(n));
    for (int r = 0; r < n; ++r) {
      int32_t id = (*ids_)[r];
      if (id < 0 || id >= table_->rows())
        throw InputError("lookup: id " + std::to_string(id) + " at row " + std::to_string(r) +
                         " out of range [0," + std::to_string(table_->rows()) + ")");
      const T* src = table_->value.data() + static_cast<size_t>(id) * d;
      std::copy(src, src + d, out_->value.data() + static_cast<size_t>(r) * d);
    }
  }

  void backward() override {
    if (!table_->requires_grad) return;
    table_->alloc_grad();
    const int n = out_->rows();
    const int d = table_->cols();
    for (int r = 0; r < n; ++r) {
      T* dst = table_->grad.data() + static_cast<size_t>((*ids_)[r]) * d;
      const T* g = out_->grad.data() + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j) dst[j] += g[j];
    }
  }

 private:
  TensorNode<T>* table_;
  const std::vector<int32_t>* ids_;
  TensorNode<T>* out_;
};

template <typename T>
class AddOp final : public Op<T> {
 public:
  AddOp(TensorNode<T>* a, TensorNode<T>* b, TensorNode<T>* out) : a_(a), b_(b), out_(out) {}

  void forward() override {
    const size_t n = out_->value.size();
    for (size_t i = 0; i < n; ++i) out_->value[i] = a_->value[i] + b_->value[i];
  }

  void backward() override {
    const size_t n = out_->value.size();
    a_->alloc_grad();
    b_->alloc_grad();
    for (size_t i = 0; i < n; ++i) a_->grad[i] += out_->grad[i];
    for (size_t i = 0; i < n; ++i) b_->grad[i] += out_->grad[i];
  }

 private:
  TensorNode<T>* a_;
  TensorNode<T>* b_;
  TensorNode<T>* out_;
};

template <typename T>
class AddBiasOp final : public Op<T> {
 public:
  AddBiasOp(TensorNode<T>* x, TensorNode<T>* bias, TensorNode<T>* out)
      : x_(x), bias_(bias), out_(out) {}

  void forward() override {
    const int n = x_->rows();
    const int d = x_->cols();
    for (int r = 0; r < n; ++r) {
      const T* xr = x_->value.data() + static_cast<size_t>(r) * d;
      T* yr = out_->value.data() + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j) yr[j] = xr[j] + bias_->value[j];
    }
  }

  void backward() override {
    const int n = x_->rows();
    const int d = x_->cols();
    x_->alloc_grad();
    bias_->alloc_grad();
    for (int r = 0; r < n; ++r) {
      const T* g = out_->grad.data() + static_cast<size_t>(r) * d;
      T* gx = x_->grad.data() + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j) gx[j] += g[j];
      for (int j = 0; j < d; ++j) bias_->grad[j] += g[j];
    }
  }

 private:
  TensorNode<T>* x_;
  TensorNode<T>* bias_;
  TensorNode<T>* out_;
};

template <typename T>
class MatmulOp final : public Op<T> {
 public:
  MatmulOp(TensorNode<T>* a, TensorNode<T>* b, TensorNode<T>* out) : a_(a), b_(b), out_(out) {}

  void forward() override {
    std::fill(out_->value.begin(), out_->value.end(), T(0));
    gemm_acc(out_->value.data(), a_->value.data(), b_->value.data(), a_->rows(), a_->cols(),
             b_->cols());
  }

  void backward() override {
    const int m = a_->rows(), k = a_->cols(), n = b_->cols();
    a_->alloc_grad();
    transpose_into(scratch_, b_->value.data(), k, n);  // b^T [n,k]
    gemm_acc(a_->grad.data(), out_->grad.data(), scratch_.data(), m, n, k);
    b_->alloc_grad();
    transpose_into(scratch_, a_->value.data(), m, k);  // a^T [k,m]
    gemm_acc(b_->grad.data(), scratch_.data(), out_->grad.data(), k, m, n);
  }

 private:
  TensorNode<T>* a_;
  TensorNode<T>* b_;
  TensorNode<T>* out_;
  std::vector<T> scratch_;
};

// out[m,n] = a[m,k] * b[0:n,:]^T; gradient flows into the used rows of b.
template <typename T>
class MatmulNtOp final : public Op<T> {
 public:
  MatmulNtOp(TensorNode<T>* a, TensorNode<T>* b, int b_rows, TensorNode<T>* out)
      : a_(a), b_(b), b_rows_(b_rows), out_(out) {}

  void forward() override {
    const int m = a_->rows(), k = a_->cols();
    transpose_into(scratch_, b_->value.data(), b_rows_, k);  // [k, n]
    std::fill(out_->value.begin(), out_->value.end(), T(0));
    gemm_acc(out_->value.data(), a_->value.data(), scratch_.data(), m, k, b_rows_);
  }

  void backward() override {
    const int m = a_->rows(), k = a_->cols(), n = b_rows_;
    a_->alloc_grad();
    gemm_acc(a_->grad.data(), out_->grad.data(), b_->value.data(), m, n, k);
    b_->alloc_grad();
    transpose_into(scratch_, out_->grad.data(), m, n);  // g^T [n,m]
    gemm_acc(b_->grad.data(), scratch_.data(), a_->value.data(), n, m, k);
  }

 private:
  TensorNode<T>* a_;
  TensorNode<T>* b_;
  int b_rows_;
  TensorNode<T>* out_;
  std::vector<T> scratch_;
};

template <typename T>
class LayerNormOp final : public Op<T> {
 public:
  static constexpr T kEps = T(1e-5);

  LayerNormOp(TensorNode<T>* x, TensorNode<T>* gain, TensorNode<T>* bias, TensorNode<T>* out)
      : x_(x), gain_(gain), bias_(bias), out_(out) {}

  void forward() override {
    const int n = x_->rows();
    const int d = x_->cols();
    mean_.resize(n);
    rstd_.resize(n);
    for (int r = 0; r < n; ++r) {
      const T* xr = x_->value.data() + static_cast<size_t>(r) * d;
      T mu = T(0);
      for (int j = 0; j < d; ++j) mu += xr[j];
      mu /= T(d);
      T var = T(0);
      for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= T(d);
      const T rstd = T(1) / std::sqrt(var + kEps);
      mean_[r] = mu;
      rstd_[r] = rstd;
      T* yr = out_->value.data() + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j)
        yr[j] = (xr[j] - mu) * rstd * gain_->value[j] + bias_->value[j];
    }
  }

  void backward() override {
    const int n = x_->rows();
    const int d = x_->cols();
    x_->alloc_grad();
    gain_->alloc_grad();
    bias_->alloc_grad();
    for (int r = 0; r < n; ++r) {
      const T* xr = x_->value.data() + static_cast<size_t>(r) * d;
      const T* g = out_->grad.data() + static_cast<size_t>(r) * d;
      T* gx = x_->grad.data() + static_cast<size_t>(r) * d;
      const T mu = mean_[r], rstd = rstd_[r];
      T mean_gy = T(0), mean_gyx = T(0);
      for (int j = 0; j < d; ++j) {
        const T xhat = (xr[j] - mu) * rstd;
        const T gy = g[j] * gain_->value[j];
        mean_gy += gy;
        mean_gyx += gy * xhat;
        gain_->grad[j] += g[j] * xhat;
        bias_->grad[j] += g[j];
      }
      mean_gy /= T(d);
      mean_gyx /= T(d);
      for (int j = 0; j < d; ++j) {
        const T xhat = (xr[j] - mu) * rstd;
        const T gy = g[j] * gain_->value[j];
        gx[j] += rstd * (gy - mean_gy - xhat * mean_gyx);
      }
    }
  }

 private:
  TensorNode<T>* x_;
  TensorNode<T>* gain_;
  TensorNode<T>* bias_;
  TensorNode<T>* out_;
  std::vector<T> mean_, rstd_;
};

// Tanh-form gelu: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
class GeluOp final : public Op<T> {
 public:
  GeluOp(TensorNode<T>* x, TensorNode<T>* out) : x_(x), out_(out) {}

  void forward() override {
    const size_t n = x_->value.size();
    for (size_t i = 0; i < n; ++i) {
      const T x = x_->value[i];
      const T u = kC0 * (x + kC1 * x * x * x);
      out_->value[i] = T(0.5) * x * (T(1) + std::tanh(u));
    }
  }

  void backward() override {
    x_->alloc_grad();
    const size_t n = x_->value.size();
    for (size_t i = 0; i < n; ++i) {
      const T x = x_->value[i];
      const T u = kC0 * (x + kC1 * x * x * x);
      const T t = std::tanh(u);
      const T du = kC0 * (T(1) + T(3) * kC1 * x * x);
      const T dydx = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
      x_->grad[i] += out_->grad[i] * dydx;
    }
  }

 private:
  static constexpr T kC0 = T(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T kC1 = T(0.044715);
  TensorNode<T>* x_;
  TensorNode<T>* out_;
};

template <typename T>
class ReduceSumOp final : public Op<T> {
 public:
  ReduceSumOp(TensorNode<T>* x, TensorNode<T>* out) : x_(x), out_(out) {}

  void forward() override {
    T s = T(0);
    for (T v : x_->value) s += v;
    out_->value[0] = s;
  }

  void backward() override {
    x_->alloc_grad();
    const T g = out_->grad[0];
    for (auto& gx : x_->grad) gx += g;
  }

 private:
  TensorNode<T>* x_;
  TensorNode<T>* out_;
};

template <typename T>
class CausalAttentionOp final : public Op<T> {
 public:
  CausalAttentionOp(TensorNode<T>* qkv, int batch, int time, int n_head, TensorNode<T>* out)
      : qkv_(qkv), batch_(batch), time_(time), n_head_(n_head), out_(out) {
    d_ = qkv->cols() / 3;
    d_head_ = d_ / n_head_;
    scale_ = T(1) / std::sqrt(static_cast<T>(d_head_));
    probs_.assign(static_cast<size_t>(batch_) * n_head_ * time_ * time_, T(0));
  }

  void forward() override {
    const int d3 = 3 * d_;
    for (int b = 0; b < batch_; ++b) {
      for (int h = 0; h < n_head_; ++h) {
        T* pbh = probs_.data() + prob_offset(b, h);
        for (int t = 0; t < time_; ++t) {
          const T* q = row(b, t) + h * d_head_;
          T* prow = pbh + static_cast<size_t>(t) * time_;
          T mx = -std::numeric_limits<T>::infinity();
          for (int j = 0; j <= t; ++j) {
            const T* k = row(b, j) + d_ + h * d_head_;
            T s = T(0);
            for (int e = 0; e < d_head_; ++e) s += q[e] * k[e];
            s *= scale_;
            prow[j] = s;
            mx = std::max(mx, s);
          }
          T z = T(0);
          for (int j = 0; j <= t; ++j) {
            prow[j] = std::exp(prow[j] - mx);
            z += prow[j];
          }
          const T inv_z = T(1) / z;
          for (int j = 0; j <= t; ++j) prow[j] *= inv_z;
          T* o = out_->value.data() + (static_cast<size_t>(b) * time_ + t) * d_ + h * d_head_;
          std::fill(o, o + d_head_, T(0));
          for (int j = 0; j <= t; ++j) {
            const T* v = row(b, j) + 2 * d_ + h * d_head_;
            const T p = prow[j];
            for (int e = 0; e < d_head_; ++e) o[e] += p * v[e];
          }
        }
      }
    }
    (void)d3;
  }

  void backward() override {
    qkv_->alloc_grad();
    std::vector<T> gp(time_);
    for (int b = 0; b < batch_; ++b) {
      for (int h = 0; h < n_head_; ++h) {
        const T* pbh = probs_.data() + prob_offset(b, h);
        for (int t = 0; t < time_; ++t) {
          const T* prow = pbh + static_cast<size_t>(t) * time_;
          const T* go = out_->grad.data() + (static_cast<size_t>(b) * time_ + t) * d_ + h * d_head_;
          const T* q = row(b, t) + h * d_head_;
          T sum_pg = T(0);
          for (int j = 0; j <= t; ++j) {
            const T* v = row(b, j) + 2 * d_ + h * d_head_;
            T dp = T(0);
            for (int e = 0; e < d_head_; ++e) dp += go[e] * v[e];
            gp[j] = dp;
            sum_pg += prow[j] * dp;
          }
          T* gq = grow(b, t) + h * d_head_;
          for (int j = 0; j <= t; ++j) {
            const T gs = prow[j] * (gp[j] - sum_pg) * scale_;
            const T* k = row(b, j) + d_ + h * d_head_;
            T* gk = grow(b, j) + d_ + h * d_head_;
            T* gv = grow(b, j) + 2 * d_ + h * d_head_;
            const T p = prow[j];
            for (int e = 0; e < d_head_; ++e) {
              gq[e] += gs * k[e];
              gk[e] += gs * q[e];
              gv[e] += p * go[e];
            }
          }
        }
      }
    }
  }

 private:
  const T* row(int b, int t) const {
    return qkv_->value.data() + (static_cast<size_t>(b) * time_ + t) * 3 * d_;
  }
  T* grow(int b, int t) {
    return qkv_->grad.data() + (static_cast<size_t>(b) * time_ + t) * 3 * d_;
  }
  size_t prob_offset(int b, int h) const {
    return (static_cast<size_t>(b) * n_head_ + h) * time_ * time_;
  }

  TensorNode<T>* qkv_;
  int batch_, time_, n_head_, d_, d_head_;
  T scale_;
  TensorNode<T>* out_;
  std::vector<T> probs_;
};

template <typename T>
class SoftmaxCrossEntropyOp final : public Op<T> {
 public:
  SoftmaxCrossEntropyOp(TensorNode<T>* logits, const std::vector<int32_t>* targets,
                        Reduction reduction, TensorNode<T>* out)
      : logits_(logits), targets_(targets), reduction_(reduction), out_(out) {
    probs_.assign(logits->value.size(), T(0));
  }

  void forward() override {
    const int n = logits_->rows();
    const int v = logits_->cols();
    if (static_cast<int>(targets_->size()) != n)
      throw InputError("cross_entropy: bound target vector has size " +
                       std::to_string(targets_->size()) + ", graph was built for " +
                       std::to_string(n));
    T total = T(0);
    for (int r = 0; r < n; ++r) {
      const int32_t y = (*targets_)[r];
      if (y < 0 || y >= v)
        throw InputError("cross_entropy: target " + std::to_string(y) + " at row " +
                         std::to_string(r) + " out of range [0," + std::to_string(v) + ")");
      const T* l = logits_->value.data() + static_cast<size_t>(r) * v;
      T* p = probs_.data() + static_cast<size_t>(r) * v;
      T mx = l[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, l[j]);
      T z = T(0);
      for (int j = 0; j < v; ++j) {
        p[j] = std::exp(l[j] - mx);
        z += p[j];
      }
      const T inv_z = T(1) / z;
      for (int j = 0; j < v; ++j) p[j] *= inv_z;
      total += std::log(z) + mx - l[y];
    }
    out_->value[0] = reduction_ == Reduction::kMean ? total / T(n) : total;
  }

  void backward() override {
    logits_->alloc_grad();
    const int n = logits_->rows();
    const int v = logits_->cols();
    const T w = out_->grad[0] * (reduction_ == Reduction::kMean ? T(1) / T(n) : T(1));
    for (int r = 0; r < n; ++r) {
      const T* p = probs_.data() + static_cast<size_t>(r) * v;
      T* g = logits_->grad.data() + static_cast<size_t>(r) * v;
      const int32_t y = (*targets_)[r];
      for (int j = 0; j < v; ++j) g[j] += w * p[j];
      g[y] -= w;
    }
  }

 private:
  TensorNode<T>* logits_;
  const std::vector<int32_t>* targets_;
  Reduction reduction_;
  TensorNode<T>* out_;
  std::vector<T> probs_;
};

}  // namespace

template <typename T>
Graph<T>::Graph() = default;

template <typename T>
Graph<T>::~Graph() = default;

template <typename T>
TensorNode<T>* Graph<T>::activation(std::vector<int> shape, std::string name) {
  nodes_.push_back(std::make_unique<TensorNode<T>>(std::move(shape), false, std::move(name)));
  return nodes_.back().get();
}

template <typename T>
TensorNode<T>* Graph<T>::lookup(TensorNode<T>* table, const std::vector<int32_t>* ids, int n) {
  require_2d(table, "lookup");
  if (n <= 0) throw ShapeError("lookup: need positive row count");
  auto* out = activation({n, table->cols()}, "lookup");
  ops_.push_back(std::make_unique<LookupOp<T>>(table, ids, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::add(TensorNode<T>* a, TensorNode<T>* b) {
  if (a->shape != b->shape)
    throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto* out = activation(a->shape, "add");
  ops_.push_back(std::make_unique<AddOp<T>>(a, b, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::add_bias(TensorNode<T>* x, TensorNode<T>* bias) {
  require_2d(x, "add_bias");
  if (bias->shape.size() != 1 || bias->shape[0] != x->cols())
    throw ShapeError("add_bias: bias " + shape_str(bias->shape) + " does not match last dim of " +
                     shape_str(x->shape));
  auto* out = activation(x->shape, "add_bias");
  ops_.push_back(std::make_unique<AddBiasOp<T>>(x, bias, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::matmul(TensorNode<T>* a, TensorNode<T>* b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a->cols() != b->rows())
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a->shape) + " * " +
                     shape_str(b->shape));
  auto* out = activation({a->rows(), b->cols()}, "matmul");
  ops_.push_back(std::make_unique<MatmulOp<T>>(a, b, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::matmul_nt(TensorNode<T>* a, TensorNode<T>* b, int b_rows) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (b_rows < 0) b_rows = b->rows();
  if (b_rows > b->rows())
    throw ShapeError("matmul_nt: requested " + std::to_string(b_rows) + " rows of " +
                     shape_str(b->shape));
  if (a->cols() != b->cols())
    throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a->shape) + " * " +
                     shape_str(b->shape) + "^T");
  auto* out = activation({a->rows(), b_rows}, "matmul_nt");
  ops_.push_back(std::make_unique<MatmulNtOp<T>>(a, b, b_rows, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::layernorm(TensorNode<T>* x, TensorNode<T>* gain, TensorNode<T>* bias) {
  require_2d(x, "layernorm");
  if (gain->numel() != x->cols() || bias->numel() != x->cols())
    throw ShapeError("layernorm: gain/bias must match last dim " + std::to_string(x->cols()));
  auto* out = activation(x->shape, "layernorm");
  ops_.push_back(std::make_unique<LayerNormOp<T>>(x, gain, bias, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::gelu(TensorNode<T>* x) {
  auto* out = activation(x->shape, "gelu");
  ops_.push_back(std::make_unique<GeluOp<T>>(x, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::reduce_sum(TensorNode<T>* x) {
  auto* out = activation({1}, "reduce_sum");
  ops_.push_back(std::make_unique<ReduceSumOp<T>>(x, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::causal_self_attention(TensorNode<T>* qkv, int batch, int time,
                                               int n_head) {
  require_2d(qkv, "attention");
  const int d3 = qkv->cols();
  if (d3 % 3 != 0) throw ShapeError("attention: qkv last dim must be 3*d_model");
  const int d = d3 / 3;
  if (d % n_head != 0) throw ShapeError("attention: d_model not divisible by n_head");
  if (qkv->rows() != batch * time)
    throw ShapeError("attention: qkv rows " + std::to_string(qkv->rows()) + " != batch*time");
  auto* out = activation({batch * time, d}, "attention");
  ops_.push_back(std::make_unique<CausalAttentionOp<T>>(qkv, batch, time, n_head, out));
  return out;
}

template <typename T>
TensorNode<T>* Graph<T>::softmax_cross_entropy(TensorNode<T>* logits,
                                               const std::vector<int32_t>* targets,
                                               Reduction reduction) {
  require_2d(logits, "cross_entropy");
  auto* out = activation({1}, "cross_entropy");
  ops_.push_back(std::make_unique<SoftmaxCrossEntropyOp<T>>(logits, targets, reduction, out));
  return out;
}

template <typename T>
void Graph<T>::forward() {
  for (auto& op : ops_) op->forward();
}

template <typename T>
void Graph<T>::zero_activation_grads() {
  for (auto& n : nodes_) n->zero_grad();
}

template <typename T>
void Graph<T>::backward(TensorNode<T>* loss) {
  if (loss->numel() != 1) throw ShapeError("backward: loss must be a scalar node");
  zero_activation_grads();
  loss->alloc_grad();
  loss->grad[0] = T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)->backward();
}

template struct TensorNode<float>;
template struct TensorNode<double>;
template class Graph<float>;
template class Graph<double>;
template void gemm_acc<float>(float*, const float*, const float*, int, int, int);
template void gemm_acc<double>(double*, const double*, const double*, int, int, int);

}  // namespace memcap::nn
