#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace dcc {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Cache-line aligned storage. Vectorized reductions peel elements up to an
/// alignment boundary, so a fixed base alignment keeps the summation order
/// (and therefore every result) independent of where the heap puts a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

/// Dense row-major tensor. No views or strides: every tensor owns its data.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  /// Zero-filled tensor of the given shape.
  explicit BasicTensor(Shape shape);
  /// Throws ShapeError unless product(shape) == data.size().
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor matrix(std::initializer_list<std::initializer_list<T>> rows);
  static BasicTensor vector(std::initializer_list<T> values);
  static BasicTensor full(Shape shape, T value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Leading-axis count and last-axis width; a rank-1 tensor is one row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols(), cols()};
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  void fill(T value);
  /// Same data, new shape of equal element count.
  BasicTensor reshaped(Shape shape) const;
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }
  bool all_finite() const noexcept;

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T, AlignedAllocator<T>> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Trainable tensor with its gradient slot and Adam moments.
template <typename T>
struct BasicParameter {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  std::int64_t step_count = 0;

  BasicParameter() = default;
  explicit BasicParameter(BasicTensor<T> initial)
      : value(std::move(initial)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

using Parameter = BasicParameter<float>;

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// ---------------------------------------------------------------------------
// Kernels. Each differentiable kernel has a hand-derived *_backward partner.
// Summation order is fixed, so results are bit-reproducible.
// ---------------------------------------------------------------------------

/// [m×k]·[k×n]. Throws ShapeError naming both shapes on mismatch.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a·bᵀ for a [m×k], b [n×k].
template <typename T>
BasicTensor<T> matmul_bt(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// aᵀ·b for a [k×m], b [k×n].
template <typename T>
BasicTensor<T> matmul_at(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
struct MatmulGrads {
  BasicTensor<T> da;
  BasicTensor<T> db;
};

/// dA = dC·Bᵀ, dB = Aᵀ·dC.
template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& a, const BasicTensor<T>& b,
                               const BasicTensor<T>& dc);

/// Adds `bias` (length = cols) to every row in place.
template <typename T>
void add_row_bias(BasicTensor<T>& x, const BasicTensor<T>& bias);

/// Column sums of a matrix: the gradient of a broadcast bias.
template <typename T>
BasicTensor<T> column_sums(const BasicTensor<T>& x);

/// Row-wise softmax with per-row max subtraction.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x);

/// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy);

double sigmoid(double x) noexcept;

template <typename T>
struct LayerNormResult {
  BasicTensor<T> y;
  std::vector<T> mean;
  std::vector<T> rstd;
};

template <typename T>
struct LayerNormGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dgain;
  BasicTensor<T> dbias;
};

/// Normalizes over the last axis, then applies gain and bias. eps must be > 0.
template <typename T>
LayerNormResult<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                              const BasicTensor<T>& bias, double eps);

template <typename T>
LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                                      const LayerNormResult<T>& fwd, const BasicTensor<T>& dy);

/// tanh-approximated GELU.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

/// Mean negative log-softmax probability of `targets` over rows of `logits`.
/// Throws IndexError for a target outside [0, V).
template <typename T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets);

/// Gradient of cross_entropy with respect to the logits.
template <typename T>
BasicTensor<T> cross_entropy_backward(const BasicTensor<T>& logits, std::span<const int> targets);

template <typename T>
struct AttentionResult {
  BasicTensor<T> out;                 // [n_new × d]
  std::vector<BasicTensor<T>> probs;  // per head, [n_new × n_total]
};

template <typename T>
struct AttentionGrads {
  BasicTensor<T> dq;
  BasicTensor<T> dk;
  BasicTensor<T> dv;
};

/// Multi-head causal attention. q is [n_new × d]; k and v are [n_total × d]
/// with n_total = offset + n_new. Query row r sits at absolute position
/// offset + r and attends to key positions 0..offset+r. Heads occupy
/// contiguous column blocks of width d / n_heads.
template <typename T>
AttentionResult<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                    const BasicTensor<T>& v, std::size_t n_heads,
                                    std::size_t offset);

template <typename T>
AttentionGrads<T> causal_attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                            const BasicTensor<T>& v, std::size_t n_heads,
                                            std::size_t offset, const AttentionResult<T>& fwd,
                                            const BasicTensor<T>& dout);

/// One Adam update with bias correction; zeroes the gradient afterwards.
template <typename T>
void adam_step(BasicParameter<T>& p, const AdamHyper& hyper);

}  // namespace dcc
