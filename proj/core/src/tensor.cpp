#include "dcc/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dcc/errors.hpp"

namespace dcc {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
ConstMapMat<T> as_matrix(const BasicTensor<T>& t) {
  return ConstMapMat<T>(t.raw(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
MapMat<T> as_matrix(BasicTensor<T>& t) {
  return MapMat<T>(t.raw(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
void require_matrix(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got shape " +
                     shape_to_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* what, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(what) + ": incompatible shapes " + shape_to_string(a) + " and " +
                   shape_to_string(b));
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// BasicTensor

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_)) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<T> data;
  data.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return BasicTensor({m, n}, std::move(data));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::vector(std::initializer_list<T> values) {
  return BasicTensor({values.size()}, std::vector<T>(values));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  BasicTensor t(std::move(shape));
  t.fill(value);
  return t;
}

template <typename T>
std::size_t BasicTensor<T>::rows() const noexcept {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return 1;
  return data_.size() / shape_.back();
}

template <typename T>
std::size_t BasicTensor<T>::cols() const noexcept {
  return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  BasicTensor out(std::move(shape));
  if (out.size() != data_.size()) {
    throw ShapeError("reshape " + shape_to_string(shape_) + " -> " + shape_to_string(out.shape()));
  }
  std::copy(data_.begin(), data_.end(), out.data_.begin());
  return out;
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// matmul family

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  BasicTensor<T> c({a.dim(0), b.dim(1)});
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
  return c;
}

template <typename T>
BasicTensor<T> matmul_bt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  if (a.dim(1) != b.dim(1)) mismatch("matmul_bt", a.shape(), b.shape());
  BasicTensor<T> c({a.dim(0), b.dim(0)});
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return c;
}

template <typename T>
BasicTensor<T> matmul_at(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul_at");
  require_matrix(b, "matmul_at");
  if (a.dim(0) != b.dim(0)) mismatch("matmul_at", a.shape(), b.shape());
  BasicTensor<T> c({a.dim(1), b.dim(1)});
  as_matrix(c).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return c;
}

template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& a, const BasicTensor<T>& b,
                               const BasicTensor<T>& dc) {
  if (dc.rank() != 2 || dc.dim(0) != a.dim(0) || dc.dim(1) != b.dim(1)) {
    mismatch("matmul_backward", dc.shape(), Shape{a.dim(0), b.dim(1)});
  }
  return {matmul_bt(dc, b), matmul_at(a, dc)};
}

template <typename T>
void add_row_bias(BasicTensor<T>& x, const BasicTensor<T>& bias) {
  if (bias.size() != x.cols()) mismatch("add_row_bias", x.shape(), bias.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T* row = x.raw() + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += bias[c];
  }
}

template <typename T>
BasicTensor<T> column_sums(const BasicTensor<T>& x) {
  const std::size_t n = x.cols();
  BasicTensor<T> out({n});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* row = x.raw() + r * n;
    for (std::size_t c = 0; c < n; ++c) out[c] += row[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / sigmoid

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* in = x.raw() + r * n;
    T* out = y.raw() + r * n;
    const T mx = *std::max_element(in, in + n);
    T sum = 0;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const T inv = T{1} / sum;
    for (std::size_t c = 0; c < n; ++c) out[c] *= inv;
  }
  return y;
}

template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy) {
  if (y.shape() != dy.shape()) mismatch("softmax_rows_backward", y.shape(), dy.shape());
  BasicTensor<T> dx(y.shape());
  const std::size_t n = y.cols();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const T* yr = y.raw() + r * n;
    const T* dyr = dy.raw() + r * n;
    T dot = 0;
    for (std::size_t c = 0; c < n; ++c) dot += yr[c] * dyr[c];
    T* dxr = dx.raw() + r * n;
    for (std::size_t c = 0; c < n; ++c) dxr[c] = yr[c] * (dyr[c] - dot);
  }
  return dx;
}

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// layer norm

template <typename T>
LayerNormResult<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                              const BasicTensor<T>& bias, double eps) {
  if (!(eps > 0)) throw ParameterError("layer_norm: eps must be positive");
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d) mismatch("layer_norm", x.shape(), gain.shape());
  LayerNormResult<T> res{BasicTensor<T>(x.shape()), std::vector<T>(x.rows()),
                         std::vector<T>(x.rows())};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* in = x.raw() + r * d;
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + static_cast<T>(eps));
    T* out = res.y.raw() + r * d;
    for (std::size_t c = 0; c < d; ++c) out[c] = (in[c] - mean) * rstd * gain[c] + bias[c];
    res.mean[r] = mean;
    res.rstd[r] = rstd;
  }
  return res;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                                      const LayerNormResult<T>& fwd, const BasicTensor<T>& dy) {
  const std::size_t d = x.cols();
  LayerNormGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>({d}), BasicTensor<T>({d})};
  std::vector<T> xhat(d), dxhat(d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* in = x.raw() + r * d;
    const T* dyr = dy.raw() + r * d;
    const T mean = fwd.mean[r];
    const T rstd = fwd.rstd[r];
    T sum_dxhat = 0;
    T sum_dxhat_xhat = 0;
    for (std::size_t c = 0; c < d; ++c) {
      xhat[c] = (in[c] - mean) * rstd;
      dxhat[c] = dyr[c] * gain[c];
      g.dgain[c] += dyr[c] * xhat[c];
      g.dbias[c] += dyr[c];
      sum_dxhat += dxhat[c];
      sum_dxhat_xhat += dxhat[c] * xhat[c];
    }
    const T inv_d = T{1} / static_cast<T>(d);
    T* dxr = g.dx.raw() + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      dxr[c] = rstd * (dxhat[c] - sum_dxhat * inv_d - xhat[c] * sum_dxhat_xhat * inv_d);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// GELU

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  BasicTensor<T> y(x.shape());
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Map<const Arr> xv(x.raw(), n);
  Eigen::Map<Arr> yv(y.raw(), n);
  const T c = static_cast<T>(kGeluC);
  const T a = static_cast<T>(kGeluA);
  yv = T{0.5} * xv * (T{1} + (c * (xv + a * xv.cube())).tanh());
  return y;
}

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  BasicTensor<T> dx(x.shape());
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Map<const Arr> xv(x.raw(), n);
  Eigen::Map<const Arr> dyv(dy.raw(), n);
  Eigen::Map<Arr> dxv(dx.raw(), n);
  const T c = static_cast<T>(kGeluC);
  const T a = static_cast<T>(kGeluA);
  const Arr t = (c * (xv + a * xv.cube())).tanh();
  const Arr dt = (T{1} - t.square()) * c * (T{1} + T{3} * a * xv.square());
  dxv = dyv * (T{0.5} * (T{1} + t) + T{0.5} * xv * dt);
  return dx;
}

// ---------------------------------------------------------------------------
// cross entropy

namespace {
template <typename T>
void check_targets(const BasicTensor<T>& logits, std::span<const int> targets) {
  if (targets.size() != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " logit rows");
  }
  const auto v = static_cast<int>(logits.cols());
  for (int t : targets) {
    if (t < 0 || t >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside vocabulary [0," +
                       std::to_string(v) + ")");
    }
  }
}
}  // namespace

template <typename T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets) {
  check_targets(logits, targets);
  const std::size_t v = logits.cols();
  double total = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const T* row = logits.raw() + r * v;
    const double mx = *std::max_element(row, row + v);
    double sum = 0;
    for (std::size_t c = 0; c < v; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
    total += mx + std::log(sum) - static_cast<double>(row[targets[r]]);
  }
  return targets.empty() ? 0.0 : total / static_cast<double>(targets.size());
}

template <typename T>
BasicTensor<T> cross_entropy_backward(const BasicTensor<T>& logits, std::span<const int> targets) {
  check_targets(logits, targets);
  BasicTensor<T> d = softmax_rows(logits);
  const T inv_n = targets.empty() ? T{0} : T{1} / static_cast<T>(targets.size());
  const std::size_t v = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    T* row = d.raw() + r * v;
    row[targets[r]] -= T{1};
    for (std::size_t c = 0; c < v; ++c) row[c] *= inv_n;
  }
  return d;
}

// ---------------------------------------------------------------------------
// causal attention

template <typename T>
AttentionResult<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                    const BasicTensor<T>& v, std::size_t n_heads,
                                    std::size_t offset) {
  const std::size_t n_new = q.rows();
  const std::size_t d = q.cols();
  const std::size_t n_total = k.rows();
  if (n_heads == 0 || d % n_heads != 0) throw ShapeError("causal_attention: d not divisible by heads");
  if (k.shape() != v.shape() || k.cols() != d) mismatch("causal_attention", q.shape(), k.shape());
  if (n_total != offset + n_new) {
    throw ShapeError("causal_attention: key rows " + std::to_string(n_total) + " != offset " +
                     std::to_string(offset) + " + new rows " + std::to_string(n_new));
  }
  const std::size_t dh = d / n_heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const auto E = [](std::size_t x) { return static_cast<Eigen::Index>(x); };

  AttentionResult<T> res;
  res.out = BasicTensor<T>({n_new, d});
  res.probs.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    ConstStridedMap<T> qh(q.raw() + h * dh, E(n_new), E(dh), Eigen::OuterStride<>(E(d)));
    ConstStridedMap<T> kh(k.raw() + h * dh, E(n_total), E(dh), Eigen::OuterStride<>(E(d)));
    ConstStridedMap<T> vh(v.raw() + h * dh, E(n_total), E(dh), Eigen::OuterStride<>(E(d)));
    BasicTensor<T> p({n_new, n_total});
    auto pm = as_matrix(p);
    pm.noalias() = (qh * kh.transpose()) * scale;
    for (std::size_t r = 0; r < n_new; ++r) {
      T* row = p.raw() + r * n_total;
      const std::size_t visible = offset + r + 1;
      Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> vis(row, E(visible));
      vis = (vis - vis.maxCoeff()).exp();
      vis /= vis.sum();
      std::fill(row + visible, row + n_total, T{0});
    }
    StridedMap<T> oh(res.out.raw() + h * dh, E(n_new), E(dh), Eigen::OuterStride<>(E(d)));
    oh.noalias() = pm * vh;
    res.probs.push_back(std::move(p));
  }
  return res;
}

template <typename T>
AttentionGrads<T> causal_attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                            const BasicTensor<T>& v, std::size_t n_heads,
                                            std::size_t offset, const AttentionResult<T>& fwd,
                                            const BasicTensor<T>& dout) {
  const std::size_t n_new = q.rows();
  const std::size_t d = q.cols();
  const std::size_t n_total = k.rows();
  const std::size_t dh = d / n_heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const auto E = [](std::size_t x) { return static_cast<Eigen::Index>(x); };
  (void)offset;  // masked entries carry zero probability, so they get zero gradient

  AttentionGrads<T> g{BasicTensor<T>(q.shape()), BasicTensor<T>(k.shape()),
                      BasicTensor<T>(v.shape())};
  for (std::size_t h = 0; h < n_heads; ++h) {
    ConstStridedMap<T> qh(q.raw() + h * dh, E(n_new), E(dh), Eigen::OuterStride<>(E(d)));
    ConstStridedMap<T> kh(k.raw() + h * dh, E(n_total), E(dh), Eigen::OuterStride<>(E(d)));
    ConstStridedMap<T> vh(v.raw() + h * dh, E(n_total), E(dh), Eigen::OuterStride<>(E(d)));
    ConstStridedMap<T> doh(dout.raw() + h * dh, E(n_new), E(dh), Eigen::OuterStride<>(E(d)));
    const auto pm = as_matrix(fwd.probs[h]);

    StridedMap<T> dvh(g.dv.raw() + h * dh, E(n_total), E(dh), Eigen::OuterStride<>(E(d)));
    dvh.noalias() = pm.transpose() * doh;

    BasicTensor<T> dp({n_new, n_total});
    as_matrix(dp).noalias() = doh * vh.transpose();
    BasicTensor<T> ds = softmax_rows_backward(fwd.probs[h], dp);
    auto dsm = as_matrix(ds);
    dsm *= scale;

    StridedMap<T> dqh(g.dq.raw() + h * dh, E(n_new), E(dh), Eigen::OuterStride<>(E(d)));
    dqh.noalias() = dsm * kh;
    StridedMap<T> dkh(g.dk.raw() + h * dh, E(n_total), E(dh), Eigen::OuterStride<>(E(d)));
    dkh.noalias() = dsm.transpose() * qh;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_step(BasicParameter<T>& p, const AdamHyper& hyper) {
  p.step_count += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(p.step_count));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(p.step_count));
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T lr = static_cast<T>(hyper.lr);
  const T eps = static_cast<T>(hyper.eps);
  T* value = p.value.raw();
  T* grad = p.grad.raw();
  T* m = p.adam_m.raw();
  T* v = p.adam_v.raw();
  for (std::size_t i = 0, n = p.value.size(); i < n; ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T{1} - b1) * g;
    v[i] = b2 * v[i] + (T{1} - b2) * g * g;
    value[i] -= lr * (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps);
    grad[i] = T{0};
  }
}

// ---------------------------------------------------------------------------
// explicit instantiations

#define DCC_INSTANTIATE(T)                                                                        \
  template class BasicTensor<T>;                                                                  \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> matmul_bt(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> matmul_at(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template MatmulGrads<T> matmul_backward(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                          const BasicTensor<T>&);                                 \
  template void add_row_bias(BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> column_sums(const BasicTensor<T>&);                                     \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                    \
  template BasicTensor<T> softmax_rows_backward(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template LayerNormResult<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                         const BasicTensor<T>&, double);                          \
  template LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                                 const LayerNormResult<T>&,                       \
                                                 const BasicTensor<T>&);                          \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                            \
  template BasicTensor<T> gelu_backward(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template double cross_entropy(const BasicTensor<T>&, std::span<const int>);                     \
  template BasicTensor<T> cross_entropy_backward(const BasicTensor<T>&, std::span<const int>);    \
  template AttentionResult<T> causal_attention(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                               const BasicTensor<T>&, std::size_t, std::size_t);  \
  template AttentionGrads<T> causal_attention_backward(                                           \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,           \
      std::size_t, const AttentionResult<T>&, const BasicTensor<T>&);                             \
  template void adam_step(BasicParameter<T>&, const AdamHyper&);

DCC_INSTANTIATE(float)
DCC_INSTANTIATE(double)

#undef DCC_INSTANTIATE

}  // namespace dcc
