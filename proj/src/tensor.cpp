#include "deitfake/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "deitfake/errors.hpp"

namespace deitfake {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->data.assign(1, 0.0f); }

Tensor::Tensor(Shape shape, float fill) : node_(std::make_shared<Node>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : node_(std::make_shared<Node>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, std::vector<float>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis out of range for shape " + shape_str(shape()));
  return node_->shape[axis];
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar shape " + shape_str(shape()));
  return node_->data[0];
}

std::span<float> Tensor::ensure_grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

void Tensor::clear_grad() const {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  Tensor out(node_->shape, node_->data);
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

// ---------------------------------------------------------------------------
// GradTape

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

void GradTape::record(const char* op, Adjoint adjoint) {
  if (consumed_) throw StateError("cannot record onto a consumed tape");
  entries_.push_back(Entry{op, std::move(adjoint)});
}

void GradTape::reset() {
  entries_.clear();
  consumed_ = false;
}

std::vector<std::string> GradTape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.emplace_back(e.op);
  return names;
}

GradTape* GradTape::active() noexcept { return g_active_tape; }

GradTape::Recording::Recording(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
GradTape::Recording::~Recording() { g_active_tape = previous_; }

void backward(const Tensor& loss, GradTape& tape) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (tape.consumed_) throw StateError("backward called twice on the same tape without reset");
  tape.consumed_ = true;
  if (!loss.requires_grad()) return;
  Tensor seed = loss;
  seed.ensure_grad()[0] = 1.0f;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) it->adjoint();
}

bool should_record(std::initializer_list<const Tensor*> inputs) noexcept {
  if (GradTape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void check_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

// ---------------------------------------------------------------------------
// Kernels. Accumulation is done in double so that finite-difference checks in
// float32 stay well inside tolerance.

namespace {

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    const float* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const float* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * bp[j];
    }
    float* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += static_cast<float>(row[j]);
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(ai[p]) * bj[p];
      c[i * n + j] += static_cast<float>(acc);
    }
  }
}

// C[m,n] += A[k,m]^T B[k,n]
void gemm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const float* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * bp[j];
    }
    float* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += static_cast<float>(row[j]);
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Visits every element of the permuted layout in output order, passing the
// matching offset into the source layout.
template <typename Fn>
void for_each_permuted(const Shape& in_shape, const std::vector<std::size_t>& axes, Fn&& fn) {
  const std::size_t r = in_shape.size();
  const auto in_strides = strides_of(in_shape);
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    step[i] = in_strides[axes[i]];
  }
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> idx(r, 0);
  std::size_t in_off = 0;
  for (std::size_t out = 0; out < total; ++out) {
    fn(out, in_off);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        in_off += step[d];
        break;
      }
      in_off -= step[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
}

Tensor make_output(Shape shape, bool track) {
  Tensor out(std::move(shape));
  out.set_requires_grad(track);
  return out;
}

}  // namespace

double gelu_scalar(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool track = should_record({&a, &b});
  Tensor out = make_output(a.shape(), track);
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] + bd[i];
  check_finite(out, "add");
  if (track) {
    GradTape::active()->record("add", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto tg = t->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) tg[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const auto& xs = x.shape();
  const auto& bs = bias.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.end() - static_cast<long>(bs.size()))) {
    throw DimensionError("add_bias: bias shape " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
  }
  const bool track = should_record({&x, &bias});
  Tensor out = make_output(xs, track);
  const std::size_t inner = bias.numel();
  const std::size_t outer = x.numel() / inner;
  auto o = out.data();
  auto xd = x.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t j = 0; j < inner; ++j) o[r * inner + j] = xd[r * inner + j] + bd[j];
  }
  check_finite(out, "add_bias");
  if (track) {
    GradTape::active()->record("add_bias", [x, bias, out, inner, outer]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto xg = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
      }
      if (bias.requires_grad()) {
        std::vector<double> acc(inner, 0.0);
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t j = 0; j < inner; ++j) acc[j] += g[r * inner + j];
        }
        auto bg = bias.ensure_grad();
        for (std::size_t j = 0; j < inner; ++j) bg[j] += static_cast<float>(acc[j]);
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool track = should_record({&a, &b});
  Tensor out = make_output(a.shape(), track);
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * bd[i];
  check_finite(out, "mul");
  if (track) {
    GradTape::active()->record("mul", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ag = a.ensure_grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto bg = b.ensure_grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) bg[i] += g[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, float factor) {
  const bool track = should_record({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] * factor;
  check_finite(out, "scale");
  if (track) {
    GradTape::active()->record("scale", [x, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xg = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    m = a.dim(0);
    k = a.dim(1);
    n = b.dim(1);
    if (b.dim(0) != k) {
      throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    out_shape = {m, n};
  } else if (a.rank() == 3 && b.rank() == 3) {
    batch = a.dim(0);
    m = a.dim(1);
    k = a.dim(2);
    n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
      throw DimensionError("matmul: batched extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    out_shape = {batch, m, n};
  } else {
    throw DimensionError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const bool track = should_record({&a, &b});
  Tensor out = make_output(std::move(out_shape), track);
  for (std::size_t g = 0; g < batch; ++g) {
    gemm_nn(a.data().data() + g * m * k, b.data().data() + g * k * n, out.data().data() + g * m * n, m, k, n);
  }
  check_finite(out, "matmul");
  if (track) {
    GradTape::active()->record("matmul", [a, b, out, batch, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const float* go = out.grad().data();
      if (a.requires_grad()) {
        float* ga = a.ensure_grad().data();
        for (std::size_t g = 0; g < batch; ++g) {
          gemm_nt(go + g * m * n, b.data().data() + g * k * n, ga + g * m * k, m, n, k);
        }
      }
      if (b.requires_grad()) {
        float* gb = b.ensure_grad().data();
        for (std::size_t g = 0; g < batch; ++g) {
          gemm_tn(a.data().data() + g * m * k, go + g * m * n, gb + g * k * n, k, m, n);
        }
      }
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw DimensionError("permute: axis list length differs from rank");
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: axes are not a permutation");
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(axes[i]);
  const bool track = should_record({&x});
  Tensor out = make_output(out_shape, track);
  {
    auto o = out.data();
    auto xd = x.data();
    for_each_permuted(x.shape(), axes, [&](std::size_t out_i, std::size_t in_i) { o[out_i] = xd[in_i]; });
  }
  if (track) {
    GradTape::active()->record("permute", [x, out, axes]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xg = x.ensure_grad();
      for_each_permuted(x.shape(), axes, [&](std::size_t out_i, std::size_t in_i) { xg[in_i] += g[out_i]; });
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() == 2) return permute(x, {1, 0});
  if (x.rank() == 3) return permute(x, {0, 2, 1});
  throw DimensionError("transpose: expected rank 2 or 3, got " + shape_str(x.shape()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes size");
  }
  const bool track = should_record({&x});
  Tensor out(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()));
  out.set_requires_grad(track);
  if (track) {
    GradTape::active()->record("reshape", [x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xg = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw DimensionError("concat: incompatible ranks or axis");
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw DimensionError("concat: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                           " differ off the concat axis");
    }
  }
  Shape out_shape = a.shape();
  out_shape[axis] += b.dim(axis);
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  const std::size_t a_chunk = a.numel() / outer;
  const std::size_t b_chunk = b.numel() / outer;
  const bool track = should_record({&a, &b});
  Tensor out = make_output(std::move(out_shape), track);
  auto o = out.data();
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(a.data().begin() + r * a_chunk, a_chunk, o.begin() + r * (a_chunk + b_chunk));
    std::copy_n(b.data().begin() + r * b_chunk, b_chunk, o.begin() + r * (a_chunk + b_chunk) + a_chunk);
  }
  if (track) {
    GradTape::active()->record("concat", [a, b, out, outer, a_chunk, b_chunk]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      const std::size_t row = a_chunk + b_chunk;
      if (a.requires_grad()) {
        auto ag = a.ensure_grad();
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t j = 0; j < a_chunk; ++j) ag[r * a_chunk + j] += g[r * row + j];
        }
      }
      if (b.requires_grad()) {
        auto bg = b.ensure_grad();
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t j = 0; j < b_chunk; ++j) bg[r * b_chunk + j] += g[r * row + a_chunk + j];
        }
      }
    });
  }
  return out;
}

Tensor broadcast_leading(const Tensor& x, std::size_t n) {
  if (n == 0) throw DimensionError("broadcast_leading: extent must be positive");
  Shape out_shape;
  out_shape.reserve(x.rank() + 1);
  out_shape.push_back(n);
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const bool track = should_record({&x});
  Tensor out = make_output(std::move(out_shape), track);
  const std::size_t chunk = x.numel();
  for (std::size_t r = 0; r < n; ++r) std::copy_n(x.data().begin(), chunk, out.data().begin() + r * chunk);
  if (track) {
    GradTape::active()->record("broadcast_leading", [x, out, n, chunk]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::vector<double> acc(chunk, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < chunk; ++j) acc[j] += g[r * chunk + j];
      }
      auto xg = x.ensure_grad();
      for (std::size_t j = 0; j < chunk; ++j) xg[j] += static_cast<float>(acc[j]);
    });
  }
  return out;
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  if (axis >= x.rank() || index >= x.dim(axis)) {
    throw DimensionError("select: axis/index out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t extent = x.dim(axis);
  const bool track = should_record({&x});
  Tensor out = make_output(std::move(out_shape), track);
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(x.data().begin() + (r * extent + index) * inner, inner, out.data().begin() + r * inner);
  }
  if (track) {
    GradTape::active()->record("select", [x, out, outer, inner, extent, index]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xg = x.ensure_grad();
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < inner; ++j) xg[(r * extent + index) * inner + j] += g[r * inner + j];
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax: empty class axis");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  const bool track = should_record({&x});
  Tensor out = make_output(x.shape(), track);
  auto xd = x.data();
  auto o = out.data();
  std::vector<double> e(c);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = xd.data() + r * c;
    const float mx = *std::max_element(xr, xr + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      e[j] = std::exp(static_cast<double>(xr[j]) - mx);
      total += e[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[r * c + j] = static_cast<float>(e[j] / total);
  }
  check_finite(out, "softmax");
  if (track) {
    GradTape::active()->record("softmax", [x, out, rows, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.data();
      auto xg = x.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(g[r * c + j]) * y[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          xg[r * c + j] += static_cast<float>(y[r * c + j] * (g[r * c + j] - dot));
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.numel() / d;
  const bool track = should_record({&x, &gain, &bias});
  Tensor out = make_output(x.shape(), track);
  std::vector<float> xhat(x.numel());
  std::vector<double> rstd(rows);
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double denom = var + static_cast<double>(eps);
    // Zero variance with eps == 0: every centred value is zero, so is the output.
    rstd[r] = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mu) * rstd[r];
      xhat[r * d + j] = static_cast<float>(xh);
      o[r * d + j] = static_cast<float>(gd[j] * xh + bd[j]);
    }
  }
  check_finite(out, "layer_norm");
  if (track) {
    GradTape::active()->record("layer_norm", [x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd),
                                              rows, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gd = gain.data();
      if (x.requires_grad()) {
        auto xg = x.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxh = 0.0;
          double mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(g[r * d + j]) * gd[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[r * d + j];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(g[r * d + j]) * gd[j];
            xg[r * d + j] += static_cast<float>(rstd[r] * (dxh - mean_dxh - xhat[r * d + j] * mean_dxh_xh));
          }
        }
      }
      if (gain.requires_grad() || bias.requires_grad()) {
        std::vector<double> dg(d, 0.0);
        std::vector<double> db(d, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            dg[j] += static_cast<double>(g[r * d + j]) * xhat[r * d + j];
            db[j] += g[r * d + j];
          }
        }
        if (gain.requires_grad()) {
          auto gg = gain.ensure_grad();
          for (std::size_t j = 0; j < d; ++j) gg[j] += static_cast<float>(dg[j]);
        }
        if (bias.requires_grad()) {
          auto bg = bias.ensure_grad();
          for (std::size_t j = 0; j < d; ++j) bg[j] += static_cast<float>(db[j]);
        }
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  const bool track = should_record({&x});
  Tensor out = make_output(x.shape(), track);
  auto xd = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(gelu_scalar(xd[i]));
  check_finite(out, "gelu");
  if (track) {
    GradTape::active()->record("gelu", [x, out]() mutable {
      if (!out.has_grad()) return;
      constexpr double kC = 0.7978845608028654;
      auto g = out.grad();
      auto xd = x.data();
      auto xg = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xd[i];
        const double t = std::tanh(kC * (v + 0.044715 * v * v * v));
        const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * 0.044715 * v * v);
        xg[i] += static_cast<float>(g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt));
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool track = should_record({&x});
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  out.set_requires_grad(track);
  check_finite(out, "sum");
  if (track) {
    GradTape::active()->record("sum", [x, out]() mutable {
      if (!out.has_grad()) return;
      const float g = out.grad()[0];
      for (auto& v : x.ensure_grad()) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0f / static_cast<float>(x.numel()));
}

}  // namespace ops
}  // namespace deitfake
