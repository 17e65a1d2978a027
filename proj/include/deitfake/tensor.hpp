#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deitfake {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Row-major float32 array with an optional gradient buffer.
//
// A Tensor is a handle: copies share the same storage and gradient, which is
// what lets the tape route adjoints back to parameters. Use clone() for an
// independent copy. An empty shape denotes a scalar.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value);

  const Shape& shape() const noexcept { return node_->shape; }
  std::size_t rank() const noexcept { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return node_->data.size(); }

  std::span<float> data() noexcept { return node_->data; }
  std::span<const float> data() const noexcept { return node_->data; }
  float item() const;

  bool requires_grad() const noexcept { return node_->requires_grad; }
  void set_requires_grad(bool on) noexcept { node_->requires_grad = on; }

  bool has_grad() const noexcept { return !node_->grad.empty(); }
  std::span<float> grad() noexcept { return node_->grad; }
  std::span<const float> grad() const noexcept { return node_->grad; }
  // Allocates a zero gradient buffer if none exists. Gradient state belongs
  // to the shared storage, so these work through const handles.
  std::span<float> ensure_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

// Ordered record of differentiable ops executed while the tape is active.
//
// Ops consult GradTape::active() and record an adjoint closure whenever one of
// their inputs requires a gradient. backward() replays the closures in exact
// reverse order, once.
class GradTape {
 public:
  using Adjoint = std::function<void()>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(const char* op, Adjoint adjoint);
  std::size_t size() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }
  void reset();

  // Names of recorded ops in execution order.
  std::vector<std::string> op_names() const;

  static GradTape* active() noexcept;

  // Installs a tape as the active one for the current thread.
  class Recording {
   public:
    explicit Recording(GradTape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    GradTape* previous_;
  };

 private:
  friend void backward(const Tensor& loss, GradTape& tape);
  struct Entry {
    const char* op;
    Adjoint adjoint;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Seeds d(loss)/d(loss) = 1 and propagates adjoints through the tape.
// Gradients accumulate into existing buffers; callers zero them between steps.
void backward(const Tensor& loss, GradTape& tape);

// True when the active tape should record an op over these inputs.
bool should_record(std::initializer_list<const Tensor*> inputs) noexcept;

// Throws NumericError if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* op);

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
// x[..., D...] + b[D...] where b's shape is a suffix of x's shape.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);

// [m,k] x [k,n] -> [m,n], or batched [g,m,k] x [g,k,n] -> [g,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
// Repeats x along a new leading axis of extent n.
Tensor broadcast_leading(const Tensor& x, std::size_t n);
// Takes index along axis and drops that axis.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);

Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace ops

// Scalar GELU, tanh approximation:
//   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
double gelu_scalar(double x);

}  // namespace deitfake
