#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pico {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Copies share storage (handle
// semantics), which is what lets the tape route gradients back to parameters.
// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;
  double at(std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const { return values()[row * cols() + col]; }

  bool requires_grad() const;
  // Turning gradient tracking off also releases any gradient buffer.
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Gradient storage, allocated (zero-filled) on first use. Only valid for
  // tensors that require grad. Callable on const handles since the buffer
  // lives in shared storage.
  std::span<double> grad_buffer() const;
  void zero_grad();
  void drop_grad();

  Tensor clone() const;   // deep copy, same requires_grad flag, no grad
  Tensor detach() const;  // deep copy without gradient tracking

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const void* identity() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool has_grad = false;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Define-by-run record of differentiable operations. An op records itself
// on the thread's active tape only when at least one input requires grad.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and replays every recorded op once, newest
  // first. Gradients accumulate only into tensors that require grad.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear();
  // Op names in the order the last backward() visited them.
  const std::vector<const char*>& replay_log() const { return replay_log_; }

  static Tape* active();

 private:
  friend class TapeScope;
  struct Entry {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  std::vector<const char*> replay_log_;
};

// Makes a tape the active one for the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace pico
