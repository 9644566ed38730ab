#include "pico/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "pico/errors.hpp"

namespace pico {

namespace {
thread_local Tape* g_active_tape = nullptr;

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto extent : shape)
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  impl_->data.assign(element_count(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (auto extent : shape)
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  if (element_count(shape) != values.size())
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size() const { return defined() ? impl_->data.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non-matrix " + shape_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non-matrix " + shape_string(shape()));
  return impl_->shape[1];
}

std::span<double> Tensor::values() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

std::span<const double> Tensor::values() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->requires_grad = on;
  if (!on) drop_grad();
}

bool Tensor::has_grad() const { return impl_ && impl_->has_grad; }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return impl_->grad;
}

std::span<double> Tensor::grad_buffer() const {
  if (!requires_grad()) throw ContractError("gradient requested for a tensor without requires_grad");
  if (!impl_->has_grad) {
    impl_->grad.assign(impl_->data.size(), 0.0);
    impl_->has_grad = true;
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::drop_grad() {
  if (!impl_) return;
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
  impl_->has_grad = false;
}

Tensor Tensor::clone() const {
  return Tensor(shape(), impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

// ---------------------------------------------------------------------------

void Tape::record(const char* op, std::function<void()> backward) {
  entries_.push_back({op, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad())
    throw ContractError("backward() on a loss that does not depend on any tracked tensor");
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  replay_log_.clear();
  replay_log_.reserve(entries_.size());
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    replay_log_.push_back(it->op);
    it->backward();
  }
}

void Tape::clear() {
  entries_.clear();
  replay_log_.clear();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace pico
