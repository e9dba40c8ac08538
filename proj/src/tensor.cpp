#include "mega/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <functional>
#include <numeric>

#include "mega/error.hpp"

namespace mega {

namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local Tape* t_active_tape = nullptr;
thread_local bool t_no_grad = false;

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor() : shape_{1}, data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2)
    throw ShapeError("tensor rank must be 1 or 2, got shape " + to_string(shape_));
  for (auto extent : shape_)
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape_));
  if (element_count(shape_) != values.size())
    throw ShapeError("shape " + to_string(shape_) + " does not match " +
                     std::to_string(values.size()) + " values");
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) values[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor out = *this;
  out.tape_id_ = 0;
  out.node_.reset();
  return out;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(data_->data(), other.data_->data(), size() * sizeof(double)) == 0;
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::MatMul: return "matmul";
    case OpKind::ConcatRows: return "concat-rows";
    case OpKind::Sum: return "sum";
    case OpKind::SumRows: return "sum-rows";
    case OpKind::SumCols: return "sum-cols";
    case OpKind::Mean: return "mean";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Reciprocal: return "reciprocal";
    case OpKind::Transpose: return "transpose";
    case OpKind::RowSoftmax: return "row-softmax";
    case OpKind::L2NormalizeRows: return "l2-normalize-rows";
    case OpKind::GatherRows: return "gather-rows";
    case OpKind::ScatterAddRows: return "scatter-add-rows";
    case OpKind::Scale: return "scalar-scale";
  }
  return "unknown";
}

Tape::Tape() : id_(g_next_tape_id++) {}

Tape::~Tape() {
  if (t_active_tape == this) t_active_tape = nullptr;
}

Tensor Tape::leaf(const Tensor& value) {
  return record(OpKind::Leaf, {}, value.detached(), {});
}

Tensor Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor output, OpAttrs attrs) {
  output.tape_id_ = id_;
  output.node_ = nodes_.size();
  nodes_.push_back(TapeNode{kind, std::move(inputs), output, std::move(attrs), in_backward_});
  return output;
}

Tape* Tape::active() { return t_no_grad ? nullptr : t_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(t_no_grad) { t_no_grad = true; }
NoGradGuard::~NoGradGuard() { t_no_grad = previous_; }
bool NoGradGuard::active() { return t_no_grad; }

}  // namespace mega
