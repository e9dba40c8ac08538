#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mega {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class Tape;

// Dense row-major array of doubles. Values are immutable and shared between
// copies. A tensor optionally refers to the tape node that produced it; only
// such tensors receive gradients.
//
// Rank 1 and rank 2 are supported. Matrix primitives require rank 2; a
// rank-1 tensor of extent n is treated as a 1 x n row where a row is needed.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : shape_[0]; }

  std::span<const double> values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }
  double item() const;
  std::vector<double> to_vector() const { return *data_; }

  bool has_node() const { return node_.has_value(); }
  std::optional<std::size_t> node_id() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }

  // Same values, off the tape.
  Tensor detached() const;
  bool bitwise_equal(const Tensor& other) const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::uint64_t tape_id_ = 0;
  std::optional<std::size_t> node_;
};

enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  ConcatRows,
  Sum,
  SumRows,
  SumCols,
  Mean,
  Relu,
  Sigmoid,
  Exp,
  Log,
  Square,
  Sqrt,
  Reciprocal,
  Transpose,
  RowSoftmax,
  L2NormalizeRows,
  GatherRows,
  ScatterAddRows,
  Scale,
};

std::string_view op_name(OpKind kind);

// Non-tensor arguments of a primitive.
struct OpAttrs {
  std::vector<std::size_t> index;  // gather/scatter row indices
  std::size_t extent = 0;          // scatter output rows
  double scalar = 0.0;             // scale factor
};

struct TapeNode {
  OpKind kind = OpKind::Leaf;
  std::vector<Tensor> inputs;
  Tensor output;
  OpAttrs attrs;
  bool from_backward = false;
};

// Append-only record of primitive applications. Node inputs always precede
// the node, so index order is a topological order.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::size_t i) const { return nodes_[i]; }

  // Registers `value` as a differentiable root on this tape.
  Tensor leaf(const Tensor& value);

  // Records a computed output; returns it bound to the new node.
  Tensor record(OpKind kind, std::vector<Tensor> inputs, Tensor output, OpAttrs attrs);

  bool recording_backward() const { return in_backward_; }
  void set_recording_backward(bool on) { in_backward_ = on; }

  // The tape that primitives record onto on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;

  std::uint64_t id_;
  std::vector<TapeNode> nodes_;
  bool in_backward_ = false;
};

// Makes a tape active for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

// Suspends recording: primitives evaluated inside return constants.
class NoGradGuard {
 public:
  NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  ~NoGradGuard();

  static bool active();

 private:
  bool previous_;
};

}  // namespace mega
