#include "mega/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mega/error.hpp"
#include "mega/kernels.hpp"

namespace mega {

namespace {

std::optional<OpKind> g_fault;

enum class Broadcast { Same, Scalar, Row, Col };

[[noreturn]] void shape_error(OpKind kind, std::span<const Tensor> inputs, const std::string& why) {
  std::string msg = std::string(op_name(kind)) + ": " + why + " (shapes";
  for (const auto& t : inputs) msg += " " + to_string(t.shape());
  throw ShapeError(msg + ")");
}

void expect_arity(OpKind kind, std::span<const Tensor> inputs, std::size_t n) {
  if (inputs.size() != n)
    shape_error(kind, inputs, "expected " + std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
}

void expect_matrix(OpKind kind, std::span<const Tensor> inputs, const Tensor& t) {
  if (t.rank() != 2) shape_error(kind, inputs, "needs rank-2 input");
}

Broadcast broadcast_mode(OpKind kind, std::span<const Tensor> inputs) {
  const Tensor& a = inputs[0];
  const Tensor& b = inputs[1];
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1 && (b.rank() == 1 || a.rank() == 2)) return Broadcast::Scalar;
  if (a.rank() == 2 && b.rank() == 2) {
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  }
  shape_error(kind, inputs, "operands do not broadcast");
}

template <class F>
Tensor binary(OpKind kind, std::span<const Tensor> inputs, F f) {
  expect_arity(kind, inputs, 2);
  const Tensor& a = inputs[0];
  const Tensor& b = inputs[1];
  const Broadcast mode = broadcast_mode(kind, inputs);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(a.size());
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t j = i;
    switch (mode) {
      case Broadcast::Same: break;
      case Broadcast::Scalar: j = 0; break;
      case Broadcast::Row: j = i % cols; break;
      case Broadcast::Col: j = i / cols; break;
    }
    out[i] = f(av[i], bv[j]);
  }
  return Tensor(a.shape(), std::move(out));
}

template <class F>
Tensor unary(OpKind kind, std::span<const Tensor> inputs, F f) {
  expect_arity(kind, inputs, 1);
  const auto xv = inputs[0].values();
  std::vector<double> out(xv.size());
  std::transform(xv.begin(), xv.end(), out.begin(), f);
  return Tensor(inputs[0].shape(), std::move(out));
}

Tensor compute(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::Leaf:
      expect_arity(kind, inputs, 1);
      return inputs[0].detached();
    case OpKind::Add:
      return binary(kind, inputs, [](double x, double y) { return x + y; });
    case OpKind::Sub:
      return binary(kind, inputs, [](double x, double y) { return x - y; });
    case OpKind::Mul:
      return binary(kind, inputs, [](double x, double y) { return x * y; });
    case OpKind::MatMul: {
      expect_arity(kind, inputs, 2);
      const Tensor& a = inputs[0];
      const Tensor& b = inputs[1];
      expect_matrix(kind, inputs, a);
      expect_matrix(kind, inputs, b);
      if (a.cols() != b.rows()) shape_error(kind, inputs, "inner dimensions differ");
      std::vector<double> out(a.rows() * b.cols());
      kernels::matmul(a.values(), b.values(), out, a.rows(), a.cols(), b.cols());
      return Tensor({a.rows(), b.cols()}, std::move(out));
    }
    case OpKind::ConcatRows: {
      if (inputs.empty()) shape_error(kind, inputs, "needs at least one input");
      const std::size_t cols = inputs[0].cols();
      std::size_t rows = 0;
      std::vector<double> out;
      for (const auto& t : inputs) {
        expect_matrix(kind, inputs, t);
        if (t.cols() != cols) shape_error(kind, inputs, "column counts differ");
        rows += t.rows();
        out.insert(out.end(), t.values().begin(), t.values().end());
      }
      return Tensor({rows, cols}, std::move(out));
    }
    case OpKind::Sum: {
      expect_arity(kind, inputs, 1);
      const auto v = inputs[0].values();
      return Tensor::scalar(std::accumulate(v.begin(), v.end(), 0.0));
    }
    case OpKind::Mean: {
      expect_arity(kind, inputs, 1);
      const auto v = inputs[0].values();
      return Tensor::scalar(std::accumulate(v.begin(), v.end(), 0.0) /
                            static_cast<double>(v.size()));
    }
    case OpKind::SumRows: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      std::vector<double> out(x.cols(), 0.0);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x.at(r, c);
      return Tensor({1, x.cols()}, std::move(out));
    }
    case OpKind::SumCols: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      std::vector<double> out(x.rows(), 0.0);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out[r] += x.at(r, c);
      return Tensor({x.rows(), 1}, std::move(out));
    }
    case OpKind::Relu:
      return unary(kind, inputs, [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::Sigmoid:
      return unary(kind, inputs, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
    case OpKind::Exp:
      return unary(kind, inputs, [](double x) { return std::exp(x); });
    case OpKind::Log:
      return unary(kind, inputs, [](double x) { return std::log(x); });
    case OpKind::Square:
      return unary(kind, inputs, [](double x) { return x * x; });
    case OpKind::Sqrt:
      return unary(kind, inputs, [](double x) { return std::sqrt(x); });
    case OpKind::Reciprocal:
      return unary(kind, inputs, [](double x) { return 1.0 / x; });
    case OpKind::Scale: {
      const double s = attrs.scalar;
      return unary(kind, inputs, [s](double x) { return s * x; });
    }
    case OpKind::Transpose: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      std::vector<double> out(x.size());
      kernels::transpose(x.values(), out, x.rows(), x.cols());
      return Tensor({x.cols(), x.rows()}, std::move(out));
    }
    case OpKind::RowSoftmax: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      std::vector<double> out(x.size());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.values().subspan(r * x.cols(), x.cols());
        const double hi = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
          out[r * x.cols() + c] = std::exp(row[c] - hi);
          total += out[r * x.cols() + c];
        }
        for (std::size_t c = 0; c < x.cols(); ++c) out[r * x.cols() + c] /= total;
      }
      return Tensor(x.shape(), std::move(out));
    }
    case OpKind::L2NormalizeRows: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      std::vector<double> out(x.size());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) sq += x.at(r, c) * x.at(r, c);
        if (sq == 0.0)
          throw NumericError(std::string(op_name(kind)) + ": row " + std::to_string(r) +
                             " has zero norm");
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t c = 0; c < x.cols(); ++c) out[r * x.cols() + c] = x.at(r, c) * inv;
      }
      return Tensor(x.shape(), std::move(out));
    }
    case OpKind::GatherRows: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      if (attrs.index.empty()) shape_error(kind, inputs, "empty index list");
      for (auto i : attrs.index)
        if (i >= x.rows())
          shape_error(kind, inputs, "row index " + std::to_string(i) + " out of range");
      std::vector<double> out(attrs.index.size() * x.cols());
      kernels::gather_rows(x.values(), attrs.index, out, x.cols());
      return Tensor({attrs.index.size(), x.cols()}, std::move(out));
    }
    case OpKind::ScatterAddRows: {
      expect_arity(kind, inputs, 1);
      const Tensor& x = inputs[0];
      expect_matrix(kind, inputs, x);
      if (attrs.index.size() != x.rows())
        shape_error(kind, inputs, "index list length " + std::to_string(attrs.index.size()) +
                                      " differs from row count");
      if (attrs.extent == 0) shape_error(kind, inputs, "output extent must be positive");
      for (auto i : attrs.index)
        if (i >= attrs.extent)
          shape_error(kind, inputs, "target row " + std::to_string(i) + " out of range");
      std::vector<double> out(attrs.extent * x.cols(), 0.0);
      kernels::scatter_add_rows(x.values(), attrs.index, out, x.cols());
      return Tensor({attrs.extent, x.cols()}, std::move(out));
    }
  }
  throw Error("unknown primitive");
}

// Sums a full-shape gradient down to the shape of a broadcast operand.
Tensor reduce_to(const Tensor& g, const Tensor& operand, Broadcast mode) {
  switch (mode) {
    case Broadcast::Same: return g;
    case Broadcast::Row: return sum_rows(g);
    case Broadcast::Col: return sum_cols(g);
    case Broadcast::Scalar:
      return operand.rank() == 2 ? sum_cols(sum_rows(g)) : sum(g);
  }
  return g;
}

// Gradient contributions of node `n` to each of its inputs, given the
// gradient `g` of its output. Entries are empty where `need` is false.
std::vector<std::optional<Tensor>> input_grads(const TapeNode& n, const Tensor& g,
                                               const std::vector<char>& need) {
  std::vector<std::optional<Tensor>> out(n.inputs.size());
  const auto& in = n.inputs;
  const Tensor& y = n.output;
  auto want = [&](std::size_t i) { return need[i] != 0; };

  switch (n.kind) {
    case OpKind::Leaf:
      break;
    case OpKind::Add:
    case OpKind::Sub: {
      const Broadcast mode = broadcast_mode(n.kind, in);
      if (want(0)) out[0] = g;
      if (want(1)) {
        Tensor gb = reduce_to(g, in[1], mode);
        out[1] = n.kind == OpKind::Sub ? scale(gb, -1.0) : gb;
      }
      break;
    }
    case OpKind::Mul: {
      const Broadcast mode = broadcast_mode(n.kind, in);
      if (want(0)) out[0] = mul(g, in[1]);
      if (want(1)) out[1] = reduce_to(mul(g, in[0]), in[1], mode);
      break;
    }
    case OpKind::MatMul:
      if (want(0)) out[0] = matmul(g, transpose(in[1]));
      if (want(1)) out[1] = matmul(transpose(in[0]), g);
      break;
    case OpKind::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t rows = in[i].rows();
        if (want(i)) {
          std::vector<std::size_t> idx(rows);
          std::iota(idx.begin(), idx.end(), offset);
          out[i] = gather_rows(g, std::move(idx));
        }
        offset += rows;
      }
      break;
    }
    case OpKind::Sum:
      if (want(0)) out[0] = mul(Tensor::ones(in[0].shape()), g);
      break;
    case OpKind::Mean:
      if (want(0))
        out[0] = mul(Tensor::full(in[0].shape(), 1.0 / static_cast<double>(in[0].size())), g);
      break;
    case OpKind::SumRows:
    case OpKind::SumCols:
      if (want(0)) out[0] = mul(Tensor::ones(in[0].shape()), g);
      break;
    case OpKind::Relu:
      if (want(0)) {
        std::vector<double> mask(in[0].size());
        const auto xv = in[0].values();
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = xv[i] > 0.0 ? 1.0 : 0.0;
        out[0] = mul(g, Tensor(in[0].shape(), std::move(mask)));
      }
      break;
    case OpKind::Sigmoid:
      if (want(0)) out[0] = mul(g, mul(y, sub(Tensor::ones(y.shape()), y)));
      break;
    case OpKind::Exp:
      if (want(0)) out[0] = mul(g, y);
      break;
    case OpKind::Log:
      if (want(0)) out[0] = mul(g, reciprocal(in[0]));
      break;
    case OpKind::Square:
      if (want(0)) out[0] = scale(mul(g, in[0]), 2.0);
      break;
    case OpKind::Sqrt:
      if (want(0)) out[0] = scale(mul(g, reciprocal(y)), 0.5);
      break;
    case OpKind::Reciprocal:
      if (want(0)) out[0] = scale(mul(g, square(y)), -1.0);
      break;
    case OpKind::Scale:
      if (want(0)) out[0] = scale(g, n.attrs.scalar);
      break;
    case OpKind::Transpose:
      if (want(0)) out[0] = transpose(g);
      break;
    case OpKind::RowSoftmax:
      if (want(0)) out[0] = mul(y, sub(g, sum_cols(mul(g, y))));
      break;
    case OpKind::L2NormalizeRows:
      if (want(0)) {
        const Tensor inv_norm = reciprocal(sqrt(sum_cols(square(in[0]))));
        out[0] = mul(sub(g, mul(y, sum_cols(mul(g, y)))), inv_norm);
      }
      break;
    case OpKind::GatherRows:
      if (want(0)) out[0] = scatter_add_rows(g, n.attrs.index, in[0].rows());
      break;
    case OpKind::ScatterAddRows:
      if (want(0)) out[0] = gather_rows(g, n.attrs.index);
      break;
  }

  if (g_fault && *g_fault == n.kind)
    for (auto& o : out)
      if (o) o = scale(*o, 1.1);
  return out;
}

}  // namespace

Tensor primitive_forward(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  Tensor result = compute(kind, inputs, attrs);
  const bool taped = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.has_node(); });
  if (!taped || NoGradGuard::active()) return result;

  Tape* tape = Tape::active();
  if (tape == nullptr)
    throw Error(std::string(op_name(kind)) + ": input is on a tape but no tape is active");
  for (const auto& t : inputs)
    if (t.has_node() && t.tape_id() != tape->id())
      throw Error(std::string(op_name(kind)) + ": input belongs to an inactive tape");
  return tape->record(kind, std::vector<Tensor>(inputs.begin(), inputs.end()), std::move(result),
                      attrs);
}

namespace {

Tensor apply1(OpKind kind, const Tensor& x, OpAttrs attrs = {}) {
  return primitive_forward(kind, std::span<const Tensor>(&x, 1), attrs);
}

Tensor apply2(OpKind kind, const Tensor& a, const Tensor& b) {
  const Tensor args[] = {a, b};
  return primitive_forward(kind, args);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return apply2(OpKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply2(OpKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply2(OpKind::Mul, a, b); }
Tensor matmul(const Tensor& a, const Tensor& b) { return apply2(OpKind::MatMul, a, b); }
Tensor concat_rows(std::span<const Tensor> parts) {
  return primitive_forward(OpKind::ConcatRows, parts);
}
Tensor sum(const Tensor& x) { return apply1(OpKind::Sum, x); }
Tensor sum_rows(const Tensor& x) { return apply1(OpKind::SumRows, x); }
Tensor sum_cols(const Tensor& x) { return apply1(OpKind::SumCols, x); }
Tensor mean(const Tensor& x) { return apply1(OpKind::Mean, x); }
Tensor relu(const Tensor& x) { return apply1(OpKind::Relu, x); }
Tensor sigmoid(const Tensor& x) { return apply1(OpKind::Sigmoid, x); }
Tensor exp(const Tensor& x) { return apply1(OpKind::Exp, x); }
Tensor log(const Tensor& x) { return apply1(OpKind::Log, x); }
Tensor square(const Tensor& x) { return apply1(OpKind::Square, x); }
Tensor sqrt(const Tensor& x) { return apply1(OpKind::Sqrt, x); }
Tensor reciprocal(const Tensor& x) { return apply1(OpKind::Reciprocal, x); }
Tensor transpose(const Tensor& x) { return apply1(OpKind::Transpose, x); }
Tensor row_softmax(const Tensor& x) { return apply1(OpKind::RowSoftmax, x); }
Tensor l2_normalize_rows(const Tensor& x) { return apply1(OpKind::L2NormalizeRows, x); }

Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index) {
  OpAttrs attrs;
  attrs.index = std::move(index);
  return apply1(OpKind::GatherRows, x, std::move(attrs));
}

Tensor scatter_add_rows(const Tensor& x, std::vector<std::size_t> index, std::size_t out_rows) {
  OpAttrs attrs;
  attrs.index = std::move(index);
  attrs.extent = out_rows;
  return apply1(OpKind::ScatterAddRows, x, std::move(attrs));
}

Tensor scale(const Tensor& x, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return apply1(OpKind::Scale, x, std::move(attrs));
}

Tensor detach(const Tensor& t) { return t.detached(); }

void GradientMap::insert(const Tensor& param, Tensor grad) {
  if (!param.has_node()) throw Error("gradient key is not on a tape");
  grads_.insert_or_assign(*param.node_id(), std::move(grad));
}

bool GradientMap::contains(const Tensor& param) const {
  return param.has_node() && grads_.count(*param.node_id()) != 0;
}

const Tensor& GradientMap::at(const Tensor& param) const {
  if (!param.has_node()) throw Error("parameter is not on a tape");
  auto it = grads_.find(*param.node_id());
  if (it == grads_.end())
    throw Error("no gradient for parameter node " + std::to_string(*param.node_id()));
  return it->second;
}

GradientMap backward(const Tensor& loss, std::span<const Tensor> params, bool create_graph) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
  if (!loss.has_node()) throw Error("backward: loss is not on a tape");
  Tape* tape = Tape::active();
  if (tape == nullptr || tape->id() != loss.tape_id())
    throw Error("backward: the loss's tape is not active");
  for (const auto& p : params)
    if (!p.has_node() || p.tape_id() != tape->id())
      throw Error("backward: parameter is not on the active tape");

  const std::size_t root = *loss.node_id();

  // Nodes lying on some path from a parameter to the loss.
  std::vector<char> relevant(root + 1, 0);
  std::vector<char> is_param(root + 1, 0);
  for (const auto& p : params)
    if (*p.node_id() <= root) relevant[*p.node_id()] = is_param[*p.node_id()] = 1;
  for (std::size_t i = 0; i <= root; ++i) {
    if (relevant[i]) continue;
    for (const auto& in : tape->node(i).inputs)
      if (in.has_node() && in.tape_id() == tape->id() && relevant[*in.node_id()]) {
        relevant[i] = 1;
        break;
      }
  }

  std::vector<std::optional<Tensor>> grads(root + 1);
  grads[root] = Tensor::ones(loss.shape());

  {
    std::optional<NoGradGuard> no_grad;
    if (!create_graph) no_grad.emplace();
    const bool was_backward = tape->recording_backward();
    tape->set_recording_backward(true);
    try {
      for (std::size_t i = root + 1; i-- > 0;) {
        if (!grads[i] || !relevant[i]) continue;
        const TapeNode node = tape->node(i);  // copy: recording may grow the tape
        std::vector<char> need(node.inputs.size(), 0);
        bool any = false;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const auto& in = node.inputs[k];
          need[k] = in.has_node() && in.tape_id() == tape->id() && relevant[*in.node_id()];
          any = any || need[k];
        }
        if (!any) continue;
        auto contrib = input_grads(node, *grads[i], need);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          if (!contrib[k]) continue;
          auto& slot = grads[*node.inputs[k].node_id()];
          slot = slot ? add(*slot, *contrib[k]) : *contrib[k];
        }
        if (!create_graph && !is_param[i]) grads[i].reset();
      }
    } catch (...) {
      tape->set_recording_backward(was_backward);
      throw;
    }
    tape->set_recording_backward(was_backward);
  }

  GradientMap out(create_graph);
  for (const auto& p : params) {
    const std::size_t id = *p.node_id();
    Tensor g = (id <= root && grads[id]) ? *grads[id] : Tensor::zeros(p.shape());
    if (create_graph && !g.has_node()) g = tape->leaf(g);
    if (!create_graph) g = g.detached();
    out.insert(p, std::move(g));
  }
  return out;
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double step) {
  std::vector<double> base = x.to_vector();
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double orig = base[i];
    base[i] = orig + step;
    const double up = f(Tensor(x.shape(), base));
    base[i] = orig - step;
    const double down = f(Tensor(x.shape(), base));
    base[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return Tensor(x.shape(), std::move(grad));
}

namespace debug {
void set_backward_fault(std::optional<OpKind> kind) { g_fault = kind; }
std::optional<OpKind> backward_fault() { return g_fault; }
}  // namespace debug

}  // namespace mega
