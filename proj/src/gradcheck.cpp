#include "mega/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "mega/autodiff.hpp"

namespace mega {

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }

  Tensor tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
  }

  // Entries with magnitude in [0.1, 1] and random sign, away from relu's kink.
  Tensor away_from_zero(Shape shape) {
    Tensor t = tensor(std::move(shape), 0.1, 1.0);
    std::vector<double> v = t.to_vector();
    for (auto& x : v)
      if (rng_() & 1) x = -x;
    return Tensor(t.shape(), std::move(v));
  }

 private:
  std::mt19937_64 rng_;
};

std::vector<Tensor> to_leaves(Tape& tape, std::span<const Tensor> inputs) {
  std::vector<Tensor> out;
  for (const auto& t : inputs) out.push_back(tape.leaf(t));
  return out;
}

// Gradient of f with respect to input `wrt`, evaluated without keeping a graph.
Tensor first_order_gradient(const ScalarFn& f, std::span<const Tensor> inputs, std::size_t wrt) {
  Tape tape;
  TapeScope scope(tape);
  const auto leaves = to_leaves(tape, inputs);
  const Tensor loss = f(leaves);
  const auto grads = backward(loss, std::span<const Tensor>(&leaves[wrt], 1));
  return detach(grads.at(leaves[wrt]));
}

// Runs `body` on the active tape, or on a fresh one when none is active.
// Composite pipelines need a tape for their inner gradient either way.
template <class Body>
Tensor with_tape(Body&& body) {
  if (Tape* t = Tape::active()) return body(*t);
  Tape local;
  TapeScope scope(local);
  return detach(body(local));
}

Tensor on_tape(Tape& tape, const Tensor& t) { return t.has_node() ? t : tape.leaf(t); }

// sum(out * r) with a fixed random weight so every output entry matters.
ScalarFn weighted(std::function<Tensor(std::span<const Tensor>)> op, std::span<const Tensor> sample,
                  Sampler& sampler) {
  const Tensor out = op(sample);
  const Tensor r = sampler.tensor(out.shape(), 0.5, 1.5);
  return [op = std::move(op), r](std::span<const Tensor> in) { return sum(mul(op(in), r)); };
}

// Inner squared-error loss of a one-layer model whose input rows are mixed by
// sigmoid edge weights from s, one virtual gradient step on w, then an outer
// loss on the stepped weights.
Tensor virtual_step_pipeline(std::span<const Tensor> in, double lr) {
  const Tensor& s = in[0];
  const Tensor& x = in[1];
  const Tensor& w = in[2];
  const std::vector<std::size_t> src = {0, 1, 2, 3, 1};
  const std::vector<std::size_t> dst = {1, 2, 3, 0, 3};
  return with_tape([&](Tape& tape) {
    const Tensor wl = on_tape(tape, w);
    const Tensor edge = sigmoid(matmul(gather_rows(x, src), s));  // [5,1]
    const Tensor mixed = add(x, scatter_add_rows(mul(gather_rows(x, src), edge), dst, 4));
    const Tensor pred = relu(matmul(mixed, wl));
    const Tensor inner = mean(square(sub(pred, Tensor::full(pred.shape(), 0.3))));
    const auto g = backward(inner, std::span<const Tensor>(&wl, 1), true);
    const Tensor stepped = sub(wl, scale(g.at(wl), lr));
    const Tensor h = l2_normalize_rows(matmul(x, stepped));
    const Tensor c = matmul(h, transpose(h));
    return add(sum(square(c)), log(sum(exp(h))));
  });
}

// Contrastive-style inner loss, then a correlation-style outer loss on the
// virtually stepped projection. Differentiated with respect to the edge
// parameters through the inner gradient.
Tensor virtual_step_contrast(std::span<const Tensor> in, double lr, double tau) {
  const Tensor& s = in[0];
  const Tensor& a = in[1];
  const Tensor& b = in[2];
  const Tensor& w = in[3];
  return with_tape([&](Tape& tape) {
    const Tensor wl = on_tape(tape, w);
    const Tensor gate = sigmoid(add(b, s));  // s is a [1, F] row
    const Tensor za = l2_normalize_rows(matmul(a, wl));
    const Tensor zb = l2_normalize_rows(matmul(mul(b, gate), wl));
    const Tensor sim = exp(scale(matmul(za, transpose(zb)), 1.0 / tau));
    const Tensor probs = mul(sim, reciprocal(sum_cols(sim)));
    const Tensor eye = Tensor::identity(probs.rows());
    const Tensor inner = scale(sum(mul(log(probs), eye)), -1.0 / static_cast<double>(probs.rows()));
    const auto g = backward(inner, std::span<const Tensor>(&wl, 1), true);
    const Tensor stepped = sub(wl, scale(g.at(wl), lr));
    const Tensor pa = matmul(a, stepped);
    const Tensor pb = matmul(mul(b, gate), stepped);
    const Tensor cross = matmul(l2_normalize_rows(transpose(pa)),
                                transpose(l2_normalize_rows(transpose(pb))));
    const Tensor diff = sub(Tensor::identity(cross.rows()), cross);
    const Tensor soft = row_softmax(matmul(pa, transpose(pb)));
    return add(sum(square(diff)), mean(sqrt(add(sum_rows(soft), Tensor::scalar(1.0)))));
  });
}

}  // namespace

double gradient_error(const Tensor& analytic, const Tensor& numeric) {
  const auto a = analytic.values();
  const auto n = numeric.values();
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    ref = std::max(ref, std::abs(n[i]));
  }
  if (!std::isfinite(diff)) return std::numeric_limits<double>::infinity();
  return diff / std::max(ref, 1e-8);
}

double check_first_order(const ScalarFn& f, std::span<const Tensor> inputs, double step) {
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = first_order_gradient(f, inputs, i);
    std::vector<Tensor> work(inputs.begin(), inputs.end());
    const Tensor numeric = finite_diff_gradient(
        [&](const Tensor& xi) {
          work[i] = xi;
          return f(work).item();
        },
        inputs[i], step);
    worst = std::max(worst, gradient_error(analytic, numeric));
  }
  return worst;
}

double check_hessian_vector(const ScalarFn& f, std::span<const Tensor> inputs, std::size_t wrt,
                            const Tensor& v, double step) {
  Tensor analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const auto leaves = to_leaves(tape, inputs);
    const Tensor loss = f(leaves);
    const auto g = backward(loss, std::span<const Tensor>(&leaves[wrt], 1), true);
    const Tensor gv = sum(mul(g.at(leaves[wrt]), v));
    const auto h = backward(gv, std::span<const Tensor>(&leaves[wrt], 1));
    analytic = detach(h.at(leaves[wrt]));
  }
  std::vector<Tensor> work(inputs.begin(), inputs.end());
  const Tensor numeric = finite_diff_gradient(
      [&](const Tensor& x) {
        work[wrt] = x;
        const Tensor g = first_order_gradient(f, work, wrt);
        double dot = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) dot += g.values()[j] * v.values()[j];
        return dot;
      },
      inputs[wrt], step);
  return gradient_error(analytic, numeric);
}

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
}

std::string GradcheckReport::format() const {
  std::ostringstream out;
  out << std::left << std::setw(34) << "check" << std::setw(8) << "order" << std::setw(7)
      << "cases" << std::setw(14) << "max_error" << std::setw(11) << "tolerance"
      << "status\n";
  for (const auto& e : entries) {
    out << std::left << std::setw(34) << e.name << std::setw(8) << (e.second_order ? "2" : "1")
        << std::setw(7) << e.cases << std::setw(14) << std::scientific << std::setprecision(3)
        << e.max_error << std::setw(11) << e.tolerance << (e.passed() ? "ok" : "FAIL") << '\n';
    out << std::defaultfloat;
  }
  out << (passed() ? "all checks passed" : "gradient check FAILED") << " (" << std::fixed
      << std::setprecision(2) << seconds << " s)\n";
  return out.str();
}

GradcheckReport run_gradcheck(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Sampler sampler(seed);
  std::map<std::string, GradcheckEntry> first;
  std::vector<std::string> order;

  auto run_case = [&](OpKind kind, std::function<Tensor(std::span<const Tensor>)> op,
                      std::vector<Tensor> inputs) {
    const std::string name(op_name(kind));
    if (!first.count(name)) {
      order.push_back(name);
      first[name] = GradcheckEntry{name, false, 0.0, kFirstOrderTolerance, 0};
    }
    auto& entry = first[name];
    const ScalarFn f = weighted(std::move(op), inputs, sampler);
    entry.max_error = std::max(entry.max_error, check_first_order(f, inputs));
    ++entry.cases;
  };
  auto binary = [](Tensor (*fn)(const Tensor&, const Tensor&)) {
    return [fn](std::span<const Tensor> in) { return fn(in[0], in[1]); };
  };
  auto unary = [](Tensor (*fn)(const Tensor&)) {
    return [fn](std::span<const Tensor> in) { return fn(in[0]); };
  };

  const std::vector<Shape> second_shapes = {{3, 4}, {1, 4}, {3, 1}, {1}};
  for (auto [kind, fn] : {std::pair{OpKind::Add, &add}, std::pair{OpKind::Sub, &sub},
                          std::pair{OpKind::Mul, &mul}}) {
    for (const auto& shape : second_shapes)
      run_case(kind, binary(fn), {sampler.tensor({3, 4}), sampler.tensor(shape)});
    run_case(kind, binary(fn), {sampler.tensor({5}), sampler.tensor({1})});
  }
  run_case(OpKind::MatMul, binary(&matmul), {sampler.tensor({3, 4}), sampler.tensor({4, 2})});
  run_case(OpKind::MatMul, binary(&matmul), {sampler.tensor({1, 3}), sampler.tensor({3, 1})});
  run_case(OpKind::ConcatRows, [](std::span<const Tensor> in) { return concat_rows(in); },
           {sampler.tensor({2, 3}), sampler.tensor({3, 3}), sampler.tensor({1, 3})});
  run_case(OpKind::Sum, unary(&sum), {sampler.tensor({3, 4})});
  run_case(OpKind::Sum, unary(&sum), {sampler.tensor({6})});
  run_case(OpKind::SumRows, unary(&sum_rows), {sampler.tensor({3, 4})});
  run_case(OpKind::SumCols, unary(&sum_cols), {sampler.tensor({3, 4})});
  run_case(OpKind::Mean, unary(&mean), {sampler.tensor({3, 4})});
  run_case(OpKind::Relu, unary(&relu), {sampler.away_from_zero({4, 4})});
  run_case(OpKind::Sigmoid, unary(&sigmoid), {sampler.tensor({3, 4}, -3.0, 3.0)});
  run_case(OpKind::Exp, unary(&exp), {sampler.tensor({3, 4})});
  run_case(OpKind::Log, unary(&log), {sampler.tensor({3, 4}, 0.5, 2.0)});
  run_case(OpKind::Square, unary(&square), {sampler.tensor({3, 4})});
  run_case(OpKind::Sqrt, unary(&sqrt), {sampler.tensor({3, 4}, 0.5, 2.0)});
  run_case(OpKind::Reciprocal, unary(&reciprocal), {sampler.tensor({3, 4}, 0.5, 2.0)});
  run_case(OpKind::Transpose, unary(&transpose), {sampler.tensor({3, 4})});
  run_case(OpKind::RowSoftmax, unary(&row_softmax), {sampler.tensor({3, 4}, -2.0, 2.0)});
  run_case(OpKind::L2NormalizeRows, unary(&l2_normalize_rows), {sampler.tensor({3, 4})});
  run_case(OpKind::GatherRows,
           [](std::span<const Tensor> in) { return gather_rows(in[0], {2, 0, 2, 1}); },
           {sampler.tensor({3, 4})});
  run_case(OpKind::ScatterAddRows,
           [](std::span<const Tensor> in) { return scatter_add_rows(in[0], {0, 2, 2, 1, 0}, 3); },
           {sampler.tensor({5, 3})});
  run_case(OpKind::Scale, [](std::span<const Tensor> in) { return scale(in[0], -1.7); },
           {sampler.tensor({3, 4})});

  GradcheckReport report;
  for (const auto& name : order) report.entries.push_back(first[name]);

  auto second = [&](std::string name, double error) {
    report.entries.push_back(GradcheckEntry{std::move(name), true, error, kSecondOrderTolerance, 1});
  };

  {
    const std::vector<Tensor> in = {sampler.tensor({4, 3}), sampler.tensor({3, 2})};
    const ScalarFn f = [](std::span<const Tensor> x) {
      const Tensor y = sigmoid(matmul(x[0], x[1]));
      return sum(mul(square(y), y));
    };
    second("hvp/sigmoid-cubic", check_hessian_vector(f, in, 1, sampler.tensor({3, 2})));
  }
  {
    const std::vector<Tensor> in = {sampler.tensor({4, 3}), sampler.tensor({3, 3})};
    const Tensor targets = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}});
    const ScalarFn f = [targets](std::span<const Tensor> x) {
      return scale(sum(mul(log(row_softmax(matmul(x[0], x[1]))), targets)), -0.25);
    };
    second("hvp/softmax-cross-entropy", check_hessian_vector(f, in, 1, sampler.tensor({3, 3})));
  }
  {
    const std::vector<Tensor> in = {sampler.tensor({4, 3}), sampler.tensor({4, 3})};
    const ScalarFn f = [](std::span<const Tensor> x) {
      const Tensor a = l2_normalize_rows(x[0]);
      const Tensor b = l2_normalize_rows(x[1]);
      const Tensor e = exp(scale(matmul(a, transpose(b)), 2.0));
      return mean(log(sum_cols(e)));
    };
    second("hvp/normalized-similarity", check_hessian_vector(f, in, 0, sampler.tensor({4, 3})));
  }
  {
    const std::vector<Tensor> in = {sampler.tensor({5, 3}), sampler.tensor({3, 3})};
    const ScalarFn f = [](std::span<const Tensor> x) {
      const Tensor h = relu(add(matmul(x[0], x[1]), Tensor::full({1, 3}, 0.05)));
      const Tensor pooled = scatter_add_rows(gather_rows(h, {0, 1, 2, 3, 4, 1}), {0, 0, 1, 1, 1, 0}, 2);
      const Tensor both = concat_rows(std::vector<Tensor>{pooled, sum_rows(h)});
      return sum(sqrt(add(square(both), Tensor::scalar(1.0))));
    };
    second("hvp/gather-scatter-readout", check_hessian_vector(f, in, 1, sampler.tensor({3, 3})));
  }
  {
    const std::vector<Tensor> in = {sampler.tensor({3, 1}), sampler.tensor({4, 3}),
                                    sampler.tensor({3, 2})};
    const ScalarFn f = [](std::span<const Tensor> x) { return virtual_step_pipeline(x, 0.1); };
    second("virtual-step/edge-weights", check_first_order(f, in));
  }
  {
    const std::vector<Tensor> in = {sampler.tensor({1, 3}), sampler.tensor({4, 3}),
                                    sampler.tensor({4, 3}), sampler.tensor({3, 3})};
    const ScalarFn f = [](std::span<const Tensor> x) { return virtual_step_contrast(x, 0.2, 0.5); };
    second("virtual-step/contrast-correlation", check_first_order(f, in));
  }

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mega
