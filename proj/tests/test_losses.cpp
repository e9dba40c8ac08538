#include <doctest.h>

#include <cmath>
#include <random>

#include "mega/autodiff.hpp"
#include "mega/error.hpp"
#include "mega/gradcheck.hpp"
#include "mega/losses.hpp"

using namespace mega;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor({r, c}, v);
}

double brute_cos_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    dot += a.at(i, k) * b.at(j, k);
    na += a.at(i, k) * a.at(i, k);
    nb += b.at(j, k) * b.at(j, k);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double brute_feature(const Tensor& z, const Tensor& za, std::size_t p, std::size_t q) {
  double dot = 0, np = 0, nq = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    dot += z.at(i, p) * za.at(i, q);
    np += z.at(i, p) * z.at(i, p);
    nq += za.at(i, q) * za.at(i, q);
  }
  return dot / (std::sqrt(np) * std::sqrt(nq));
}

double brute_mega(const Tensor& c, const Tensor& d, double lambda) {
  double inst = 0.0, feat = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < c.cols(); ++j) inst += i == j ? c.at(i, j) : -c.at(i, j);
  for (std::size_t p = 0; p < d.rows(); ++p)
    for (std::size_t q = 0; q < d.cols(); ++q)
      feat += p == q ? (1 - d.at(p, q)) * (1 - d.at(p, q)) : d.at(p, q) * d.at(p, q);
  return inst + lambda * feat;
}

}  // namespace

TEST_CASE("trace and off-diagonal sums") {
  CHECK(trace_sum(Tensor::identity(3)).item() == 3.0);
  CHECK(offdiag_sum(Tensor::identity(3)).item() == 0.0);
  CHECK(trace_sum(Tensor::ones({3, 3})).item() == 3.0);
  CHECK(offdiag_sum(Tensor::ones({3, 3})).item() == 6.0);
  const Tensor m = random_matrix(4, 4, 1);
  double tr = 0, de = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) (i == j ? tr : de) += m.at(i, j);
  CHECK(trace_sum(m).item() == doctest::Approx(tr).epsilon(1e-14));
  CHECK(offdiag_sum(m).item() == doctest::Approx(de).epsilon(1e-12));
  CHECK_THROWS_AS(trace_sum(random_matrix(2, 3, 1)), ShapeError);
}

TEST_CASE("nt-xent oracles") {
  const Tensor z = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(nt_xent({z, z}, 1.0).item() == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 2))));
  CHECK(nt_xent({z, z}, 1.0).item() == doctest::Approx(0.5514).epsilon(1e-4));
  const Tensor one = Tensor::matrix({{0.3, -0.2, 0.9}});
  CHECK(std::abs(nt_xent({one, random_matrix(1, 3, 5)}, 0.5).item()) < 1e-15);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor a = random_matrix(4, 3, s), b = random_matrix(4, 3, s + 100);
    const double loss = nt_xent({a, b}, 0.5).item();
    CHECK(loss >= 0.0);
    // Common positive rescaling leaves cosine similarities unchanged.
    CHECK(nt_xent({scale(a, 3.7), scale(b, 3.7)}, 0.5).item() == doctest::Approx(loss).epsilon(1e-10));
  }
  CHECK_THROWS_AS(nt_xent({z, z}, 0.0), ConfigError);
}

TEST_CASE("instance and feature correlation against double loops") {
  const Tensor z = random_matrix(5, 4, 7), za = random_matrix(5, 4, 8);
  const Tensor c = instance_corr({z, za});
  const Tensor d = feature_corr({z, za});
  REQUIRE(c.shape() == Shape{5, 5});
  REQUIRE(d.shape() == Shape{4, 4});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(c.at(i, j) - brute_cos_rows(z, i, za, j)) <= 1e-12);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t q = 0; q < 4; ++q) CHECK(std::abs(d.at(p, q) - brute_feature(z, za, p, q)) <= 1e-12);
}

TEST_CASE("correlation special cases") {
  const Tensor ortho = Tensor::matrix({{0.6, 0.8, 0}, {-0.8, 0.6, 0}, {0, 0, 1}});
  const Tensor c = instance_corr({ortho, ortho});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(c.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
  const Tensor neg = instance_corr({ortho, scale(ortho, -1.0)});
  for (std::size_t i = 0; i < 3; ++i) CHECK(neg.at(i, i) == doctest::Approx(-1.0));

  const Tensor cols = Tensor::matrix({{2, 0}, {0, 3}, {0, 0}});
  const Tensor d = feature_corr({cols, cols});
  CHECK(d.at(0, 0) == doctest::Approx(1.0));
  CHECK(d.at(0, 1) == doctest::Approx(0.0));
  const Tensor dup = Tensor::matrix({{1, 1, 0.5}, {2, 2, -1}, {0.5, 0.5, 3}});
  const Tensor dd = feature_corr({dup, dup});
  CHECK(dd.at(0, 1) == doctest::Approx(1.0));
  CHECK(dd.at(1, 0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(instance_corr({Tensor::matrix({{0, 0}, {1, 1}}), Tensor::ones({2, 2})}), NumericError);
  CHECK_THROWS_AS(feature_corr({Tensor::matrix({{0, 1}, {0, 1}}), Tensor::ones({2, 2})}), NumericError);
}

TEST_CASE("mega loss algebra") {
  for (std::size_t n : {2, 3, 5})
    for (double lambda : {0.0, 0.1, 1.0})
      CHECK(mega_loss(Tensor::identity(n), Tensor::identity(4), lambda).item() == static_cast<double>(n));
  const Tensor c = random_matrix(3, 3, 2), d = random_matrix(4, 4, 3);
  for (double lambda : {0.0, 0.1, 1.0})
    CHECK(mega_loss(c, d, lambda).item() == doctest::Approx(brute_mega(c, d, lambda)).epsilon(1e-13));
  const MegaLossTerms t = mega_loss_terms(c, d, 0.0);
  CHECK(t.total.item() == doctest::Approx(t.trace_c - t.offdiag_c));
  CHECK(mega_loss_terms(c, Tensor::identity(4), 0.3).feature == 0.0);
  CHECK(mega_loss_terms(c, add(Tensor::identity(4), scale(d, 1e-3)), 0.3).feature > 0.0);
  CHECK_THROWS_AS(mega_loss(c, d, -0.1), ConfigError);
}

TEST_CASE("instance term pushes toward hard examples") {
  Tape tape;
  TapeScope scope(tape);
  const Tensor c = tape.leaf(random_matrix(3, 3, 4));
  const Tensor d = Tensor::identity(2);
  const auto g = backward(mega_loss(c, d, 0.1), std::span<const Tensor>(&c, 1)).at(c);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j)
        CHECK(g.at(i, j) > 0.0);
      else
        CHECK(g.at(i, j) < 0.0);
    }
}

TEST_CASE("loss gradients match finite differences") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const std::size_t n = 2 + s % 3, dz = 3 + s % 4;
    const std::vector<Tensor> in = {random_matrix(n, dz, s), random_matrix(n, dz, s + 50)};
    const ScalarFn ntx = [](std::span<const Tensor> t) { return nt_xent({t[0], t[1]}, 0.5); };
    const ScalarFn mega = [](std::span<const Tensor> t) {
      const FeaturePairBatch p{t[0], t[1]};
      return mega_loss(instance_corr(p), feature_corr(p), 0.1);
    };
    CHECK(check_first_order(ntx, in) < 1e-4);
    CHECK(check_first_order(mega, in) < 1e-4);
  }
}
