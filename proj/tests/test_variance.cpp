#include <doctest.h>

#include <cmath>
#include <random>

#include "mtomd/interaction.hpp"
#include "mtomd/variance.hpp"
#include "oracles.hpp"

using namespace mtomd;

namespace {

CompoundVector scalar_blocks(std::initializer_list<double> v) {
  CompoundVector x(v.size(), 1);
  Eigen::Index i = 0;
  for (double a : v) x.blocks()(i++, 0) = a;
  return x;
}

CompoundVector random_compound(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> z;
  CompoundVector x(n, d);
  for (Eigen::Index i = 0; i < x.blocks().rows(); ++i)
    for (Eigen::Index j = 0; j < x.blocks().cols(); ++j) x.blocks()(i, j) = z(rng);
  return x;
}

CompoundVector pair(std::initializer_list<double> a, std::initializer_list<double> b) {
  CompoundVector x(2, a.size());
  Eigen::Index j = 0;
  for (double v : a) x.blocks()(0, j++) = v;
  j = 0;
  for (double v : b) x.blocks()(1, j++) = v;
  return x;
}

}  // namespace

TEST_CASE("norm variance values") {
  Vec u0(2);
  u0 << 0.3, -1.0;
  CHECK(norm_variance(CompoundVector::constant(4, u0), NormTag::l2()) == 0.0);
  CHECK(norm_variance(scalar_blocks({0, 2}), NormTag::l2()) == doctest::Approx(2.0));
  CHECK(norm_variance(scalar_blocks({0, 0, 0, 4}), NormTag::l2()) == doctest::Approx(4.0));
  CHECK(norm_variance(scalar_blocks({7}), NormTag::l2()) == 0.0);
}

TEST_CASE("norm variance matches the row oracle and the quadratic form") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k % 7), d = 1 + static_cast<std::size_t>(k % 4);
    const CompoundVector u = random_compound(rng, n, d);
    const double v = norm_variance(u, NormTag::l2());
    REQUIRE(v == doctest::Approx(oracle::variance_rows(u.blocks())).epsilon(1e-10));
    const auto m = static_cast<Eigen::Index>(n);
    const Mat l = Mat::Identity(m, m) - Mat::Constant(m, m, 1.0 / static_cast<double>(n));
    const double quad = (u.blocks().transpose() * l * u.blocks()).trace();
    REQUIRE(v == doctest::Approx(quad / static_cast<double>(n - 1)).epsilon(1e-10));
  }
}

TEST_CASE("norm variance is translation invariant") {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> z;
  for (int k = 0; k < 200; ++k) {
    CompoundVector u = random_compound(rng, 5, 3);
    Vec shift(3);
    shift << z(rng), z(rng), z(rng);
    CompoundVector s = u;
    s.blocks().rowwise() += shift.transpose();
    for (const auto& t : {NormTag::l2(), NormTag::l1(), NormTag::lp(1.5)})
      REQUIRE(norm_variance(s, t) == doctest::Approx(norm_variance(u, t)).epsilon(1e-10));
  }
}

TEST_CASE("l2 variance is dominated by lp variance for p <= 2") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> up(1.0, 2.0);
  for (int k = 0; k < 1000; ++k) {
    const CompoundVector u = random_compound(rng, 4, 1 + static_cast<std::size_t>(k % 5));
    REQUIRE(norm_variance(u, NormTag::l2()) <= norm_variance(u, NormTag::lp(up(rng))) * (1 + 1e-12));
  }
}

TEST_CASE("simplex variance values") {
  Vec u0(3);
  u0 << 0.2, 0.3, 0.5;
  CHECK(simplex_variance(CompoundVector::constant(3, u0)) == 0.0);
  CHECK(simplex_variance(pair({0.5, 0.5}, {0.25, 0.75})) == doctest::Approx(0.25));
  CHECK(simplex_variance(pair({0.0, 1.0}, {0.5, 0.5})) == doctest::Approx(1.0));
  CHECK(simplex_variance(pair({0.0, 1.0}, {0.0, 1.0})) == 0.0);
  CHECK_THROWS(simplex_variance(pair({0.5, 0.6}, {0.5, 0.5})));
}

TEST_CASE("local norm variance") {
  CHECK(local_norm_variance(scalar_blocks({0, 2}), GraphSpec{2, Mat::Zero(2, 2)}, NormTag::l2()) == 0.0);
  CHECK(local_norm_variance(scalar_blocks({0, 2}), GraphSpec::clique(2, 0.5), NormTag::l2()) == doctest::Approx(2.0));

  Mat w = Mat::Zero(4, 4);
  w(0, 1) = w(1, 0) = 1.0;
  w(2, 3) = w(3, 2) = 2.0;
  CHECK(local_norm_variance(scalar_blocks({1, 1, -3, -3}), GraphSpec{4, w}, NormTag::l2()) == 0.0);

  std::mt19937_64 rng(24);
  for (std::size_t n = 2; n <= 9; ++n) {
    const CompoundVector u = random_compound(rng, n, 3);
    const auto g = GraphSpec::clique(n, 1.0 / static_cast<double>(n));
    const double lv = local_norm_variance(u, g, NormTag::l2());
    REQUIRE(lv == doctest::Approx(static_cast<double>(n - 1) * norm_variance(u, NormTag::l2())).epsilon(1e-10));
    const double quad = (u.blocks().transpose() * oracle::laplacian(g.weights) * u.blocks()).trace();
    REQUIRE(lv == doctest::Approx(quad).epsilon(1e-10));
  }
}

TEST_CASE("local simplex variance on the clique reduces to the global one") {
  const CompoundVector u = pair({0.5, 0.5}, {0.25, 0.75});
  CHECK(local_simplex_variance(u, GraphSpec::clique(2, 0.5)) == doctest::Approx(simplex_variance(u)));
  CHECK(local_simplex_variance(u, GraphSpec{2, Mat::Zero(2, 2)}) == 0.0);
}

TEST_CASE("admissible b") {
  CHECK(admissible_b_simplex(1.0) == 0.0);
  CHECK(admissible_b_simplex(0.5) == doctest::Approx(3.0));
  CHECK(admissible_b_simplex(1e-9) == kMaxCliqueB);
  CHECK(admissible_b_simplex(0.0) == kMaxCliqueB);
  CHECK_THROWS(admissible_b_simplex(1.5));
}

TEST_CASE("admissible b keeps the transformed comparator on the simplex") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k % 5), d = 2 + static_cast<std::size_t>(k % 4);
    CompoundVector x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      Vec b(d);
      for (std::size_t j = 0; j < d; ++j) b[static_cast<Eigen::Index>(j)] = u(rng);
      x.set_block(i, b / b.sum());
    }
    const double s2 = simplex_variance(x);
    if (s2 <= 0.0) continue;
    const CompoundVector y = sqrt_block_action(admissible_b_simplex(std::sqrt(s2)), x);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(on_simplex(y.block(i)));
  }
}

TEST_CASE("comparator set membership") {
  VarianceSpec spec;
  spec.sigma = 0.0;
  Vec u0(2);
  u0 << 0.4, 0.6;
  CHECK(in_comparator_set(CompoundVector::constant(3, u0), spec));
  spec.sigma = 1.0;
  CHECK_FALSE(in_comparator_set(scalar_blocks({0, 2}), spec));
  spec.diameter = std::sqrt(2.0);
  CHECK(in_comparator_set(scalar_blocks({0, 2}), spec));

  VarianceSpec sx;
  sx.kind = VarianceSpec::Kind::Simplex;
  sx.sigma = 0.5;
  CHECK(in_comparator_set(pair({0.5, 0.5}, {0.25, 0.75}), sx));
  sx.sigma = 0.49;
  CHECK_FALSE(in_comparator_set(pair({0.5, 0.5}, {0.25, 0.75}), sx));

  VarianceSpec ln;
  ln.kind = VarianceSpec::Kind::LocalNorm;
  ln.graph = GraphSpec::clique(2, 0.5);
  ln.sigma = 1.0;
  ln.diameter = std::sqrt(2.0);
  CHECK(in_comparator_set(scalar_blocks({0, 2}), ln));
}

TEST_CASE("variance spec validation") {
  VarianceSpec spec;
  spec.sigma = 1.5;
  CHECK_THROWS(spec.validate());
  spec.sigma = 0.5;
  spec.diameter = 0.0;
  CHECK_THROWS(spec.validate());
}
