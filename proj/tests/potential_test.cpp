#include <gtest/gtest.h>

#include <random>

#include "dpn/potential.hpp"
#include "support.hpp"

using namespace dpn;

namespace {

PotentialTable table(Domain d, std::vector<double> v) { return PotentialTable(std::move(d), std::move(v)); }

oracle::Factor as_factor(const PotentialTable& t) {
  oracle::Factor f;
  for (const auto& d : t.domain()) {
    f.vars.push_back(d.id);
    f.cards.push_back(d.card);
  }
  f.vals = t.values();
  return f;
}

PotentialTable random_table(std::mt19937_64& rng, Domain d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t n = 1;
  for (const auto& x : d) n *= x.card;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return table(std::move(d), std::move(v));
}

}  // namespace

TEST(Potential, MultiplyDisjointIsOuterProduct) {
  auto a = table({{0, 2}}, {0.3, 0.7});
  auto b = table({{1, 2}}, {0.4, 0.6});
  auto c = multiply(a, b);
  EXPECT_EQ(c.size(), 4u);
  EXPECT_NEAR(c.sum(), 1.0, 1e-15);
  auto m = marginalize(c, {0});
  EXPECT_NEAR(m[0], 0.3, 1e-15);
}

TEST(Potential, MultiplyMatchesIndependentProduct) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    auto a = random_table(rng, {{0, 2}, {2, 3}});
    auto b = random_table(rng, {{2, 3}, {1, 2}, {5, 2}});
    auto c = canonical(multiply(a, b));
    auto ref = oracle::product(as_factor(a), as_factor(b));
    std::map<Vertex, std::size_t> asg;
    for (std::size_t i = 0; i < ref.vals.size(); ++i) {
      auto s = oracle::decode(i, ref.cards);
      for (std::size_t k = 0; k < s.size(); ++k) asg[ref.vars[k]] = s[k];
      EXPECT_NEAR(as_factor(c).at(asg), ref.vals[i], 1e-15);
    }
  }
}

TEST(Potential, MarginalizeMatchesSumOut) {
  std::mt19937_64 rng(11);
  auto a = random_table(rng, {{3, 2}, {1, 3}, {4, 2}});
  auto m = canonical(marginalize(a, {1, 4}));
  auto ref = oracle::sum_out(as_factor(a), 3);
  std::map<Vertex, std::size_t> asg;
  for (std::size_t i = 0; i < ref.vals.size(); ++i) {
    auto s = oracle::decode(i, ref.cards);
    for (std::size_t k = 0; k < s.size(); ++k) asg[ref.vars[k]] = s[k];
    EXPECT_NEAR(as_factor(m).at(asg), ref.vals[i], 1e-15);
  }
  EXPECT_NEAR(marginalize(a, {}).sum(), a.sum(), 1e-14);
}

TEST(Potential, DivideZeroOverZeroIsZero) {
  auto a = table({{0, 2}}, {0.0, 0.5});
  auto b = table({{0, 2}}, {0.0, 0.25});
  auto c = divide(a, b);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 2.0);
}

TEST(Potential, DividePositiveByZeroThrows) {
  auto a = table({{0, 2}}, {0.1, 0.5});
  auto b = table({{0, 2}}, {0.0, 0.25});
  EXPECT_THROW(divide(a, b), DivisionError);
}

TEST(Potential, NormalizeZeroMassThrows) {
  auto a = table({{0, 2}}, {0.0, 0.0});
  EXPECT_THROW(normalize(a), ZeroMassError);
  auto [n, mass] = normalize(table({{0, 2}}, {1.0, 3.0}));
  EXPECT_DOUBLE_EQ(mass, 4.0);
  EXPECT_DOUBLE_EQ(n[1], 0.75);
}

TEST(Potential, HardAndSoftEvidence) {
  auto a = table({{0, 3}, {1, 2}}, {1, 2, 3, 4, 5, 6});
  auto hard = reduce_by_evidence(a, 0, Finding::hard_state(1));
  EXPECT_EQ(hard.values(), (std::vector<double>{0, 0, 3, 4, 0, 0}));
  auto soft = reduce_by_evidence(a, 1, Finding::likelihood({0.5, 2.0}));
  EXPECT_EQ(soft.values(), (std::vector<double>{0.5, 4, 1.5, 8, 2.5, 12}));
}

TEST(Potential, MismatchedCardinalityThrows) {
  auto a = table({{0, 2}}, {0.5, 0.5});
  auto b = table({{0, 3}}, {0.2, 0.3, 0.5});
  EXPECT_THROW(multiply(a, b), DomainError);
}

TEST(Potential, ReorderPreservesEntries) {
  std::mt19937_64 rng(3);
  auto a = random_table(rng, {{2, 2}, {0, 3}, {1, 2}});
  auto r = reorder(a, {{1, 2}, {2, 2}, {0, 3}});
  EXPECT_TRUE(approx_equal(a, r, 0.0));
  EXPECT_EQ(max_abs_diff(a, r), 0.0);
}

TEST(Potential, MultiplyThenDivideRestores) {
  std::mt19937_64 rng(5);
  auto a = random_table(rng, {{0, 2}, {1, 3}});
  auto b = random_table(rng, {{1, 3}});
  EXPECT_LT(max_abs_diff(divide(multiply(a, b), b), a), 1e-14);
}
