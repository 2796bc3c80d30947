#include <catch_amalgamated.hpp>

#include <random>

#include "jatrain/stats.hpp"
#include "oracles.hpp"

using namespace jatrain;
using namespace jatrain::stats;

namespace {

std::vector<double> distinct_values(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> pool(n);
  std::uniform_real_distribution<double> d(-100.0, 100.0);
  for (;;) {
    for (auto& v : pool) v = d(rng);
    auto sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) return pool;
  }
}

StatTestResult mw(const std::vector<double>& a, const std::vector<double>& b, Alternative alt,
                  MannWhitneyMethod m = MannWhitneyMethod::automatic, bool cc = true) {
  MannWhitneyOptions o;
  o.method = m;
  o.continuity_correction = cc;
  return mann_whitney_u(a, b, alt, o);
}

}  // namespace

TEST_CASE("midranks average tied positions", "[stats]") {
  const std::vector<double> v{10, 20, 20, 30, 20};
  CHECK(midranks(v) == std::vector<double>{1, 3, 3, 5, 3});
  CHECK(tie_term(v) == Catch::Approx(24.0));  // 3^3 - 3
}

TEST_CASE("Mann-Whitney worked examples", "[stats]") {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const auto r = mw(a, b, Alternative::one_tailed_less, MannWhitneyMethod::exact);
  CHECK(*r.u1 == 0.0);
  CHECK(*r.u == 0.0);
  CHECK(r.method == Method::exact);
  CHECK(r.p_value == Catch::Approx(0.05));

  const auto same = mw({1, 2, 3}, {1, 2, 3}, Alternative::two_tailed);
  CHECK(same.p_value == Catch::Approx(1.0));
  CHECK(*same.u1 == *same.u2);

  const auto all_equal = mw({4, 4, 4}, {4, 4}, Alternative::two_tailed);
  CHECK(all_equal.degenerate);
  CHECK(all_equal.p_value == 1.0);
}

TEST_CASE("Mann-Whitney z from a reported U", "[stats]") {
  CHECK(mann_whitney_z_from_u(14.5, 15, 13, true) == Catch::Approx(3.80039).margin(5e-5));
  CHECK(mann_whitney_z_from_u(14.5, 16, 13, true) == Catch::Approx(3.9029).margin(5e-4));
  CHECK(mann_whitney_z_from_u(14.5, 16, 13, false) == Catch::Approx(3.9248).margin(5e-4));
  CHECK(mann_whitney_z_from_u(97.5, 15, 13, true) == 0.0);
}

TEST_CASE("Mann-Whitney input errors", "[stats]") {
  CHECK_THROWS_AS(mw({}, {1}, Alternative::two_tailed), InputError);
  CHECK_THROWS_AS(mw({1, std::nan("")}, {1}, Alternative::two_tailed), InputError);
}

TEST_CASE("exact Mann-Whitney equals full enumeration", "[stats][property]") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int c = 0; c < 300; ++c) {
    const std::size_t n1 = size(rng), n2 = size(rng);
    const auto pool = distinct_values(rng, n1 + n2);
    const std::vector<double> a(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n1));
    const std::vector<double> b(pool.begin() + static_cast<std::ptrdiff_t>(n1), pool.end());
    const auto o = oracle::mann_whitney_exact(a, b);
    INFO("n1 " << n1 << " n2 " << n2);
    CHECK(*mw(a, b, Alternative::one_tailed_less, MannWhitneyMethod::exact).u1 == o.u1);
    CHECK(mw(a, b, Alternative::one_tailed_less, MannWhitneyMethod::exact).p_value == o.p_less);
    CHECK(mw(a, b, Alternative::one_tailed_greater, MannWhitneyMethod::exact).p_value == o.p_greater);
    CHECK(mw(a, b, Alternative::two_tailed, MannWhitneyMethod::exact).p_value == Catch::Approx(o.p_two).margin(1e-15));
  }
}

TEST_CASE("Mann-Whitney invariants", "[stats][property]") {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> size(1, 25);
  std::uniform_int_distribution<int> level(0, 12);
  for (int c = 0; c < 500; ++c) {
    const std::size_t n1 = size(rng), n2 = size(rng);
    std::vector<double> a(n1), b(n2);
    for (auto& v : a) v = level(rng);  // plenty of ties
    for (auto& v : b) v = level(rng);
    const auto r = mw(a, b, Alternative::two_tailed);
    CHECK(*r.u1 + *r.u2 == Catch::Approx(static_cast<double>(n1 * n2)));
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);

    // Swapping the samples swaps U1 / U2 and mirrors one-tailed p.
    const auto s = mw(b, a, Alternative::two_tailed);
    CHECK(*s.u1 == Catch::Approx(*r.u2));
    CHECK(s.p_value == Catch::Approx(r.p_value));
    CHECK(mw(a, b, Alternative::one_tailed_greater).p_value ==
          Catch::Approx(mw(b, a, Alternative::one_tailed_less).p_value));

    // Strictly increasing transform leaves U and p unchanged.
    auto ta = a, tb = b;
    for (auto& v : ta) v = std::exp(v / 3.0) + 7.0;
    for (auto& v : tb) v = std::exp(v / 3.0) + 7.0;
    const auto t = mw(ta, tb, Alternative::two_tailed);
    CHECK(*t.u1 == *r.u1);
    CHECK(t.p_value == Catch::Approx(r.p_value));
  }
}

TEST_CASE("exact and normal approximations agree for mid-sized samples", "[stats][property]") {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> size(3, 8);
  double worst = 0.0;
  for (int c = 0; c < 500; ++c) {
    const std::size_t n1 = size(rng), n2 = size(rng);
    const auto pool = distinct_values(rng, n1 + n2);
    const std::vector<double> a(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n1));
    const std::vector<double> b(pool.begin() + static_cast<std::ptrdiff_t>(n1), pool.end());
    for (auto alt : {Alternative::one_tailed_less, Alternative::one_tailed_greater}) {
      const double e = mw(a, b, alt, MannWhitneyMethod::exact).p_value;
      const double z = mw(a, b, alt, MannWhitneyMethod::normal_approx).p_value;
      worst = std::max(worst, std::abs(e - z));
    }
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("automatic method picks exact only for small tie-free samples", "[stats]") {
  CHECK(mw({1, 2, 3}, {4, 5, 6}, Alternative::two_tailed).method == Method::exact);
  CHECK(mw({1, 2, 2}, {4, 5, 6}, Alternative::two_tailed).method == Method::normal_approx);
  std::vector<double> big(15), other(13);
  std::iota(big.begin(), big.end(), 0.0);
  std::iota(other.begin(), other.end(), 100.0);
  const auto r = mw(big, other, Alternative::one_tailed_less);
  CHECK(r.method == Method::normal_approx);
  CHECK(r.continuity_correction);
}

TEST_CASE("Spearman worked examples", "[stats]") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(*spearman(x, std::vector<double>{2, 4, 8, 16, 32}).rho == Catch::Approx(1.0));
  CHECK(*spearman(x, std::vector<double>{5, 4, 3, 2, 1}).rho == Catch::Approx(-1.0));
  CHECK(spearman_t_p(0.57904873, 13) == Catch::Approx(0.038110133).margin(5e-6));
  CHECK(spearman_t_p(0.57904873, 14) == Catch::Approx(0.0300).margin(5e-4));
  CHECK(spearman_t_p(0.0, 10) == Catch::Approx(1.0));
}

TEST_CASE("Spearman degenerate and invalid inputs", "[stats]") {
  const auto r = spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
  CHECK(r.degenerate);
  CHECK_FALSE(r.rho);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), InputError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), InputError);
  std::vector<double> ten(10, 0.0);
  std::iota(ten.begin(), ten.end(), 0.0);
  SpearmanOptions exact;
  exact.method = SpearmanMethod::exact;
  CHECK_THROWS_AS(spearman(ten, ten, exact), InputError);
}

TEST_CASE("Spearman matches the rank oracle", "[stats][property]") {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> size(3, 8);
  std::uniform_int_distribution<int> level(0, 6);
  SpearmanOptions exact;
  exact.method = SpearmanMethod::exact;
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = size(rng);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = level(rng);
    for (auto& v : y) v = level(rng);
    const auto r = spearman(x, y, exact);
    if (r.degenerate) continue;
    CHECK(std::abs(*r.rho - oracle::spearman_rho(x, y)) <= 1e-12);
    CHECK(r.p_value == Catch::Approx(oracle::spearman_permutation_p(x, y)).margin(1e-12));

    auto tx = x;
    for (auto& v : tx) v = v * v * v + 2.0;
    CHECK(*spearman(tx, y).rho == Catch::Approx(*r.rho).margin(1e-12));
    CHECK(*spearman(x, x).rho == Catch::Approx(1.0));
  }
}
