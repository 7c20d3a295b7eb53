#include <gtest/gtest.h>

#include <set>

#include "strategist/sampling.hpp"

using namespace strategist;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Peaked stand-in for an EI surface: height h at mu, width w.
struct Bump {
  Vector mu;
  double h;
  double w;
  double operator()(const Vector& x) const { return h * std::exp(-(x - mu).squaredNorm() / (w * w)); }
};

// Trapezoid rule for the integral of exp(alpha * g) over [-1, 1]^p, p <= 2.
template <class G>
double trapezoid(const G& g, double alpha, int p, int n) {
  const double h = 2.0 / n;
  auto weight = [&](int i) { return (i == 0 || i == n) ? 0.5 : 1.0; };
  double s = 0.0;
  if (p == 1) {
    for (int i = 0; i <= n; ++i) s += weight(i) * std::exp(alpha * g(vec({-1.0 + i * h})));
    return s * h;
  }
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) s += weight(i) * weight(j) * std::exp(alpha * g(vec({-1.0 + i * h, -1.0 + j * h})));
  }
  return s * h * h;
}

}  // namespace

TEST(LogSumExp, HandValues) {
  EXPECT_NEAR(log_sum_exp(vec({0.0, 0.0})), std::log(2.0), 1e-15);
  EXPECT_NEAR(log_mean_exp(vec({1.0, 3.0})), std::log((std::exp(1.0) + std::exp(3.0)) / 2.0), 1e-14);
  EXPECT_EQ(log_mean_exp(vec({5.0, 5.0, 5.0})), 5.0);
  EXPECT_NEAR(log_sum_exp(vec({1000.0, 1000.0})), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Lhs, OnePointPerStratumPerAxis) {
  const SearchSpace space(vec({-2.0, 0.0, 5.0}), vec({2.0, 1.0, 6.0}));
  const std::size_t n = 37;
  const auto pts = lhs(space, n, 9);
  ASSERT_EQ(pts.size(), n);
  for (int a = 0; a < 3; ++a) {
    std::set<std::size_t> strata;
    for (const auto& x : pts) {
      ASSERT_TRUE(space.contains(x));
      const double u = (x[a] - space.lower()[a]) / space.range()[a];
      strata.insert(std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n))));
    }
    EXPECT_EQ(strata.size(), n) << "axis " << a;
  }
}

TEST(Lhs, DeterministicPerSeed) {
  const auto space = SearchSpace::unit(4);
  const auto a = lhs(space, 10, 3);
  const auto b = lhs(space, 10, 3);
  const auto c = lhs(space, 10, 4);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a[0], c[0]);
}

TEST(MaxMinDistance, ThreeFourFive) {
  Matrix X(2, 2);
  X << 0.0, 0.0, 10.0, 10.0;
  EXPECT_DOUBLE_EQ(max_min_distance(vec({3.0, 4.0}), X), 5.0);
}

TEST(MaxMinDistance, MatchesBruteForce) {
  Rng rng(2);
  const auto space = SearchSpace::unit(5);
  const Matrix pts = uniform_points(space, 30, rng);
  const Matrix X = pts.transpose();
  std::vector<Vector> list;
  for (Eigen::Index i = 0; i < 30; ++i) list.push_back(pts.col(i));
  const Matrix q = uniform_points(space, 20, rng);
  for (Eigen::Index j = 0; j < 20; ++j) {
    double best = 1e300;
    for (Eigen::Index i = 0; i < 30; ++i) {
      double s = 0.0;
      for (int a = 0; a < 5; ++a) s += (q(a, j) - pts(a, i)) * (q(a, j) - pts(a, i));
      best = std::min(best, std::sqrt(s));
    }
    EXPECT_NEAR(max_min_distance(Vector(q.col(j)), X), best, 1e-14);
    EXPECT_NEAR(max_min_distance(Vector(q.col(j)), std::span<const Vector>(list)), best, 1e-14);
  }
}

TEST(ZBo, ZeroAlphaUnbiased) {
  const auto space = SearchSpace::unit(2);
  const ProposalConfig cfg{0.01, 500, 500};
  const auto ei = [](const Vector&) { return 0.0; };
  std::vector<double> z;
  for (std::uint64_t s = 0; s < 200; ++s) z.push_back(std::exp(z_bo_hat(ei, 0.0, space, vec({0.2, -0.3}), cfg, s)));
  EXPECT_NEAR(mean(z), 4.0, 3.0 * sd(z) / std::sqrt(200.0) + 1e-12);
}

TEST(ZBo, UniformOnlyZeroAlphaIsExact) {
  const auto space = SearchSpace::unit(3);
  const ProposalConfig cfg{0.01, 1000, 0};
  const auto ei = [](const Vector& x) { return x.sum(); };
  EXPECT_NEAR(z_bo_hat(ei, 0.0, space, Vector::Zero(3), cfg, 5), std::log(8.0), 1e-12);
}

TEST(ZBo, MatchesTrapezoidOracle1D) {
  const Bump g{vec({0.3}), 5.0, 0.05};
  const ProposalConfig cfg{0.01, 5000, 5000};
  for (double alpha : {0.01, 0.1, 1.0, 2.0}) {
    const double exact = trapezoid(g, alpha, 1, 200000);
    const double est = std::exp(z_bo_hat(g, alpha, SearchSpace::unit(1), g.mu, cfg, 11));
    EXPECT_NEAR(est / exact, 1.0, 0.02) << "alpha=" << alpha;
  }
}

TEST(ZBo, MatchesTrapezoidOracle2D) {
  const Bump g{vec({-0.4, 0.55}), 8.0, 0.03};
  const ProposalConfig cfg{0.01, 5000, 5000};
  const double exact = trapezoid(g, 1.0, 2, 2000);
  const double est = std::exp(z_bo_hat(g, 1.0, SearchSpace::unit(2), g.mu, cfg, 21));
  EXPECT_NEAR(est / exact, 1.0, 0.02);
}

TEST(ZBo, MixtureReducesVarianceForPeakedIntegrand) {
  const Bump g{vec({0.1, 0.1}), 10.0, 0.01};
  const auto space = SearchSpace::unit(2);
  std::vector<double> mixed, plain;
  for (std::uint64_t s = 0; s < 50; ++s) {
    mixed.push_back(std::exp(z_bo_hat(g, 1.0, space, g.mu, {0.01, 5000, 5000}, s)));
    plain.push_back(std::exp(z_bo_hat(g, 1.0, space, g.mu, {0.01, 10000, 0}, s)));
  }
  EXPECT_GE(sd(plain) * sd(plain), 10.0 * sd(mixed) * sd(mixed));
}

TEST(ZBo, StandardErrorTracksSpread) {
  const Bump g{vec({0.0}), 3.0, 0.2};
  const auto space = SearchSpace::unit(1);
  const ProposalConfig cfg{0.05, 300, 300};
  std::vector<double> logs, ses;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto sample = ProposalSample::draw(space, g.mu, cfg, s);
    Vector v(sample.points().cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(Vector(sample.points().col(i)));
    const auto lp = sample.log_partition(v, 1.0);
    logs.push_back(lp.log_z);
    ses.push_back(lp.se);
  }
  EXPECT_NEAR(mean(ses) / sd(logs), 1.0, 0.3);
}

TEST(ZBo, NoOverflowAtLargeExponent) {
  const auto space = SearchSpace::unit(2);
  for (double level : {700.0, 1000.0}) {
    const auto flat = [&](const Vector&) { return level; };
    const double uniform_only = z_bo_hat(flat, 1.0, space, Vector::Zero(2), {0.01, 100, 0}, 1);
    EXPECT_NEAR(uniform_only, level + std::log(4.0), 1e-9);
    const double mixed = z_bo_hat(flat, 1.0, space, Vector::Zero(2), {0.01, 100, 100}, 1);
    EXPECT_TRUE(std::isfinite(mixed));
  }
}

TEST(ZBo, RejectsNegativeAlpha) {
  const auto ei = [](const Vector&) { return 0.0; };
  EXPECT_THROW(z_bo_hat(ei, -1.0, SearchSpace::unit(1), vec({0.0}), {}, 1), Error);
}

TEST(ZIni, ZeroAlphaIsLogVolume) {
  const SearchSpace space(vec({0.0, 0.0}), vec({3.0, 0.5}));
  const auto d = [](const Vector& x) { return x.norm(); };
  EXPECT_NEAR(z_ini_hat(d, 0.0, space, 10, 3), std::log(1.5), 1e-14);
}

TEST(ZIni, MatchesTrapezoidOracle) {
  const std::vector<Vector> prev = {vec({-0.5}), vec({0.2}), vec({0.9})};
  const auto d = [&](const Vector& x) { return max_min_distance(x, std::span<const Vector>(prev)); };
  for (double alpha : {1.0, 10.0}) {
    const double exact = trapezoid(d, alpha, 1, 200000);
    const double est = std::exp(z_ini_hat(d, alpha, SearchSpace::unit(1), 10000, 8));
    EXPECT_NEAR(est / exact, 1.0, 0.01) << "alpha=" << alpha;
  }
}

TEST(ZIni, ErrorShrinksAsRootN) {
  const std::vector<Vector> prev = {vec({0.0, 0.0})};
  const auto d = [&](const Vector& x) { return max_min_distance(x, std::span<const Vector>(prev)); };
  const auto space = SearchSpace::unit(2);
  std::vector<double> small, large;
  for (std::uint64_t s = 0; s < 100; ++s) {
    small.push_back(z_ini_hat(d, 3.0, space, 1000, s));
    large.push_back(z_ini_hat(d, 3.0, space, 16000, 1000 + s));
  }
  EXPECT_NEAR(sd(small) / sd(large), 4.0, 1.0);
}
