#include <cmath>
#include <random>

#include "doctest.h"
#include "lung/error.hpp"
#include "lung/metrics.hpp"

using namespace lung;

namespace {

SeedStats random_stats(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mu(-5.0, 5.0), sd(0.1, 3.0);
  SeedStats s;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    s.mu[i] = mu(rng);
    s.sigma[i] = sd(rng);
  }
  return s;
}

std::vector<FeatureVector> random_features(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<FeatureVector> out(n);
  for (auto& f : out)
    for (double& v : f.values) v = g(rng);
  return out;
}

// Oracles written from the formulas, deliberately in a different order of operations.
double oracle_ft_dist(const std::vector<FeatureVector>& y, const std::vector<FeatureVector>& s, const SeedStats& st) {
  long double total = 0;
  for (const auto& a : y) {
    std::vector<long double> d;
    for (const auto& b : s) {
      long double sq = 0;
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const long double z = ((long double)a.values[i] - b.values[i]) / st.sigma[i];
        sq += z * z;
      }
      d.push_back(std::sqrt(sq));
    }
    total += *std::min_element(d.begin(), d.end());
  }
  return double(total / y.size());
}

double oracle_ft_mmse(const std::vector<FeatureVector>& y, const std::vector<FeatureVector>& s, const SeedStats& st) {
  long double total = 0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    long double my = 0, ms = 0;
    for (const auto& a : y) my += a.values[i];
    for (const auto& b : s) ms += b.values[i];
    my /= y.size();
    ms /= s.size();
    total += (my - ms) * (my - ms) / ((long double)st.sigma[i] * st.sigma[i]);
  }
  return double(total / kFeatureCount);
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("formula anchors") {
  CHECK(score(2.0, 0.1, 0.1, 0.5) == doctest::Approx(50.0).epsilon(1e-14));
  CHECK(score(1.0, 3.0, 0.5, 0.2) == 0.0);
  CHECK_THROWS_AS(score(2.0, 0.1, 0.1, 1.0), DegenerateAcceptance);
  CHECK_THROWS_AS(score(2.0, 0.1, 0.1, 1.5), std::invalid_argument);

  SeedStats st;
  st.mu.fill(0.0);
  st.sigma.fill(2.0);
  std::vector<FeatureVector> seeds(3);
  for (std::size_t k = 0; k < 3; ++k) seeds[k].values.fill(double(k) * 10.0);
  CHECK(ft_dist(seeds, seeds, st) == 0.0);
  CHECK(ft_mmse(seeds, seeds, st) == 0.0);

  std::vector<FeatureVector> y{seeds[1]};
  y[0].values[4] += 2.0;  // one sigma
  CHECK(ft_dist(y, seeds, st) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<FeatureVector> dup{y[0], y[0]};
  CHECK(ft_dist(dup, seeds, st) == ft_dist(y, seeds, st));

  std::vector<FeatureVector> shifted = seeds;
  for (auto& f : shifted)
    for (double& v : f.values) v += 2.0;
  CHECK(ft_mmse(shifted, seeds, st) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<FeatureVector> one_off = seeds;
  for (auto& f : one_off) f.values[7] += 4.0;
  CHECK(ft_mmse(one_off, seeds, st) == doctest::Approx(4.0 / 12.0).epsilon(1e-15));

  CHECK_THROWS_AS(ft_dist({}, seeds, st), EmptySet);
  CHECK_THROWS_AS(ft_mmse(seeds, {}, st), EmptySet);
}

TEST_CASE("metrics agree with brute-force oracles on random inputs") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const SeedStats st = random_stats(rng);
    const auto y = random_features(rng, 1 + rng() % 12);
    const auto s = random_features(rng, 1 + rng() % 12);
    CHECK(close(ft_dist(y, s, st), oracle_ft_dist(y, s, st)));
    CHECK(close(ft_mmse(y, s, st), oracle_ft_mmse(y, s, st)));

    const double fd = 3.0 * u(rng), fm = 2.0 * u(rng), mse = 0.2 * u(rng), ac = 0.999 * u(rng);
    const double expected = (fd - 1.0) / (fm + 0.1) / (mse + 0.1) / (1.0 - ac);
    CHECK(close(score(fd, fm, mse, ac), expected));

    const double mu = 10 * u(rng) - 5, sigma = 0.1 + u(rng), yv = mu + 8 * sigma * (u(rng) - 0.5),
                 yb = mu + 8 * sigma * (u(rng) - 0.5);
    const double d = weighted_distance(yv, yb, mu, sigma);
    CHECK(close(d, std::abs(yv - mu + 3 * (yb - mu)) / sigma));
    const bool same_side = (yv - mu) * (yb - mu) > 0;
    CHECK(close(p_keep(yv, yb, mu, d), same_side && d > 3 ? 0.7 + 0.9 / d : 1.0));
  }
}

TEST_CASE("score is monotone in each argument") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double fd = 1.0 + 3.0 * u(rng) + 1e-3, fm = 2.0 * u(rng), mse = 0.2 * u(rng), ac = 0.9 * u(rng);
    const double base = score(fd, fm, mse, ac);
    const double h = 0.01 + 0.05 * u(rng);
    CHECK(score(fd + h, fm, mse, ac) > base);
    CHECK(score(fd, fm + h, mse, ac) < base);
    CHECK(score(fd, fm, mse + h, ac) < base);
    CHECK(score(fd, fm, mse, ac + h) > base);
  }
}

TEST_CASE("reports, csv rows and table formatting") {
  SeedStats st;
  st.mu.fill(0.0);
  st.sigma.fill(1.0);
  std::vector<FeatureVector> seeds(2);
  seeds[1].values.fill(1.0);
  std::vector<FeatureVector> acc{seeds[1]};
  acc[0].values[0] = 3.0;

  GenerationCounts c{400, 300, 90, 5, 5, 200};
  const MetricsReport r = make_report(c, 0.0123, acc, seeds, st);
  CHECK(r.ac == 0.5);
  CHECK(r.ft_dist == doctest::Approx(2.0));
  CHECK_FALSE(r.score_degenerate);
  CHECK(r.score == doctest::Approx(score(r.ft_dist, r.ft_mmse, r.mse, r.ac)).epsilon(1e-15));
  CHECK(parse_csv_row(to_csv_row(r)) == r);

  c.accepted = 400;
  const MetricsReport all = make_report(c, 0.0123, acc, seeds, st);
  CHECK(all.score_degenerate);
  CHECK(std::isnan(all.score));
  const MetricsReport back = parse_csv_row(to_csv_row(all));
  CHECK(back.score_degenerate);
  CHECK(std::isnan(back.score));
  CHECK(format_table_row("x", all).find("unbounded") != std::string::npos);

  const std::string row = format_table_row("32_3_64_256", r);
  CHECK(row.find("12.30") != std::string::npos);  // MSE x1000
  CHECK(row.find("50.0") != std::string::npos);   // AC percent
  CHECK(format_table_header().find("MSEx1000") != std::string::npos);

  CHECK_THROWS_AS(parse_csv_row("1,2,3"), FormatError);
  CHECK_THROWS_AS(make_report(GenerationCounts{}, 0.0, acc, seeds, st), EmptySet);
}
