#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "treelabel/rng.hpp"
#include "treelabel/spatial.hpp"

using namespace treelabel;

namespace {

// Brute-force oracles sharing the implementation's tie rule: ascending
// (squared distance, id).
std::vector<Neighbor> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back(dist2(q, pts[i]), i);
  std::sort(all.begin(), all.end());
  all.resize(k);
  std::vector<Neighbor> out;
  for (const auto& [d2v, id] : all) out.push_back({id, std::sqrt(d2v)});
  return out;
}

std::vector<Neighbor> brute_ball(const std::vector<Vec3>& pts, const Vec3& q, double r,
                                 std::size_t max_count) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2v = dist2(q, pts[i]);
    if (d2v <= r * r) all.emplace_back(d2v, i);
  }
  std::sort(all.begin(), all.end());
  if (all.size() > max_count) all.resize(max_count);
  std::vector<Neighbor> out;
  for (const auto& [d2v, id] : all) out.push_back({id, std::sqrt(d2v)});
  return out;
}

bool same(const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].distance != b[i].distance) return false;
  }
  return true;
}

std::vector<Vec3> random_points(std::size_t n, Rng& rng, double extent = 1.0) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) {
    p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
  }
  return pts;
}

}  // namespace

TEST_CASE("empty index is rejected; single point answers everything") {
  CHECK_THROWS_AS(SpatialIndex(std::vector<Vec3>{}), std::runtime_error);

  const SpatialIndex index(std::vector<Vec3>{{1.0, 2.0, 3.0}});
  const auto nn = index.knn({0, 0, 0}, 1);
  REQUIRE(nn.size() == 1);
  CHECK(nn[0].id == 0);
  CHECK(index.ball_query({1, 2, 3}, 0.5, 10).size() == 1);
  CHECK(index.ball_query({9, 9, 9}, 0.5, 10).empty());
}

TEST_CASE("knn: stored point queried exactly gives distance zero first") {
  Rng rng(1);
  const auto pts = random_points(50, rng);
  const SpatialIndex index(pts);
  const auto nn = index.knn(pts[17], 3);
  CHECK(nn[0].id == 17);
  CHECK(nn[0].distance == 0.0);
}

TEST_CASE("knn on collinear points keeps ascending order") {
  const std::vector<Vec3> pts{{1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  const SpatialIndex index(pts);
  const auto nn = index.knn({0, 0, 0}, 2);
  REQUIRE(nn.size() == 2);
  CHECK(nn[0].id == 0);
  CHECK(nn[1].id == 1);
}

TEST_CASE("k greater than the point count throws") {
  const SpatialIndex index({{{0, 0, 0}}, {{1, 1, 1}}});
  CHECK_THROWS_AS(index.knn({0, 0, 0}, 3), std::runtime_error);
}

TEST_CASE("duplicate points are both retrievable, ordered by insertion id") {
  const std::vector<Vec3> pts{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {2, 2, 2}};
  const SpatialIndex index(pts);
  const auto nn = index.knn({0.5, 0.5, 0.5}, 2);
  CHECK(nn[0].id == 0);
  CHECK(nn[1].id == 1);

  const auto ball = index.ball_query({0.5, 0.5, 0.5}, 0.1, 1);
  REQUIRE(ball.size() == 1);
  CHECK(ball[0].id == 0);
}

TEST_CASE("ball query truncates to the max_count nearest") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({0.01 * i, 0, 0});
  const SpatialIndex index(pts);
  const auto hits = index.ball_query({0, 0, 0}, 1.0, 24);
  REQUIRE(hits.size() == 24);
  for (int i = 0; i < 24; ++i) CHECK(hits[i].id == static_cast<std::size_t>(i));
}

TEST_CASE("knn and ball_query are bit-identical to brute force over randomized trials") {
  Rng rng(20240817);
  int trials = 0;
  for (int round = 0; round < 250; ++round) {
    const std::size_t m = 1 + rng.uniform_index(2000);
    auto pts = random_points(m, rng);
    // Sprinkle duplicates to exercise the id tie rule.
    if (m > 4) {
      pts[m / 2] = pts[m / 4];
      pts[m - 1] = pts[0];
    }
    const SpatialIndex index(pts);
    for (int q = 0; q < 40; ++q, ++trials) {
      const Vec3 query{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
      const std::size_t k = 1 + rng.uniform_index(std::min<std::size_t>(m, 12));
      CHECK(same(index.knn(query, k), brute_knn(pts, query, k)));
      const double r = rng.uniform(0.05, 0.8);
      const std::size_t cap = 1 + rng.uniform_index(30);
      CHECK(same(index.ball_query(query, r, cap), brute_ball(pts, query, r, cap)));
    }
  }
  CHECK(trials == 10000);
}

TEST_CASE("idw: single neighbor passes through; symmetric distances average") {
  const std::vector<double> one_feat{3.5, -2.0};
  auto out = idw_propagate(one_feat, 2, std::vector<double>{0.7});
  CHECK(out[0] == doctest::Approx(3.5));
  CHECK(out[1] == doctest::Approx(-2.0));

  const std::vector<double> feats{0.0, 2.0};
  out = idw_propagate(feats, 1, std::vector<double>{1.0, 1.0});
  CHECK(out[0] == doctest::Approx(1.0));
}

TEST_CASE("idw matches the hand-evaluated weighted sum") {
  // d = (1, 3): weights 1/1 and 1/3 normalize to 0.75 / 0.25.
  const std::vector<double> feats{0.0, 2.0};
  const auto out = idw_propagate(feats, 1, std::vector<double>{1.0, 3.0});
  CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));

  const auto w = idw_weights(std::vector<double>{1.0, 3.0});
  CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("idw exact-hit shortcut hands everything to the coincident neighbor") {
  const std::vector<double> feats{10.0, 20.0, 30.0};
  const auto w = idw_weights(std::vector<double>{0.5, 0.0, 0.2});
  CHECK(w[0] == 0.0);
  CHECK(w[1] == 1.0);
  CHECK(w[2] == 0.0);
  const auto out = idw_propagate(feats, 1, std::vector<double>{0.5, 0.0, 0.2});
  CHECK(out[0] == 20.0);
}

TEST_CASE("idw weights: nonnegative, sum to one, convex combination, permutation invariant") {
  Rng rng(99);
  for (int round = 0; round < 200; ++round) {
    const std::size_t k = 1 + rng.uniform_index(8);
    std::vector<double> d(k), f(k);
    for (std::size_t i = 0; i < k; ++i) {
      d[i] = rng.uniform(0.0, 2.0);
      f[i] = rng.uniform(-5.0, 5.0);
    }
    const auto w = idw_weights(d);
    double total = 0;
    for (double x : w) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const auto out = idw_propagate(f, 1, d);
    CHECK(out[0] >= *std::min_element(f.begin(), f.end()) - 1e-12);
    CHECK(out[0] <= *std::max_element(f.begin(), f.end()) + 1e-12);

    // Permuting the neighbor list permutes nothing observable.
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<double> dp(k), fp(k);
    for (std::size_t i = 0; i < k; ++i) {
      dp[i] = d[perm[i]];
      fp[i] = f[perm[i]];
    }
    const auto out_p = idw_propagate(fp, 1, dp);
    CHECK(out_p[0] == doctest::Approx(out[0]).epsilon(1e-12));
  }
}

TEST_CASE("idw dimension mismatch throws") {
  CHECK_THROWS_AS(idw_propagate(std::vector<double>{1.0, 2.0, 3.0}, 2,
                                std::vector<double>{1.0, 2.0}),
                  std::runtime_error);
}
