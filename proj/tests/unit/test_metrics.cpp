#include "test_util.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/metrics/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace lsdm;
using namespace lsdm::metrics;

namespace {

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Direct evaluation of the five formulas.
struct Ref {
  double mse, rmse, mae, cs, r2;
};

Ref reference(const Matrix& y, const Matrix& p) {
  const double n = static_cast<double>(y.size());
  double se = 0, ae = 0, dot = 0, ny = 0, np = 0, mean = 0;
  for (Index i = 0; i < y.size(); ++i) mean += y.data()[i];
  mean /= n;
  double tot = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const double a = y.data()[i], b = p.data()[i];
    se += (a - b) * (a - b);
    ae += std::abs(a - b);
    dot += a * b;
    ny += a * a;
    np += b * b;
    tot += (a - mean) * (a - mean);
  }
  return {se / n, std::sqrt(se / n), ae / n, dot / std::sqrt(ny * np), 1.0 - se / tot};
}

}  // namespace

TEST_SUITE("losses_metrics") {
  TEST_CASE("hand-evaluated example") {
    const MetricsReport r = compute_metrics(col({1, 2, 3}), col({2, 2, 2}));
    CHECK(r.mse == doctest::Approx(0.6667).epsilon(1e-4));
    CHECK(r.rmse == doctest::Approx(0.8165).epsilon(1e-4));
    CHECK(r.mae == doctest::Approx(0.6667).epsilon(1e-4));
    REQUIRE(r.cs.has_value());
    CHECK(*r.cs == doctest::Approx(0.9258).epsilon(1e-4));
    REQUIRE(r.r2.has_value());
    CHECK(std::abs(*r.r2) < 1e-12);
    CHECK(r.n == 3);
    CHECK(r.flags().empty());
  }

  TEST_CASE("perfect prediction") {
    const Matrix y = test::random_matrix(20, 4, 1);
    const MetricsReport r = compute_metrics(y, y);
    CHECK(r.mse == 0.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.mae == 0.0);
    CHECK(*r.cs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*r.r2 == 1.0);
  }

  TEST_CASE("undefined cases are flagged, not NaN") {
    const MetricsReport r = compute_metrics(col({5, 5, 5}), col({4, 5, 6}));
    CHECK_FALSE(r.r2.has_value());
    CHECK(r.mse == doctest::Approx(2.0 / 3.0));
    CHECK(r.cs.has_value());
    const auto f = r.flags();
    CHECK(std::find(f.begin(), f.end(), "r2_undefined") != f.end());

    const MetricsReport z = compute_metrics(col({1, 2, 3}), col({0, 0, 0}));
    CHECK_FALSE(z.cs.has_value());
    CHECK(z.r2.has_value());
    const auto fz = z.flags();
    CHECK(std::find(fz.begin(), fz.end(), "cs_undefined") != fz.end());

    CHECK_THROWS_AS((void)compute_metrics(Matrix(0, 1), Matrix(0, 1)), ValidationError);
    CHECK_THROWS_AS((void)compute_metrics(col({1, NAN}), col({1, 2})), ValidationError);
    CHECK_THROWS_AS((void)compute_metrics(col({1, 2}), col({1, 2, 3})), ShapeError);
  }

  TEST_CASE("metrics agree with a direct evaluation and satisfy the identities") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Matrix y = test::random_matrix(30, 3, seed);
      const Matrix p = y + test::random_matrix(30, 3, seed + 100, 0.5);
      const MetricsReport r = compute_metrics(y, p);
      const Ref e = reference(y, p);
      CHECK(r.mse == doctest::Approx(e.mse).epsilon(1e-12));
      CHECK(r.rmse == doctest::Approx(e.rmse).epsilon(1e-12));
      CHECK(r.mae == doctest::Approx(e.mae).epsilon(1e-12));
      CHECK(*r.cs == doctest::Approx(e.cs).epsilon(1e-12));
      CHECK(*r.r2 == doctest::Approx(e.r2).epsilon(1e-12));
      CHECK(std::abs(r.rmse * r.rmse - r.mse) < 1e-12);
      CHECK(std::abs(*r.cs) <= 1.0 + 1e-12);
      CHECK(*r.r2 <= 1.0);

      // Sample order does not matter.
      Matrix yr = y.colwise().reverse(), pr = p.colwise().reverse();
      const MetricsReport rr = compute_metrics(yr, pr);
      CHECK(rr.mse == doctest::Approx(r.mse).epsilon(1e-12));
      CHECK(*rr.r2 == doctest::Approx(*r.r2).epsilon(1e-12));

      // CS is scale invariant.
      CHECK(*compute_metrics(y, 3.5 * p).cs == doctest::Approx(*r.cs).epsilon(1e-12));
      CHECK(cosine_loss(2.0 * p, y) == doctest::Approx(cosine_loss(p, y)).epsilon(1e-12));
    }
    // Predicting the mean gives R^2 = 0.
    const Matrix y = test::random_matrix(25, 1, 77);
    const Matrix m = Matrix::Constant(25, 1, y.mean());
    CHECK(std::abs(*compute_metrics(y, m).r2) < 1e-12);
  }

  TEST_CASE("cosine loss examples") {
    const Matrix t = test::random_matrix(4, 3, 5);
    CHECK(std::abs(cosine_loss(t, t)) < 1e-12);
    CHECK(cosine_loss(-t, t) == doctest::Approx(2.0).epsilon(1e-12));
    Matrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 1;
    CHECK(cosine_loss(a, b) == 1.0);
    CHECK_THROWS_AS((void)cosine_loss(Matrix::Zero(4, 3), t), ValidationError);
    CHECK_THROWS_AS((void)cosine_loss(t, Matrix::Zero(4, 3)), ValidationError);
    CHECK_THROWS_AS((void)cosine_loss(t, Matrix::Ones(3, 4)), ShapeError);
  }

  TEST_CASE("combined loss degenerates to its terms") {
    const Matrix p = test::random_matrix(6, 2, 1), t = test::random_matrix(6, 2, 2);
    const double mse = (p - t).squaredNorm() / 12.0;
    CHECK(combined_loss(p, t, 1, 0) == doctest::Approx(mse).epsilon(1e-14));
    CHECK(combined_loss(p, t, 0, 1) == doctest::Approx(cosine_loss(p, t)).epsilon(1e-14));
    CHECK(combined_loss(p, t, 0.3, 0.7) == doctest::Approx(0.3 * mse + 0.7 * cosine_loss(p, t)).epsilon(1e-14));
    for (double l1 : {0.0, 0.5, 1.0}) {
      for (double l2 : {0.0, 0.5, 1.0}) CHECK(std::abs(combined_loss(t, t, l1, l2)) < 1e-12);
    }
    // The cosine term is skipped at weight 0, so an all-zero prediction is fine.
    CHECK(combined_loss(Matrix::Zero(6, 2), t, 1, 0) == doctest::Approx(t.squaredNorm() / 12.0));
    CHECK_THROWS_AS((void)combined_loss(Matrix::Zero(6, 2), t, 1, 1), ValidationError);
    CHECK_THROWS_AS((void)combined_loss(p, t, -1, 0), ValidationError);
  }

  TEST_CASE("per-service reports are column-independent") {
    const Matrix y = test::random_matrix(40, 5, 3);
    auto perfect = per_service_metrics(y, y);
    REQUIRE(perfect.size() == 5u);
    for (const auto& r : perfect) {
      CHECK(r.mse == 0.0);
      CHECK(*r.r2 == 1.0);
      CHECK(r.n == 40);
    }
    Matrix p = y;
    p.col(2) += test::random_matrix(40, 1, 4);
    const auto degraded = per_service_metrics(y, p);
    for (int k = 0; k < 5; ++k) {
      if (k == 2) {
        CHECK(degraded[2].mse > 0.1);
      } else {
        CHECK(degraded[static_cast<std::size_t>(k)].mse == 0.0);
      }
    }

    const Matrix q = y + test::random_matrix(40, 5, 9, 0.3);
    const MetricsReport agg = compute_metrics_with_services(y, q);
    double mean_mse = 0;
    for (const auto& r : agg.per_service) mean_mse += r.mse / 5.0;
    CHECK(agg.mse == doctest::Approx(mean_mse).epsilon(1e-12));
    CHECK(agg.n == 200);
    CHECK(agg.per_service.size() == 5u);
  }

  TEST_CASE("JSON layout and round trip") {
    Matrix y(3, 2), p(3, 2);
    y << 1, 5, 2, 5, 3, 5;
    p << 2, 4, 2, 5, 2, 6;
    const MetricsReport r = compute_metrics_with_services(y, p);
    const nlohmann::json j = to_json(r);
    for (const char* key : {"mse", "rmse", "mae", "cs", "r2", "n", "flags", "per_service"}) CHECK(j.contains(key));
    CHECK(j["per_service"].size() == 2u);
    CHECK(j["per_service"][1]["r2"].is_null());
    CHECK(j["per_service"][1]["flags"][0] == "r2_undefined");

    const MetricsReport back = metrics_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.mse == r.mse);
    CHECK(back.cs == r.cs);
    CHECK(back.r2 == r.r2);
    CHECK(back.n == r.n);
    REQUIRE(back.per_service.size() == 2u);
    CHECK_FALSE(back.per_service[1].r2.has_value());
    CHECK(to_json(back) == j);

    CHECK_THROWS_AS((void)metrics_from_json(nlohmann::json{{"mse", "x"}}), ValidationError);
  }
}
