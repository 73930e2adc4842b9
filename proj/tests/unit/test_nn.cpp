#include "gradcheck.hpp"
#include "test_util.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/nn/autograd.hpp"
#include "lsdm/nn/parameters.hpp"

#include <doctest.h>

#include <cmath>

using namespace lsdm;
using namespace lsdm::nn;

namespace {

Var leaf(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  return Var(test::random_matrix(r, c, seed, scale), true);
}

// A fixed random projection to a scalar, so every output entry gets a distinct weight.
Var project(const Var& y, std::uint64_t seed) {
  return sum(mul(y, constant(test::random_matrix(y.rows(), y.cols(), seed))));
}

void expect_grad(const std::vector<Var>& leaves, const std::function<Var()>& f, double tol = 1e-6) {
  const auto r = test::grad_check(leaves, f);
  CHECK(r.entries > 0);
  CHECK(r.max_rel_error < tol);
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("elementwise and linear-algebra ops have correct gradients") {
    Var a = leaf(3, 4, 1), b = leaf(3, 4, 2), m = leaf(4, 5, 3), row = leaf(1, 4, 4), s = leaf(1, 1, 5);
    expect_grad({a, m}, [&] { return project(matmul(a, m), 10); });
    expect_grad({a, b}, [&] { return project(matmul_bt(a, b), 11); });
    expect_grad({a}, [&] { return project(transpose(a), 12); });
    expect_grad({a}, [&] { return project(reshape(a, 2, 6), 13); });
    expect_grad({a, m, row}, [&] { return project(linear(a, m, slice_cols(leaf(1, 5, 6), 0, 5)), 14); });
    expect_grad({a, b}, [&] { return project(add(a, b), 15); });
    expect_grad({a, b}, [&] { return project(sub(a, b), 16); });
    expect_grad({a, b}, [&] { return project(mul(a, b), 17); });
    expect_grad({a}, [&] { return project(scale(a, -2.5), 18); });
    expect_grad({a}, [&] { return project(add_scalar(a, 0.3), 19); });
    expect_grad({a, row}, [&] { return project(add_row(a, row), 20); });
    expect_grad({a, s}, [&] { return project(mul_by_scalar(a, s), 21); });
    expect_grad({a}, [&] { return project(exp(a), 22); });
    expect_grad({a}, [&] { return project(square(a), 23); });
    expect_grad({a}, [&] { return project(silu(a), 24); });
    expect_grad({a}, [&] { return project(gelu(a), 25); });
    expect_grad({a}, [&] { return sum(a); });
    expect_grad({a}, [&] { return mean(square(a)); });
  }

  TEST_CASE("structural ops have correct gradients") {
    Var a = leaf(6, 4, 31), b = leaf(6, 3, 32), fb = leaf(1, 4, 33);
    expect_grad({a}, [&] { return project(layer_norm(a), 40); });
    expect_grad({a}, [&] { return project(l2_normalize_rows(a), 41); });
    expect_grad({a}, [&] { return project(repeat_rows(a, 3), 42); });
    const std::vector<Index> rows{5, 0, 0, 3};
    expect_grad({a}, [&] { return project(gather_rows(a, rows), 43); });
    expect_grad({a, b}, [&] {
      const Var parts[] = {a, b};
      return project(concat_cols(parts), 44);
    });
    expect_grad({a}, [&] { return project(slice_cols(a, 1, 2), 45); });
    const std::vector<Index> offsets{0, 2, 2, 6};  // middle segment empty
    expect_grad({a, fb}, [&] { return project(segment_mean(a, offsets, fb), 46); });
  }

  TEST_CASE("grouped attention gradients, including the single-position fast path") {
    Var q = leaf(12, 8, 51), k = leaf(12, 8, 52), v = leaf(12, 8, 53);
    expect_grad({q, k, v}, [&] { return project(grouped_attention(q, k, v, 4, 2), 54); });
    expect_grad({q, k, v}, [&] { return project(grouped_attention(q, k, v, 3, 4), 55); });
    expect_grad({q, k, v}, [&] { return project(grouped_attention(q, k, v, 1, 2), 56); });
    CHECK_THROWS_AS(grouped_attention(q, k, v, 5, 2), ShapeError);
    CHECK_THROWS_AS(grouped_attention(q, k, v, 4, 3), ShapeError);
  }

  TEST_CASE("attention over one position returns the values") {
    const Matrix v = test::random_matrix(5, 4, 3);
    const Var out = grouped_attention(constant(test::random_matrix(5, 4, 1)), constant(test::random_matrix(5, 4, 2)),
                                      constant(v), 1, 2);
    CHECK((out.value() - v).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("attention matches a direct softmax evaluation") {
    const Matrix q = test::random_matrix(6, 4, 7), k = test::random_matrix(6, 4, 8), v = test::random_matrix(6, 4, 9);
    const Matrix out = grouped_attention(constant(q), constant(k), constant(v), 3, 2).value();
    for (Index g = 0; g < 2; ++g) {
      for (Index h = 0; h < 2; ++h) {
        for (Index i = 0; i < 3; ++i) {
          std::vector<double> w(3);
          double z = 0.0;
          for (Index j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (Index c = 0; c < 2; ++c) dot += q(g * 3 + i, h * 2 + c) * k(g * 3 + j, h * 2 + c);
            w[static_cast<std::size_t>(j)] = std::exp(dot / std::sqrt(2.0));
            z += w[static_cast<std::size_t>(j)];
          }
          for (Index c = 0; c < 2; ++c) {
            double expect = 0.0;
            for (Index j = 0; j < 3; ++j) expect += w[static_cast<std::size_t>(j)] / z * v(g * 3 + j, h * 2 + c);
            CHECK(out(g * 3 + i, h * 2 + c) == doctest::Approx(expect).epsilon(1e-12));
          }
        }
      }
    }
  }

  TEST_CASE("loss ops have correct gradients") {
    Var p = leaf(4, 3, 61), t = leaf(4, 3, 62), logits = leaf(5, 5, 63);
    expect_grad({p, t}, [&] { return mse(p, t); });
    expect_grad({p, t}, [&] { return cosine_loss(p, t); });
    expect_grad({logits}, [&] { return cross_entropy_diag(logits); });
    CHECK_THROWS_AS(cosine_loss(constant(Matrix::Zero(4, 3)), t), ValidationError);
  }

  TEST_CASE("no-grad guard skips graph recording") {
    Var a = leaf(2, 2, 1);
    {
      NoGradGuard g;
      CHECK_FALSE(grad_enabled());
      CHECK_FALSE(square(a).requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(square(a).requires_grad());
  }

  TEST_CASE("parameters are float-representable and Linear computes xW + b") {
    ParameterStore store;
    Rng rng(1);
    Linear lin(store, "l", 3, 2, rng);
    for (const auto& e : store.entries()) {
      const Matrix& v = e.var.value();
      for (Index i = 0; i < v.size(); ++i) CHECK(static_cast<double>(static_cast<float>(v.data()[i])) == v.data()[i]);
    }
    const Matrix x = test::random_matrix(4, 3, 2);
    const Matrix expect = (x * lin.weight().value()).rowwise() + RowVector(lin.bias().value());
    CHECK((lin(constant(x)).value() - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(store.scalar_count() == 8);
    CHECK_THROWS(store.add("l.weight", Matrix::Zero(1, 1)));
  }

  TEST_CASE("Adam minimizes a quadratic and cosine schedule decays to zero") {
    ParameterStore store;
    Var w = store.add("w", Matrix::Constant(1, 3, 2.0));
    Adam adam(store, AdamConfig{.learning_rate = 0.1});
    for (int i = 0; i < 300; ++i) {
      store.zero_grad();
      backward(sum(square(w)));
      adam.step(0.05);
    }
    CHECK(w.value().cwiseAbs().maxCoeff() < 1e-2);
    CHECK(cosine_lr(1e-3, 0, 100) == doctest::Approx(1e-3));
    CHECK(cosine_lr(1e-3, 50, 100) == doctest::Approx(5e-4));
    CHECK(cosine_lr(1e-3, 100, 100) == doctest::Approx(0.0));
  }

  TEST_CASE("gradient clipping bounds the update direction norm") {
    ParameterStore store;
    Var w = store.add("w", Matrix::Constant(1, 2, 0.0));
    Adam adam(store, AdamConfig{.learning_rate = 1.0, .grad_clip = 1.0});
    store.zero_grad();
    backward(sum(mul(w, constant(Matrix::Constant(1, 2, 100.0)))));
    const double norm = adam.step(1.0);
    CHECK(norm == doctest::Approx(100.0 * std::sqrt(2.0)));
  }
}
