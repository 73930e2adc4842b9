#include "test_util.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/data/synthetic.hpp"
#include "lsdm/env/contrastive.hpp"
#include "lsdm/env/embedding.hpp"
#include "lsdm/env/text.hpp"
#include "lsdm/env/towers.hpp"
#include "lsdm/experiment/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace lsdm;
using namespace lsdm::env;

namespace {

Eigen::RowVectorXi counts_of(std::initializer_list<std::pair<const char*, int>> entries) {
  Eigen::RowVectorXi c = Eigen::RowVectorXi::Zero(17);
  for (auto [name, n] : entries) c(data::PoiCatalog::standard().index_of(name)) = n;
  return c;
}

// Independent oracle: softmax cross-entropy written out term by term.
double info_nce_oracle(const Matrix& a, const Matrix& b, double tau) {
  const Index n = a.rows();
  double total = 0.0;
  for (int dir = 0; dir < 2; ++dir) {
    const Matrix& x = dir == 0 ? a : b;
    const Matrix& y = dir == 0 ? b : a;
    for (Index i = 0; i < n; ++i) {
      double denom = 0.0;
      for (Index j = 0; j < n; ++j) denom += std::exp(x.row(i).dot(y.row(j)) / tau);
      total += -std::log(std::exp(x.row(i).dot(y.row(i)) / tau) / denom) / static_cast<double>(n);
    }
  }
  return total;
}

Matrix unit_rows(Matrix m) {
  for (Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

struct ProfilePairs {
  std::vector<ContrastivePair> pairs;
  std::vector<int> profile;  // index into the profile library (name order)
};

// Pairs drawn from synthetic users of four POI profiles, no visits.
ProfilePairs profile_pairs(std::uint64_t seed, int per_user, int users) {
  auto c = data::SyntheticConfig::defaults();
  c.num_users = users;
  c.weeks = 1;
  c.seed = seed;
  c.visit_rate = 0.0;
  const auto truth = data::generate_synthetic_with_truth(c);
  ProfilePairs out;
  Rng rng(derive_seed(seed, 99));
  std::uniform_int_distribution<Index> pick(0, 167);
  for (std::size_t u = 0; u < truth.dataset.users.size(); ++u) {
    const auto& rec = truth.dataset.users[u];
    for (int i = 0; i < per_user; ++i) {
      const Index t = pick(rng);
      out.pairs.push_back({rec.images.tiles.row(t), poi_to_text(rec.poi.counts.row(t), data::PoiCatalog::standard(), 5)});
      out.profile.push_back(static_cast<int>(u % 4));
    }
  }
  return out;
}

double nce_with_towers(const DualTower& towers, std::span<const ContrastivePair> pairs) {
  const auto [zi, zt] = encode_pairs(towers, pairs);
  return info_nce(zi, zt, towers.temperature());
}

TowerConfig tower_config() { return TowerConfig{}; }

}  // namespace

TEST_SUITE("env_encoder") {
  TEST_CASE("poi_to_text: all-zero counts") {
    const auto d = poi_to_text(Eigen::RowVectorXi::Zero(17), data::PoiCatalog::standard(), 5);
    CHECK(d.text == "area with no recorded points of interest");
    CHECK(d.token_ids.size() == 7);
  }

  TEST_CASE("poi_to_text: top three categories, stable across runs") {
    const auto c = counts_of({{"Restaurant", 12}, {"Shopping", 5}, {"Education", 3}});
    const auto d = poi_to_text(c, data::PoiCatalog::standard(), 3);
    CHECK(d.text == "area with 12 restaurant, 5 shopping, 3 education points of interest");
    CHECK(d == poi_to_text(c, data::PoiCatalog::standard(), 3));
    for (int id : d.token_ids) {
      CHECK(id >= 0);
      CHECK(id < Vocabulary::size());
    }
  }

  TEST_CASE("poi_to_text: ties list the lower catalog id first (brute-force order)") {
    Rng rng(5);
    std::uniform_int_distribution<int> count(0, 6);
    const auto& cat = data::PoiCatalog::standard();
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::RowVectorXi c(17);
      for (int p = 0; p < 17; ++p) c(p) = count(rng);
      // Brute force: repeatedly take the max count with the smallest id.
      std::vector<int> used(17, 0);
      std::string expected = "area with ";
      int listed = 0;
      for (int k = 0; k < 4; ++k) {
        int best = -1;
        for (int p = 0; p < 17; ++p) {
          if (!used[p] && c(p) > 0 && (best < 0 || c(p) > c(best))) best = p;
        }
        if (best < 0) break;
        used[best] = 1;
        if (listed++ > 0) expected += ", ";
        std::string name = cat.name(best);
        std::transform(name.begin(), name.end(), name.begin(), ::tolower);
        expected += std::to_string(c(best)) + " " + name;
      }
      expected += listed == 0 ? "no recorded points of interest" : " points of interest";
      CHECK(poi_to_text(c, cat, 4).text == expected);
    }
    const auto tied = counts_of({{"Shopping", 5}, {"Hotel", 5}});
    CHECK(poi_to_text(tied, cat, 2).text == "area with 5 hotel, 5 shopping points of interest");
  }

  TEST_CASE("poi_to_text: argument validation") {
    const auto& cat = data::PoiCatalog::standard();
    CHECK_THROWS_AS(poi_to_text(Eigen::RowVectorXi::Zero(17), cat, 0), ValidationError);
    CHECK_THROWS_AS(poi_to_text(Eigen::RowVectorXi::Zero(17), cat, 18), ValidationError);
    CHECK_THROWS_AS(poi_to_text(Eigen::RowVectorXi::Zero(16), cat, 3), ShapeError);
    Eigen::RowVectorXi neg = Eigen::RowVectorXi::Zero(17);
    neg(0) = -1;
    CHECK_THROWS_AS(poi_to_text(neg, cat, 3), ValidationError);
  }

  TEST_CASE("poi_to_text is injective on the rendered (category, bucket) pairs") {
    // Distinct count buckets or categories give distinct token sequences.
    const auto& cat = data::PoiCatalog::standard();
    std::set<std::vector<int>> seen;
    for (int p = 0; p < 17; ++p) {
      for (int n : {1, 3, 6, 11}) {
        Eigen::RowVectorXi c = Eigen::RowVectorXi::Zero(17);
        c(p) = n;
        CHECK(seen.insert(poi_to_text(c, cat, 1).token_ids).second);
      }
    }
  }

  TEST_CASE("image tower: unit norm, deterministic, locally continuous") {
    DualTower towers(tower_config(), 3);
    const RowVector tile = test::random_matrix(1, 192, 4);
    const RowVector z = towers.encode_image(tile);
    CHECK(z.size() == 32);
    CHECK(std::abs(z.norm() - 1.0) < 1e-6);
    CHECK(test::bit_equal(z, towers.encode_image(tile)));
    RowVector nudged = tile;
    nudged(17) += 1e-8;
    CHECK((towers.encode_image(nudged) - z).cwiseAbs().maxCoeff() < 1e-4);
    CHECK_THROWS_AS((void)towers.encode_image(RowVector::Zero(191)), ShapeError);
    RowVector bad = tile;
    bad(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)towers.encode_image(bad), ValidationError);
  }

  TEST_CASE("text tower: empty sequence uses the null embedding; identical inputs agree") {
    DualTower towers(tower_config(), 3);
    const TextDescription empty{};
    const RowVector z0 = towers.encode_text(empty);
    CHECK(std::abs(z0.norm() - 1.0) < 1e-6);
    // Oracle: the null vector pushed through the feed-forward stack alone.
    {
      nn::NoGradGuard g;
      const auto& p = towers.parameters();
      Matrix h = p.get("towers.text.null").value() * p.get("towers.text.in.weight").value() +
                 p.get("towers.text.in.bias").value();
      h = h.array() / (1.0 + (-h.array()).exp());
      Matrix o = h * p.get("towers.text.out.weight").value() + p.get("towers.text.out.bias").value();
      o.row(0).normalize();
      CHECK((o - z0).cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto d = poi_to_text(counts_of({{"Hotel", 2}}), data::PoiCatalog::standard(), 3);
    CHECK(test::bit_equal(towers.encode_text(d), towers.encode_text(d)));
    CHECK(std::abs(towers.encode_text(d).norm() - 1.0) < 1e-6);
    CHECK(towers.temperature() == doctest::Approx(0.07).epsilon(1e-6));
  }

  TEST_CASE("info_nce: degenerate and hand-evaluated cases") {
    Matrix one(1, 3);
    one << 0.6, 0.8, 0.0;
    CHECK(info_nce(one, one, 0.07) == 0.0);

    Matrix same(2, 2);
    same << 1, 0, 1, 0;
    CHECK(std::abs(info_nce(same, same, 0.5) - 2.0 * std::log(2.0)) < 1e-6);

    const Matrix eye = Matrix::Identity(2, 2);
    CHECK(std::abs(info_nce(eye, eye, 1.0) - 2.0 * std::log(1.0 + std::exp(-1.0))) < 1e-6);
    CHECK(std::abs(2.0 * std::log(1.0 + std::exp(-1.0)) - 0.6266) < 1e-4);
  }

  TEST_CASE("info_nce: matches the oracle, non-negative, permutation invariant") {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = unit_rows(test::random_matrix(6, 5, 100 + trial));
      const Matrix b = unit_rows(test::random_matrix(6, 5, 200 + trial));
      const double v = info_nce(a, b, 0.3);
      CHECK(v == doctest::Approx(info_nce_oracle(a, b, 0.3)).epsilon(1e-10));
      CHECK(v >= 0.0);
      std::vector<Index> perm(6);
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(trial);
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix pa(6, 5), pb(6, 5);
      for (Index i = 0; i < 6; ++i) {
        pa.row(i) = a.row(perm[static_cast<std::size_t>(i)]);
        pb.row(i) = b.row(perm[static_cast<std::size_t>(i)]);
      }
      CHECK(info_nce(pa, pb, 0.3) == doctest::Approx(v).epsilon(1e-12));
      // Differentiable form agrees with the plain one.
      Matrix lt(1, 1);
      lt(0, 0) = std::log(1.0 / 0.3);
      CHECK(info_nce(nn::constant(a), nn::constant(b), nn::constant(lt)).item() == doctest::Approx(v).epsilon(1e-12));
    }
  }

  TEST_CASE("info_nce: errors") {
    const Matrix a = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(info_nce(a, Matrix::Identity(3, 2), 1.0), ShapeError);
    CHECK_THROWS_AS(info_nce(a, a, 0.0), ValidationError);
    CHECK_THROWS_AS(info_nce(a, a, -1.0), ValidationError);
  }

  TEST_CASE("fuse: identity, arithmetic, degenerate weights warn") {
    RowVector zi(2), zt(2);
    zi << 1, 0;
    zt << 0, 1;
    CHECK(fuse(zi, zt, 1.0, 0.0) == zi);
    RowVector half(2);
    half << 0.5, 0.5;
    CHECK(fuse(zi, zt, 0.5, 0.5) == half);

    std::vector<std::string> warnings;
    auto previous = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    const RowVector z = fuse(zi, zt, 0.0, 0.0);
    set_warning_sink(previous);
    CHECK(z.isZero(0.0));
    CHECK(warnings.size() == 1);
    CHECK_THROWS_AS(fuse(zi, zt, -0.1, 1.0), ValidationError);
  }

  TEST_CASE("fuse is bilinear and jointly homogeneous") {
    const RowVector a = test::random_matrix(1, 4, 1), b = test::random_matrix(1, 4, 2), c = test::random_matrix(1, 4, 3);
    CHECK((fuse(a + c, b, 0.3, 0.7) - fuse(a, b, 0.3, 0.7) - fuse(c, b, 0.3, 0.0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fuse(a, b, 0.6, 1.4) - 2.0 * fuse(a, b, 0.3, 0.7)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("embed_context: tower and provider paths") {
    DualTower towers(tower_config(), 9);
    const auto poi = counts_of({{"Residence", 4}});
    const RowVector tile = test::random_matrix(1, 192, 6);
    const auto e = embed_context(poi, tile, towers, {1.0, 0.0});
    CHECK(e.z_env == e.z_image);
    CHECK(e.z_env.size() == 32);

    const ProvidedVectors pv{test::random_matrix(1, 32, 7), test::random_matrix(1, 32, 8)};
    const auto p = embed_context(pv, 32, {0.5, 0.5});
    CHECK(p.z_image == pv.z_image);
    CHECK(p.z_text == pv.z_text);
    CHECK(p.z_env == fuse(pv.z_image, pv.z_text, 0.5, 0.5));
    const auto t = embed_context(poi, tile, towers, {0.5, 0.5});
    CHECK(t.z_env.size() == p.z_env.size());
    CHECK(t.z_env != p.z_env);
    CHECK_THROWS_AS(embed_context(ProvidedVectors{RowVector::Zero(31), RowVector::Zero(32)}, 32, {}), ShapeError);

    // Batched path matches the single path.
    std::vector<Eigen::RowVectorXi> pois{poi, counts_of({{"Hotel", 1}})};
    Matrix tiles(2, 192);
    tiles.row(0) = tile;
    tiles.row(1) = test::random_matrix(1, 192, 10);
    const Matrix batched = embed_contexts(pois, tiles, towers, {0.5, 0.5});
    CHECK((batched.row(0) - t.z_env).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("embedding provider file round trip") {
    test::TempDir dir("provider");
    EmbeddingProvider p(4);
    p.insert("u1", 3, {test::random_matrix(1, 4, 1), test::random_matrix(1, 4, 2)});
    p.insert("u2", 0, {test::random_matrix(1, 4, 3), test::random_matrix(1, 4, 4)});
    p.save(dir / "emb.json");
    CHECK(std::filesystem::exists(dir / "emb.bin"));
    const auto q = EmbeddingProvider::load(dir / "emb.json");
    CHECK(q.size() == 2);
    CHECK(q.embed_dim() == 4);
    const auto* v = q.find("u1", 3);
    REQUIRE(v != nullptr);
    CHECK((v->z_image - p.find("u1", 3)->z_image).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(q.find("u1", 4) == nullptr);
    CHECK_THROWS_AS(p.insert("u3", 0, {RowVector::Zero(3), RowVector::Zero(4)}), ShapeError);
  }

  TEST_CASE("train_contrastive lowers held-out InfoNCE and separates profiles") {
    const auto train = profile_pairs(1, 25, 8);  // 200 pairs from four profiles
    const auto held = profile_pairs(2, 4, 8);
    REQUIRE(train.pairs.size() == 200);
    DualTower towers(tower_config(), 4);
    const double before = nce_with_towers(towers, held.pairs);
    const auto log = train_contrastive(towers, train.pairs, {10, 16, 1e-3, 5});
    CHECK(log.epoch_loss.size() == 10);
    CHECK(nce_with_towers(towers, held.pairs) < before);

    // Text embeddings: same-profile pairs are more similar than cross-profile pairs.
    const auto [zi, zt] = encode_pairs(towers, held.pairs);
    double same = 0.0, cross = 0.0;
    int ns = 0, nc = 0;
    for (std::size_t i = 0; i < held.pairs.size(); ++i) {
      for (std::size_t j = i + 1; j < held.pairs.size(); ++j) {
        const double cs = zt.row(static_cast<Index>(i)).dot(zt.row(static_cast<Index>(j)));
        if (held.profile[i] == held.profile[j]) {
          same += cs;
          ++ns;
        } else {
          cross += cs;
          ++nc;
        }
      }
    }
    CHECK(cross / nc < same / ns);
  }

  TEST_CASE("train_contrastive is deterministic and validates its inputs") {
    const auto train = profile_pairs(3, 10, 4);
    DualTower a(tower_config(), 1), b(tower_config(), 1);
    train_contrastive(a, train.pairs, {2, 8, 1e-3, 9});
    train_contrastive(b, train.pairs, {2, 8, 1e-3, 9});
    for (std::size_t i = 0; i < a.parameters().entries().size(); ++i) {
      CHECK(test::bit_equal(a.parameters().entries()[i].var.value(), b.parameters().entries()[i].var.value()));
    }
    std::vector<ContrastivePair> few(train.pairs.begin(), train.pairs.begin() + 5);
    CHECK_THROWS_AS(train_contrastive(a, few, {1, 8, 1e-3, 0}), ValidationError);
    CHECK_THROWS_AS(train_contrastive(a, train.pairs, {1, 1, 1e-3, 0}), ValidationError);
  }

  TEST_CASE("retrieval_top1 counts matched argmax rows") {
    const Matrix eye = Matrix::Identity(3, 3);
    CHECK(retrieval_top1(eye, eye) == 1.0);
    Matrix swapped = eye;
    swapped.row(0).swap(swapped.row(1));
    CHECK(retrieval_top1(eye, swapped) == doctest::Approx(1.0 / 3.0));
  }
}
