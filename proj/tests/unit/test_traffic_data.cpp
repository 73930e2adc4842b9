#include "test_util.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/files.hpp"
#include "lsdm/data/catalog.hpp"
#include "lsdm/data/io.hpp"
#include "lsdm/data/normalizer.hpp"
#include "lsdm/data/synthetic.hpp"
#include "lsdm/data/windows.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

using namespace lsdm;
using namespace lsdm::data;

namespace {

SyntheticConfig small_config(int users, int weeks, std::uint64_t seed = 7) {
  auto c = SyntheticConfig::defaults();
  c.num_users = users;
  c.weeks = weeks;
  c.seed = seed;
  return c;
}

std::string exception_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// Rewrites one line of a text file (0-based line index).
void replace_line(const std::filesystem::path& p, std::size_t index, const std::string& line) {
  std::istringstream in(read_text_file(p));
  std::string out, cur;
  for (std::size_t i = 0; std::getline(in, cur); ++i) out += (i == index ? line : cur) + "\n";
  write_text_file(p, out);
}

void drop_last_line(const std::filesystem::path& p) {
  std::istringstream in(read_text_file(p));
  std::vector<std::string> lines;
  for (std::string cur; std::getline(in, cur);) lines.push_back(cur);
  lines.pop_back();
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  write_text_file(p, out);
}

}  // namespace

TEST_SUITE("traffic_data") {
  TEST_CASE("catalogs have the documented sizes and contiguous ids") {
    const auto& s = ServiceCatalog::standard();
    CHECK(s.size() == 10);
    for (int i = 0; i < s.size(); ++i) CHECK(s.entries()[static_cast<std::size_t>(i)].id == i + 1);
    std::set<std::string> names;
    for (const auto& e : s.entries()) names.insert(e.name);
    CHECK(names.size() == 10);

    const auto& p = PoiCatalog::standard();
    CHECK(p.size() == 17);
    for (int i = 0; i < p.size(); ++i) CHECK(p.entries()[static_cast<std::size_t>(i)].id == i + 1);
    CHECK_THROWS_AS(ServiceCatalog({{1, "a", ""}, {2, "b", ""}}), ValidationError);
  }

  TEST_CASE("load_dataset reads a one-user week written by write_dataset") {
    test::TempDir dir("load");
    const auto ds = generate_synthetic(small_config(1, 1));
    const auto manifest = write_dataset(ds, dir.path());
    const auto loaded = load_dataset(manifest);
    REQUIRE(loaded.users.size() == 1);
    const auto& u = loaded.users[0];
    CHECK(u.time_points() == 168);
    CHECK(u.traffic.values.cols() == 10);
    CHECK(u.poi.counts.cols() == 17);
    CHECK(u.images.tiles.rows() == 168);
    CHECK(loaded.tile_shape == TileShape{8, 8, 3});
    // Values are written with round-trip precision.
    CHECK(test::bit_equal(u.traffic.values, ds.users[0].traffic.values));
    CHECK(u.poi.counts == ds.users[0].poi.counts);
  }

  TEST_CASE("load_dataset rejects a negative traffic value with the row address") {
    test::TempDir dir("neg");
    const auto manifest = write_dataset(generate_synthetic(small_config(1, 1)), dir.path());
    const auto csv = dir / "traffic_u000.csv";
    std::string row = "u000,5";
    for (int s = 0; s < 10; ++s) row += s == 3 ? ",-1.0" : ",1.0";
    replace_line(csv, 6, row);  // header is line 1, t=5 is line 7
    const std::string msg = exception_text([&] { load_dataset(manifest); });
    CHECK(msg.find("traffic_u000.csv:7") != std::string::npos);
    CHECK(msg.find("-1.0") != std::string::npos);
    CHECK_THROWS_AS(load_dataset(manifest), ValidationError);
  }

  TEST_CASE("load_dataset names both counts when POI rows are missing") {
    test::TempDir dir("align");
    const auto manifest = write_dataset(generate_synthetic(small_config(1, 1)), dir.path());
    drop_last_line(dir / "poi_u000.csv");
    const std::string msg = exception_text([&] { load_dataset(manifest); });
    CHECK(msg.find("167") != std::string::npos);
    CHECK(msg.find("168") != std::string::npos);
  }

  TEST_CASE("load_dataset error cases") {
    test::TempDir dir("errs");
    const auto manifest = write_dataset(generate_synthetic(small_config(1, 1)), dir.path());
    SUBCASE("missing manifest") { CHECK_THROWS_AS(load_dataset(dir / "nope.json"), IoError); }
    SUBCASE("missing referenced file") {
      std::filesystem::remove(dir / "tiles_u000.bin");
      CHECK_THROWS_AS(load_dataset(manifest), IoError);
    }
    SUBCASE("non-integer POI count") {
      std::string row = "u000,0";
      for (int p = 0; p < 17; ++p) row += p == 0 ? ",2.5" : ",1";
      replace_line(dir / "poi_u000.csv", 1, row);
      CHECK(exception_text([&] { load_dataset(manifest); }).find("not an integer") != std::string::npos);
    }
    SUBCASE("malformed row") {
      replace_line(dir / "traffic_u000.csv", 2, "u000,1,2,3");
      CHECK(exception_text([&] { load_dataset(manifest); }).find("malformed row") != std::string::npos);
    }
    SUBCASE("truncated tile file") {
      auto bytes = read_binary_file(dir / "tiles_u000.bin");
      bytes.pop_back();
      write_binary_file(dir / "tiles_u000.bin", bytes);
      CHECK_THROWS_AS(load_dataset(manifest), ValidationError);
    }
  }

  TEST_CASE("tile container header layout") {
    test::TempDir dir("tiles");
    ImageFeatureSeries s{"x", {2, 1, 1}, Matrix(3, 2)};
    s.tiles << 1, 2, 3, 4, 5, 6;
    write_tiles(s, dir / "t.bin");
    const auto bytes = read_binary_file(dir / "t.bin");
    REQUIRE(bytes.size() == 16 + 3 * 2 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LSDT");
    CHECK(bytes[4] == 3);   // M
    CHECK(bytes[8] == 2);   // h*w*c
    CHECK(bytes[12] == 0);
    const auto back = read_tiles(dir / "t.bin", {2, 1, 1});
    CHECK(back.tiles == s.tiles);
  }

  TEST_CASE("loading in parallel gives the same dataset") {
    test::TempDir dir("par");
    const auto ds = generate_synthetic(small_config(5, 1));
    const auto manifest = write_dataset(ds, dir.path());
    ::setenv("LSDM_NUM_WORKERS", "3", 1);
    const auto par = load_dataset(manifest);
    ::setenv("LSDM_NUM_WORKERS", "0", 1);
    CHECK_THROWS_AS(configured_workers(), ValidationError);
    ::unsetenv("LSDM_NUM_WORKERS");
    const auto seq = load_dataset(manifest);
    REQUIRE(par.users.size() == 5);
    for (std::size_t u = 0; u < 5; ++u) {
      CHECK(par.users[u].traffic.user_id == seq.users[u].traffic.user_id);
      CHECK(test::bit_equal(par.users[u].traffic.values, seq.users[u].traffic.values));
    }
  }

  TEST_CASE("normalizer: all-zero service is constant and maps to zero") {
    auto ds = generate_synthetic(small_config(2, 1));
    for (auto& u : ds.users) u.traffic.values.col(4).setZero();
    const auto n = Normalizer::fit(ds);
    CHECK(n.stats()[4].is_constant);
    CHECK(n.stats()[4].mean == 0.0);
    CHECK_FALSE(n.stats()[0].is_constant);
    const Matrix z = n.apply(ds.users[0].traffic.values);
    CHECK(z.col(4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(n.invert(z).col(4).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("normalizer: round trip within 1e-6 relative error") {
    const auto ds = generate_synthetic(small_config(2, 1));
    const auto n = Normalizer::fit(ds);
    Rng rng(3);
    std::uniform_real_distribution<double> mag(-3.0, 8.0);
    Matrix x(200, 10);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = std::pow(10.0, mag(rng));
    x(0, 0) = 0.0;
    const Matrix back = n.invert(n.apply(x));
    for (Index i = 0; i < x.size(); ++i) {
      const double a = x.data()[i], b = back.data()[i];
      CHECK(std::abs(a - b) <= 1e-6 * std::abs(a));
    }
  }

  TEST_CASE("normalizer: value 0 maps to (0 - mean)/std, deterministically") {
    const auto ds = generate_synthetic(small_config(2, 1));
    const auto n1 = Normalizer::fit(ds);
    const auto n2 = Normalizer::fit(ds);
    const Matrix z1 = n1.apply(Matrix::Zero(1, 10));
    const Matrix z2 = n2.apply(Matrix::Zero(1, 10));
    CHECK(test::bit_equal(z1, z2));
    for (int s = 0; s < 10; ++s) {
      const auto& st = n1.stats()[static_cast<std::size_t>(s)];
      CHECK(z1(0, s) == doctest::Approx((0.0 - st.mean) / st.std).epsilon(1e-12));
    }
  }

  TEST_CASE("normalizer: apply/invert contracts") {
    auto ds = generate_synthetic(small_config(1, 1));
    for (auto& u : ds.users) u.traffic.values.setZero();
    const auto zero_fit = Normalizer::fit(ds);
    CHECK(zero_fit.apply(Matrix::Zero(5, 10)).cwiseAbs().maxCoeff() == 0.0);

    const auto n = Normalizer::fit(generate_synthetic(small_config(1, 1)));
    Matrix low = Matrix::Constant(1, 10, -1e6);
    CHECK(n.invert(low).minCoeff() == 0.0);
    Matrix bad = Matrix::Zero(1, 10);
    bad(0, 2) = std::nan("");
    CHECK_THROWS_AS((void)n.apply(bad), ValidationError);
    CHECK_THROWS_AS((void)n.invert(bad), ValidationError);
    bad(0, 2) = -1.0;
    CHECK_THROWS_AS((void)n.apply(bad), ValidationError);
    CHECK_THROWS_AS(Normalizer::fit(Dataset{}), ValidationError);
  }

  TEST_CASE("make_windows counts match brute-force enumeration") {
    const auto ds = generate_synthetic(small_config(2, 1));
    const auto n = Normalizer::fit(ds);
    auto brute = [&](Index h, Index len) {
      Index count = 0;
      for (const auto& u : ds.users) {
        for (Index t = 0; t < u.time_points(); ++t) {
          bool ok = t - h >= 0 && t + len <= u.time_points();
          count += ok ? 1 : 0;
        }
      }
      return count;
    };
    CHECK(make_windows(ds, n, 24, 1).size() == 2 * 144);
    CHECK(static_cast<Index>(make_windows(ds, n, 24, 1).size()) == brute(24, 1));
    CHECK(make_windows(ds, n, 24, 2).size() == 2 * 143);
    CHECK(static_cast<Index>(make_windows(ds, n, 24, 2).size()) == brute(24, 2));
    for (Index h : {1, 5, 100, 167}) {
      for (Index len : {1, 3}) {
        if (brute(h, len) == 0) continue;
        CHECK(static_cast<Index>(make_windows(ds, n, h, len).size()) == brute(h, len));
      }
    }
    CHECK(window_count(168, 24, 1) == 144);
    CHECK_THROWS_AS(make_windows(ds, n, 168, 1), ValidationError);
  }

  TEST_CASE("windows hold contiguous non-overlapping history and target with target-time context") {
    const auto ds = generate_synthetic(small_config(1, 1));
    const auto n = Normalizer::fit(ds);
    const auto ws = make_windows(ds, n, 24, 3);
    const auto& w = ws[10];
    CHECK(w.target_index == 34);
    const Matrix& raw = ds.users[0].traffic.values;
    CHECK(test::bit_equal(w.history, n.apply(raw.middleRows(10, 24))));
    CHECK(test::bit_equal(w.target, n.apply(raw.middleRows(34, 3))));
    CHECK(w.poi_at_target == ds.users[0].poi.counts.row(34));
    CHECK(w.tile_at_target == ds.users[0].images.tiles.row(34));
  }

  TEST_CASE("generate_synthetic is a pure function of its config") {
    const auto c = small_config(3, 1, 11);
    const auto a = generate_synthetic(c);
    const auto b = generate_synthetic(c);
    for (std::size_t u = 0; u < 3; ++u) {
      CHECK(test::bit_equal(a.users[u].traffic.values, b.users[u].traffic.values));
      CHECK(a.users[u].poi.counts == b.users[u].poi.counts);
      CHECK(test::bit_equal(a.users[u].images.tiles, b.users[u].images.tiles));
    }
    auto c2 = c;
    c2.seed = 12;
    CHECK_FALSE(test::bit_equal(a.users[0].traffic.values, generate_synthetic(c2).users[0].traffic.values));
  }

  TEST_CASE("generated traffic is non-negative and the triple is aligned") {
    auto c = small_config(4, 1);
    c.noise_level = 2.0;  // large noise exercises the clip
    const auto ds = generate_synthetic(c);
    validate(ds);
    for (const auto& u : ds.users) {
      CHECK(u.traffic.values.minCoeff() >= 0.0);
      CHECK(u.poi.counts.rows() == u.time_points());
      CHECK(u.images.tiles.rows() == u.time_points());
    }
  }

  TEST_CASE("residential users carry a larger entertainment share than business users") {
    auto c = small_config(16, 4, 5);
    const auto truth = generate_synthetic_with_truth(c);
    const int ent = ServiceCatalog::standard().index_of("Entertainment");
    double res = 0.0, bus = 0.0;
    int nres = 0, nbus = 0;
    for (std::size_t u = 0; u < truth.dataset.users.size(); ++u) {
      const Matrix& v = truth.dataset.users[u].traffic.values;
      const double share = v.col(ent).sum() / v.sum();
      if (truth.truth.profile[u] == "residential") {
        res += share;
        ++nres;
      } else if (truth.truth.profile[u] == "business") {
        bus += share;
        ++nbus;
      }
    }
    REQUIRE(nres > 0);
    REQUIRE(nbus > 0);
    CHECK(res / nres > bus / nbus);
  }

  TEST_CASE("per-user service share converges to the preference weighted by diurnal mass") {
    auto c = small_config(8, 8, 21);
    c.visit_rate = 0.0;  // static per-user model
    const auto truth = generate_synthetic_with_truth(c);
    const RowVector mass = c.diurnal_profiles.rowwise().sum().transpose();
    for (std::size_t u = 0; u < truth.dataset.users.size(); ++u) {
      const Matrix& v = truth.dataset.users[u].traffic.values;
      const RowVector empirical = v.colwise().sum() / v.sum();
      RowVector expected = truth.truth.preference[u].array() * mass.array();
      expected /= expected.sum();
      for (int s = 0; s < 10; ++s) CHECK(std::abs(empirical(s) - expected(s)) <= 0.10 * expected(s));
    }
  }

  TEST_CASE("visits switch the POI context and record the location") {
    auto c = small_config(4, 2, 3);
    c.visit_rate = 0.2;
    const auto truth = generate_synthetic_with_truth(c);
    int away = 0;
    for (std::size_t u = 0; u < 4; ++u) {
      for (int loc : truth.truth.location[u]) away += loc != static_cast<int>(u % 4) ? 1 : 0;
    }
    CHECK(away > 0);
  }

  TEST_CASE("synthetic config validation") {
    auto c = SyntheticConfig::defaults();
    c.num_users = 0;
    CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
    c = SyntheticConfig::defaults();
    c.weeks = 0;
    CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
    c = SyntheticConfig::defaults();
    c.dirichlet_concentration[0] = 0.0;
    CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
    c = SyntheticConfig::defaults();
    c.poi_profile_library["business"][0] = -1.0;
    CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
  }
}
