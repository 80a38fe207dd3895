#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "qsub/config.h"
#include "qsub/container.h"
#include "qsub/error.h"
#include "qsub/phantom.h"
#include "support.h"

using namespace qsub;
namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const &name)
{
  auto const dir = fs::temp_directory_path() / "qsub_unit";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(fs::path const &p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("NIST-like phantom")
{
  Dims const d{64, 64};
  auto const p = make_nist_like(d);
  std::set<int> labels(p.labels.begin(), p.labels.end());
  CHECK(labels == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  REQUIRE(p.tissues.size() == 9);
  CHECK(p.tissues.back().name == "fill");
  for (int l = 1; l <= 8; ++l) {
    int n = 0;
    for (int q = 0; q < d.size(); ++q) {
      if (p.labels[q] == l) {
        ++n;
        CHECK(p.t1[q] == p.tissues[l - 1].t1_ms);
        CHECK(p.t2[q] == p.tissues[l - 1].t2_ms);
      }
    }
    CHECK(n > 10);
  }
  CHECK(p.tissues[0].t1_ms == doctest::Approx(600.0));
  CHECK(p.tissues[7].t1_ms == doctest::Approx(2500.0));
  CHECK(p.tissues[0].t2_ms == doctest::Approx(40.0));
  CHECK(p.tissues[7].t2_ms == doctest::Approx(350.0));
  for (int q = 0; q < d.size(); ++q) {
    CHECK((p.pd[q] > 0.0) == (p.labels[q] > 0));
    CHECK(p.b1[q] >= 0.85 - 1e-12);
    CHECK(p.b1[q] <= 1.15 + 1e-12);
  }

  NistOptions one;
  one.spheres = {{31.5, 31.5, 200.0, 1000.0, 80.0, 1.0}};
  one.disc_fraction = 1.0;
  one.b1.flat = true;
  CHECK_THROWS_AS(make_nist_like(d, one), InvalidInput);
  NistOptions outside;
  outside.spheres = {{70.0, 10.0, 3.0, 1000.0, 80.0, 1.0}};
  CHECK_THROWS_AS(make_nist_like(d, outside), InvalidInput);
  NistOptions overlap;
  overlap.spheres = {{30.0, 30.0, 5.0, 1000.0, 80.0, 1.0}, {33.0, 30.0, 5.0, 900.0, 60.0, 1.0}};
  CHECK_THROWS_AS(make_nist_like(d, overlap), InvalidInput);

  // one sphere covering the disc: uniform maps inside the object
  NistOptions cover;
  cover.spheres = {{16.0, 16.0, 13.0, 1000.0, 80.0, 1.0}};
  cover.b1.flat = true;
  cover.disc_fraction = 0.85;
  auto const c = make_nist_like({32, 32}, cover);
  for (int q = 0; q < 32 * 32; ++q) {
    if (c.labels[q] == 1) {
      CHECK(c.t1[q] == 1000.0);
      CHECK(c.b1[q] == 1.0);
    }
  }
}

TEST_CASE("brain-like phantom")
{
  Dims const d{64, 64};
  auto const a = make_brain_like(d, 3);
  auto const b = make_brain_like(d, 3);
  CHECK(a.labels == b.labels);
  CHECK(a.t1 == b.t1);
  std::set<int> labels(a.labels.begin(), a.labels.end());
  CHECK(labels == std::set<int>{0, 1, 2, 3});
  auto const grid = build_grid(paper_grid_spec());
  for (int q = 0; q < d.size(); ++q) {
    if (a.labels[q] > 0) {
      CHECK(a.t1[q] <= grid.t1_values.back());
      CHECK(a.t2[q] <= grid.t2_values.back());
      CHECK(a.t2[q] >= grid.t2_values.front());
    }
  }
  CHECK(make_brain_like(d, 4).labels != a.labels);
}

TEST_CASE("snapping to the dictionary grid")
{
  auto p = make_nist_like({48, 48});
  auto const grid = build_grid(desk_grid_spec());
  snap_to_grid(p, grid, true);
  std::set<double> t1s(grid.t1_values.begin(), grid.t1_values.end());
  std::set<double> t2s(grid.t2_values.begin(), grid.t2_values.end());
  std::set<double> b1s(grid.b1_values.begin(), grid.b1_values.end());
  for (int q = 0; q < p.dims.size(); ++q) {
    if (p.labels[q] > 0) {
      CHECK(t1s.count(p.t1[q]) == 1);
      CHECK(t2s.count(p.t2[q]) == 1);
      CHECK(b1s.count(p.b1[q]) == 1);
    }
  }
}

TEST_CASE("closed-form contrasts")
{
  ContrastSpec se{ContrastKind::T2w, 1e9, 0.0, {}};
  CHECK(synth_signal(900.0, 80.0, 0.7, se) == doctest::Approx(0.7));
  ContrastSpec flair{ContrastKind::Flair, 1e9, 0.0, {4000.0 * std::log(2.0)}};
  CHECK(std::abs(synth_signal(4000.0, 450.0, 1.0, flair)) < 1e-12);

  // CSF nulled relative to white matter with a realistic FLAIR
  ContrastSpec clinical{ContrastKind::Flair, 9000.0, 100.0, {}};
  double const e = std::exp(-9000.0 / 4000.0);
  clinical.ti_ms = {-4000.0 * std::log((1.0 + e) / 2.0)};
  CHECK(synth_signal(4000.0, 450.0, 1.0, clinical) <= 0.01 * synth_signal(800.0, 70.0, 0.7, clinical));

  // double inversion nulling T1 = 4000 and 800 at TR 10000 (tests/oracles/dir_null_oracle.py)
  ContrastSpec dir{ContrastKind::Dir, 10000.0, 0.0, {2974.554951187817, 534.8588495692792}};
  CHECK(synth_signal(4000.0, 300.0, 1.0, dir) < 1e-12);
  CHECK(synth_signal(800.0, 70.0, 1.0, dir) < 1e-12);
  CHECK(synth_signal(1400.0, 90.0, 1.0, dir) > 0.05);

  for (auto kind : {ContrastKind::T1w, ContrastKind::T2w, ContrastKind::Flair, ContrastKind::Mprage, ContrastKind::Dir}) {
    ContrastSpec s{kind, 5000.0, 80.0, {2500.0, 400.0}};
    CHECK(parse_contrast_kind(to_string(kind)) == kind);
    double prev = -1.0;
    for (double pd : {0.0, 0.3, 0.6, 1.0}) {
      double const v = synth_signal(1100.0, 75.0, pd, s);
      CHECK(v >= 0.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
  CHECK_THROWS_AS(parse_contrast_kind("pdw"), InvalidInput);
  ContrastSpec bad{ContrastKind::Dir, 5000.0, 80.0, {2500.0}};
  CHECK_THROWS_AS(synth_contrast({1000.0}, {80.0}, {1.0}, bad), InvalidInput);
  auto const img = synth_contrast({1000.0, 0.0}, {80.0, 0.0}, {1.0, 0.0}, se);
  CHECK(img[1] == 0.0);
}

TEST_CASE("container round trip is bit exact")
{
  auto const x = test::random_image({5, 7}, 3, 11);
  auto const path = scratch("img.qsub").string();
  write_array(path, to_stored(x, {{"note", "x"}}));
  auto const a = read_array(path);
  CHECK(a.dtype == "c128");
  CHECK(a.shape == std::vector<std::int64_t>{5, 7, 3});
  CHECK(a.meta.at("note") == "x");
  auto const back = image_from_stored(a);
  CHECK(back.dims == x.dims);
  CHECK(std::memcmp(back.data.data(), x.data.data(), sizeof(Cx) * x.data.size()) == 0);

  Eigen::MatrixXd m = Eigen::MatrixXd::Random(4, 6);
  m(1, 2) = std::nextafter(1.0, 2.0);
  write_array(path, to_stored(m));
  CHECK(real_matrix_from_stored(read_array(path)) == m);

  // rewriting what was read gives the same bytes
  auto const copy = scratch("copy.qsub").string();
  write_array(copy, read_array(path));
  CHECK(slurp(copy) == slurp(path));
  auto const raw = slurp(path);
  CHECK(raw.substr(0, 8) == "QSUB0001");
}

TEST_CASE("container rejects malformed files")
{
  auto const path = scratch("bad.qsub");
  write_array(path.string(), make_real({3}, {1.0, 2.0, 3.0}));
  auto const good = slurp(path);

  auto put = [&](std::string const &bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
  };
  put("XSUB0001" + good.substr(8));
  CHECK_THROWS_AS(read_array(path.string()), FormatError);
  put(good.substr(0, good.size() - 4));
  CHECK_THROWS_AS(read_array(path.string()), FormatError);
  put(good.substr(0, 12));
  CHECK_THROWS_AS(read_array(path.string()), FormatError);
  auto header = good;
  auto const at = header.find("f64");
  REQUIRE(at != std::string::npos);
  header.replace(at, 3, "i32");
  put(header);
  CHECK_THROWS_AS(read_array(path.string()), FormatError);
  CHECK_THROWS_AS(read_array((fs::temp_directory_path() / "qsub_unit" / "missing.qsub").string()), FormatError);
  CHECK_THROWS_AS(make_real({2, 2}, {1.0}), InvalidInput);
}

TEST_CASE("configuration")
{
  auto const def = config_from_json(nlohmann::json::object());
  CHECK(def.basis.k == 4);
  CHECK(def.train.lr == doctest::Approx(5e-4));
  CHECK(def.train.mu == 0.5);
  CHECK(def.timing.etl == 127);

  auto j = to_json(def);
  auto const again = config_from_json(j);
  CHECK(to_json(again) == j);

  nlohmann::json unknown = {{"solver", {{"cg_iter", 5}}}};
  CHECK_THROWS_AS(config_from_json(unknown), InvalidInput);
  CHECK_THROWS_AS(config_from_json({{"colour", "red"}}), InvalidInput);
  CHECK_THROWS_AS(config_from_json({{"seed", "one"}}), InvalidInput);

  auto const path = scratch("cfg.json");
  {
    std::ofstream out(path);
    out << R"({"seed": 9, "phantom": {"ny": 32}, "train": {"epochs": 3}})";
  }
  auto const c = load_config(path.string());
  CHECK(c.seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.phantom.ny == 32);
  CHECK(c.train.epochs == 3);
  setenv("QSUB_SEED", "123", 1);
  auto const env = load_config(path.string());
  unsetenv("QSUB_SEED");
  CHECK(env.seed == 123);
  CHECK(env.train.seed == 123);

  {
    std::ofstream out(path);
    out << "{not json";
  }
  CHECK_THROWS_AS(load_config(path.string()), FormatError);
  CHECK_THROWS_AS(load_config((fs::temp_directory_path() / "qsub_unit" / "nope.json").string()), FormatError);

  auto const out = scratch("resolved.json");
  write_config(out.string(), c);
  CHECK(to_json(load_config(out.string())) == to_json(c));
}
