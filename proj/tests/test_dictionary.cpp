#include <doctest.h>

#include <cmath>
#include <complex>
#include <set>

#include "qsub/dictionary.h"
#include "qsub/error.h"
#include "support.h"

using namespace qsub;

namespace {

ParameterGrid small_grid()
{
  ParameterGrid g;
  g.t1_values = {400.0, 800.0, 1200.0, 2000.0};
  g.t2_values = {30.0, 60.0, 120.0};
  g.b1_values = {0.9, 1.0, 1.1};
  g.ie_values = {0.8};
  return g;
}

Dictionary const &small_dict()
{
  static Dictionary const d = build_dictionary(small_grid(), build_schedule(SequenceTiming{}), IeMode::fixed_at(0.8));
  return d;
}

Eigen::VectorXcd atom_signal(Dictionary const &d, int i, Cx scale)
{
  return d.atoms.row(i).transpose().cast<Cx>() * scale;
}

} // namespace

TEST_CASE("grid axis counts")
{
  auto const g = build_grid(paper_grid_spec());
  CHECK(g.t1_values.size() == 561);
  CHECK(g.t1_values[0] == 300.0);
  CHECK(g.t1_values[1] == 305.0);
  CHECK(g.t1_values.back() == doctest::Approx(5000.0));
  CHECK(g.b1_values.size() == 15);
  CHECK(g.ie_values.size() == 26);
  // 10..100 step 1, 102..200 step 2, 210..400 step 10, 420..500 step 20
  CHECK(g.t2_values.size() == 91 + 50 + 20 + 5);
  for (auto const *axis : {&g.t1_values, &g.t2_values, &g.b1_values, &g.ie_values}) {
    for (size_t i = 1; i < axis->size(); ++i) {
      CHECK((*axis)[i] > (*axis)[i - 1]);
    }
  }
  auto const desk = build_grid(desk_grid_spec());
  CHECK(desk.t1_values.size() == 113);
  CHECK(desk.t2_values.size() == 34);
  CHECK(desk.t1_values[1] - desk.t1_values[0] == doctest::Approx(25.0));

  GridSpec one;
  one.t1 = {{1000.0, 1000.0, 5.0}};
  one.t2 = {{80.0, 80.0, 1.0}};
  one.b1 = {{1.0, 1.0, 0.05}};
  one.ie = {{0.8, 0.8, 0.02}};
  auto const g1 = build_grid(one);
  CHECK(g1.size() == 1);
  auto const d1 = build_dictionary(g1, build_schedule(SequenceTiming{}));
  CHECK(d1.n_atoms() == 1);
  CHECK(d1.echoes() == 635);
}

TEST_CASE("dictionary rows are simulated evolutions")
{
  auto const &d = small_dict();
  CHECK(d.n_atoms() == 4 * 3 * 3);
  for (auto const &p : d.params) {
    CHECK(p.ie == 0.8);
  }
  for (int i : {0, 7, 20, 35}) {
    auto const e = simulate_evolution(d.params[i], d.schedule);
    for (int t = 0; t < d.echoes(); t += 50) {
      CHECK(d.atoms(i, t) == e.values[t]);
    }
  }
  // b1 slowest, t2 fastest
  CHECK(d.params[0].b1 == 0.9);
  CHECK(d.params[1].t2_ms == 60.0);
  CHECK(d.params[3].t1_ms == 800.0);
  CHECK(d.params[12].b1 == 1.0);

  auto full = small_grid();
  full.ie_values = {0.6, 0.8, 1.0};
  CHECK(build_dictionary(full, d.schedule).n_atoms() == 4 * 3 * 3 * 3);
  ParameterGrid empty;
  CHECK_THROWS_AS(build_dictionary(empty, d.schedule), InvalidInput);
}

TEST_CASE("basis is orthonormal and its error is monotone")
{
  auto const &d = small_dict();
  double prev = 100.0;
  CHECK(basis_error(d.atoms, Eigen::MatrixXd(d.echoes(), 0)) == doctest::Approx(100.0));
  for (int k = 1; k <= 6; ++k) {
    auto const b = compute_basis(d, {k, {}});
    REQUIRE(b.rank() == k);
    CHECK((b.phi.transpose() * b.phi - Eigen::MatrixXd::Identity(k, k)).norm() < 1e-10);
    double const err = basis_error(d, b);
    CHECK(err <= prev + 1e-12);
    CHECK(err == doctest::Approx(basis_error_from_spectrum(b.singular_values, k)).epsilon(1e-6));
    prev = err;
  }
  auto const complete = compute_basis(d, {d.n_atoms(), {}});
  CHECK(basis_error(d, complete) < 1e-6);

  auto const by_err = compute_basis(d, {{}, 1.0});
  CHECK(basis_error(d, by_err) <= 1.0);
  if (by_err.rank() > 1) {
    CHECK(basis_error(d, compute_basis(d, {by_err.rank() - 1, {}})) > 1.0);
  }
}

TEST_CASE("repeated atom is captured by one component")
{
  ParameterGrid g;
  g.t1_values = {900.0};
  g.t2_values = {70.0};
  g.b1_values = {1.0};
  g.ie_values = {0.8};
  auto d = build_dictionary(g, build_schedule(SequenceTiming{}));
  RowMatrix rep(3, d.echoes());
  rep.row(0) = d.atoms.row(0);
  rep.row(1) = 2.0 * d.atoms.row(0);
  rep.row(2) = -d.atoms.row(0);
  d.atoms = rep;
  d.params = {d.params[0], d.params[0], d.params[0]};
  auto const b = compute_basis(d, {1, {}});
  CHECK(basis_error(d, b) < 1e-10);
}

TEST_CASE("project and expand")
{
  auto const &d = small_dict();
  auto const b = compute_basis(d, {4, {}});
  Eigen::VectorXcd c = Eigen::VectorXcd::Random(4);
  auto const e = expand(c, b);
  CHECK((project(e, b) - c).norm() < 1e-10 * c.norm());
  CHECK((expand(project(e, b), b) - e).norm() < 1e-10 * e.norm());

  Eigen::VectorXcd r = Eigen::VectorXcd::Random(d.echoes());
  Eigen::VectorXcd perp = r - expand(project(r, b), b);
  CHECK(project(perp, b).norm() < 1e-10 * r.norm());
  CHECK(expand(project(r, b), b).norm() <= r.norm());
}

TEST_CASE("noiseless matching recovers every on-grid atom")
{
  auto const d = build_dictionary(build_grid(desk_grid_spec()) , build_schedule(SequenceTiming{}), IeMode::fixed_at(0.8));
  auto const b = compute_basis(d, {4, {}});
  auto const sub = DictionaryMatcher::subspace(d, b);
  auto const five = DictionaryMatcher::five_point(d);
  CHECK(five.length() == 5);
  auto const idx = five_point_indices(d.schedule.timing.etl);
  int sub_ok = 0;
  int five_ok = 0;
  for (int i = 0; i < d.n_atoms(); ++i) {
    auto const &p = d.params[i];
    auto const e = atom_signal(d, i, 1.0);
    auto const m = sub.match(project(e, b), p.b1);
    sub_ok += (m.t1_ms == p.t1_ms && m.t2_ms == p.t2_ms && std::abs(m.pd - Cx(1.0)) < 1e-9) ? 1 : 0;
    Eigen::VectorXcd s5(5);
    for (int k = 0; k < 5; ++k) {
      s5[k] = e[idx[k]];
    }
    auto const m5 = five.match(s5, p.b1);
    five_ok += (m5.t1_ms == p.t1_ms && m5.t2_ms == p.t2_ms) ? 1 : 0;
  }
  CHECK(sub_ok == d.n_atoms());
  CHECK(five_ok == d.n_atoms());
}

TEST_CASE("matching is invariant to complex scaling")
{
  auto const &d = small_dict();
  auto const b = compute_basis(d, {4, {}});
  auto const m = DictionaryMatcher::subspace(d, b);
  Cx const s = 3.0 * std::polar(1.0, 0.7);
  for (int i = 0; i < d.n_atoms(); ++i) {
    auto const a = m.match(project(atom_signal(d, i, 1.0), b), d.params[i].b1);
    auto const c = m.match(project(atom_signal(d, i, s), b), d.params[i].b1);
    CHECK(a.atom == i);
    CHECK(c.atom == i);
    CHECK(std::abs(c.pd - s * a.pd) < 1e-9);
    CHECK(c.score == doctest::Approx(a.score));
    CHECK(c.score <= 1.0 + 1e-12);
  }
  auto const z = m.match(Eigen::VectorXcd::Zero(4), 1.0);
  CHECK(z.background);
  CHECK(z.pd == Cx(0.0));
}

TEST_CASE("b1 is clamped and snapped to the grid")
{
  auto const &d = small_dict();
  auto const m = DictionaryMatcher::five_point(d);
  CHECK(m.snap_b1(0.2) == 0.9);
  CHECK(m.snap_b1(5.0) == 1.1);
  CHECK(m.snap_b1(1.04) == 1.0);
  CHECK(m.snap_b1(1.06) == 1.1);
  auto const idx = five_point_indices(d.schedule.timing.etl);
  Eigen::VectorXcd s5(5);
  int const i = 30; // a b1 = 1.1 atom
  for (int k = 0; k < 5; ++k) {
    s5[k] = d.atoms(i, idx[k]);
  }
  auto const r = m.match(s5, 1.3);
  CHECK(r.b1_used == 1.1);
  CHECK(r.atom == i);
}

TEST_CASE("off-grid parameters match a neighbour")
{
  ParameterGrid g;
  g.t1_values = {600.0, 800.0, 1000.0, 1200.0, 1400.0};
  g.t2_values = {40.0, 60.0, 80.0, 100.0};
  g.b1_values = {1.0};
  g.ie_values = {0.8};
  auto const d = build_dictionary(g, build_schedule(SequenceTiming{}), IeMode::fixed_at(0.8));
  auto const b = compute_basis(d, {4, {}});
  auto const m = DictionaryMatcher::subspace(d, b);
  for (double t1 : {700.0, 900.0, 1100.0, 1300.0}) {
    for (double t2 : {50.0, 70.0, 90.0}) {
      auto const e = simulate_evolution({t1, t2, 1.0, 1.0, 0.8}, d.schedule);
      Eigen::VectorXcd v = Eigen::Map<Eigen::VectorXd const>(e.values.data(), e.values.size()).cast<Cx>();
      auto const r = m.match(project(v, b), 1.0);
      CHECK(std::abs(r.t1_ms - t1) == doctest::Approx(100.0));
      CHECK(std::abs(r.t2_ms - t2) == doctest::Approx(10.0));
    }
  }
}

TEST_CASE("parallel map matching equals the serial reference")
{
  auto const &d = small_dict();
  auto const b = compute_basis(d, {4, {}});
  auto const m = DictionaryMatcher::subspace(d, b);
  Dims const dims{9, 7};
  Eigen::MatrixXcd sig(dims.size(), 4);
  RealMap b1(dims.size());
  for (int v = 0; v < dims.size(); ++v) {
    int const atom = (v * 7) % d.n_atoms();
    sig.row(v) = project(atom_signal(d, atom, std::polar(0.5 + v * 0.01, 0.1 * v)), b).transpose();
    b1[v] = d.params[atom].b1;
  }
  sig.row(3).setZero();
  auto const par = match_map(sig, dims, b1, m);
  auto const ser = match_map_serial(sig, dims, b1, m);
  CHECK(par.t1 == ser.t1);
  CHECK(par.t2 == ser.t2);
  CHECK(par.pd == ser.pd);
  CHECK(par.score == ser.score);
  CHECK(par.pd[3] == 0.0);
}
