#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qsub/dictionary.h"
#include "qsub/error.h"
#include "qsub/signal_model.h"
#include "support.h"

using namespace qsub;

namespace {

SequenceTiming tiny_timing()
{
  SequenceTiming t;
  t.tr_ms = 1000.0;
  t.etl = 1;
  t.esp_ms = 5.0;
  t.inv_delay_ms = {100.0, 200.0, 300.0, 400.0};
  return t;
}

double rel_to(double a, double b) { return std::abs(a - b) / std::abs(b); }

} // namespace

TEST_CASE("schedule layout")
{
  SequenceTiming t;
  t.esp_ms = 5.9;
  auto const s = build_schedule(t);
  CHECK(s.readout_duration_ms() == doctest::Approx(749.3));
  CHECK(s.readout_start_ms[0] == t.te_t2prep_ms);
  CHECK(s.inversion_ms == doctest::Approx(t.te_t2prep_ms + 749.3));
  for (int k = 1; k < kReadouts; ++k) {
    CHECK(s.readout_start_ms[k] == doctest::Approx(s.inversion_ms + t.inv_delay_ms[k - 1]));
  }
  CHECK_NOTHROW(build_schedule(tiny_timing()));
  auto bad = t;
  bad.inv_delay_ms = {100.0, 150.0, 1900.0, 2800.0};
  CHECK_THROWS_AS(build_schedule(bad), InvalidInput);
  auto late = t;
  late.tr_ms = 3000.0;
  CHECK_THROWS_AS(build_schedule(late), InvalidInput);
}

TEST_CASE("elementary relaxation events")
{
  CHECK(relax_t1(0.3, 1.0, 0.0, 800.0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(relax_t1(0.0, 1.0, 700.0 * std::log(2.0), 700.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(relax_t1(-1.0, 1.0, 1e6, 100.0) - 1.0) < 1e-12);
  for (double m : {-1.0, 0.2, 1.7}) {
    for (double dt : {0.0, 3.0, 300.0}) {
      double const r = relax_t1(m, 1.0, dt, 500.0);
      CHECK(r >= std::min(m, 1.0) - 1e-15);
      CHECK(r <= std::max(m, 1.0) + 1e-15);
    }
  }
  auto const z = ernst_saturation(1000.0, 5.8, 0.0);
  CHECK(z.m0_star_factor == doctest::Approx(1.0));
  CHECK(z.t1_star_ms == doctest::Approx(1000.0));
  double const e = std::exp(-5.8 / 1000.0);
  CHECK(ernst_saturation(1000.0, 5.8, std::numbers::pi / 2).m0_star_factor == doctest::Approx(1.0 - e));
  double const a = 4.0 * std::numbers::pi / 180.0;
  auto const s4 = ernst_saturation(1000.0, 5.8, a);
  CHECK(s4.m0_star_factor == doctest::Approx((1.0 - e) / (1.0 - std::cos(a) * e)).epsilon(1e-14));
  CHECK(s4.t1_star_ms == doctest::Approx(s4.m0_star_factor * 1000.0).epsilon(1e-14));

  CHECK(apply_t2prep(1.0, 0.0, 50.0) == 1.0);
  CHECK(apply_t2prep(1.0, 70.0, 70.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(apply_t2prep(0.5, 100.0, 50.0) == doctest::Approx(0.5 * std::exp(-2.0)));
  CHECK(apply_inversion(0.8, 1.0) == -0.8);
  CHECK(apply_inversion(0.8, 0.8) == doctest::Approx(-0.64));
  CHECK(apply_inversion(0.0, 0.7) == 0.0);
}

TEST_CASE("evolution matches the event-by-event reference")
{
  // frozen from tests/oracles/qalas_oracle.py
  struct Golden
  {
    int i;
    double v;
  };
  Golden const golden[] = {
      {0, 0.01528715867252569},    {1, 0.015564805906402308},  {63, 0.02899277457290333},
      {126, 0.03715392752993724},  {127, -0.019687473659573775}, {200, 0.011405519455025768},
      {254, 0.031681567664032295}, {381, 0.047023141049084796}, {500, 0.04836159057598559},
      {508, 0.05160496441709833},  {634, 0.05003124857611743},
  };
  auto const s = build_schedule(SequenceTiming{});
  auto const e = simulate_evolution({1000.0, 80.0, 1.0, 1.0, 0.8}, s);
  REQUIRE(e.values.size() == 635);
  CHECK(e.blocks_used == 3);
  for (auto const &g : golden) {
    CAPTURE(g.i);
    CHECK(rel_to(e.values[g.i], g.v) < 1e-10);
  }
  auto const fp = extract_five_point(e, s);
  auto const idx = five_point_indices(127);
  CHECK(idx == std::array<int, 5>{0, 127, 254, 381, 508});
  for (int k = 0; k < kReadouts; ++k) {
    CHECK(fp.values[k] == e.values[idx[k]]);
  }
}

TEST_CASE("evolution properties")
{
  auto const s = build_schedule(SequenceTiming{});
  TissueParams p{1200.0, 90.0, 1.0, 1.1, 0.9};
  auto const e1 = simulate_evolution(p, s);
  p.pd = 2.0;
  auto const e2 = simulate_evolution(p, s);
  for (size_t i = 0; i < e1.values.size(); ++i) {
    CHECK(e2.values[i] == doctest::Approx(2.0 * e1.values[i]).epsilon(1e-13));
  }

  p.pd = 0.0;
  for (double v : simulate_evolution(p, s).values) {
    CHECK(v == 0.0);
  }
  auto flat = SequenceTiming{};
  flat.flip_deg = 0.0;
  for (double v : simulate_evolution({1000.0, 80.0, 1.0, 1.0, 0.8}, build_schedule(flat)).values) {
    CHECK(v == 0.0);
  }

  // no inversion, no preparation and no dead time: the signal never goes negative
  SequenceTiming packed = tiny_timing();
  packed.te_t2prep_ms = 0.0;
  packed.inv_delay_ms = {0.0, 5.0, 10.0, 15.0};
  packed.tr_ms = 25.0;
  for (double v : simulate_evolution({900.0, 60.0, 1.0, 1.0, 0.0}, build_schedule(packed)).values) {
    CHECK(v >= 0.0);
  }

  // running further blocks barely moves the settled evolution
  TissueParams const slow{1500.0, 100.0, 1.0, 1.0, 0.8};
  auto const base = simulate_evolution(slow, s);
  auto const tight = simulate_evolution(slow, s, {1e-12, 40});
  CHECK(tight.blocks_used > base.blocks_used);
  double num = 0.0;
  double den = 0.0;
  for (size_t i = 0; i < base.values.size(); ++i) {
    num += (tight.values[i] - base.values[i]) * (tight.values[i] - base.values[i]);
    den += base.values[i] * base.values[i];
  }
  CHECK(std::sqrt(num / den) < 10 * 1e-6);

  SteadyStateOptions starved{1e-6, 1};
  CHECK_THROWS_AS(simulate_evolution({1500.0, 100.0, 1.0, 1.0, 0.8}, s, starved), NumericFailure);
  CHECK_THROWS_AS(simulate_evolution({-1.0, 100.0, 1.0, 1.0, 0.8}, s), InvalidInput);
  CHECK_THROWS_AS(simulate_evolution({1000.0, 100.0, 1.0, 1.0, 1.2}, s), InvalidInput);
}

TEST_CASE("five-point extraction with single-echo readouts is the identity")
{
  auto const s = build_schedule(tiny_timing());
  auto const e = simulate_evolution({800.0, 70.0, 1.0, 1.0, 1.0}, s);
  auto const fp = extract_five_point(e, s);
  for (int k = 0; k < kReadouts; ++k) {
    CHECK(fp.values[k] == e.values[k]);
  }
}
