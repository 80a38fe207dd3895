#include <doctest.h>

#include <cmath>
#include <numeric>

#include "golden.h"
#include "qsub/error.h"
#include "qsub/acquisition.h"
#include "qsub/evaluation.h"
#include "qsub/recon_classic.h"
#include "support.h"

using namespace qsub;
using namespace qsub::test;

namespace {

AcquisitionModel sense_model(Dims d, int coils, int ry, std::uint64_t seed)
{
  std::vector<Sample> s;
  for (int ky = 0; ky < d.ny; ky += ry) {
    for (int kz = 0; kz < d.nz; ++kz) {
      s.push_back({0, ky * d.nz + kz});
    }
  }
  return AcquisitionModel(Eigen::MatrixXd::Ones(1, 1), synth_coils(coils, d, seed), s, 1);
}

CoefficientImage cg_solve(AcquisitionModel const &m, KSpaceData const &y)
{
  SolverConfig cfg;
  cfg.max_iters = 200;
  cfg.tol = 1e-10;
  return recon_cg(y, m, cfg).x;
}

// Noise variance of the least-squares image, diag((A^H A)^-1), from the dense normal matrix.
Eigen::VectorXd ls_variance(AcquisitionModel const &m)
{
  int const n = m.dims().size() * m.rank();
  Eigen::MatrixXcd g(n, n);
  for (int j = 0; j < n; ++j) {
    CoefficientImage e(m.dims(), m.rank());
    e.data.data()[j] = 1.0;
    auto const col = normal_apply(m, e);
    g.col(j) = Eigen::Map<Eigen::VectorXcd const>(col.data.data(), n);
  }
  return g.inverse().diagonal().real();
}

} // namespace

TEST_CASE("RMSE")
{
  RealMap const ref{1.0, 2.0, 3.0, 4.0};
  CHECK(rmse_percent(ref, ref) == 0.0);
  RealMap up;
  for (double v : ref) {
    up.push_back(1.1 * v);
  }
  CHECK(rmse_percent(up, ref) == doctest::Approx(10.0).epsilon(1e-12));
  RealMap up_s;
  RealMap ref_s;
  for (size_t i = 0; i < ref.size(); ++i) {
    up_s.push_back(up[i] * 7.0);
    ref_s.push_back(ref[i] * 7.0);
  }
  CHECK(rmse_percent(up_s, ref_s) == doctest::Approx(rmse_percent(up, ref)).epsilon(1e-12));
  Mask const roi{1, 0, 0, 1};
  RealMap est{1.0, 99.0, -4.0, 5.0};
  CHECK(rmse_percent(est, ref, roi) == doctest::Approx(100.0 * 1.0 / std::sqrt(17.0)).epsilon(1e-12));
  CHECK_THROWS_AS(rmse_percent(est, RealMap{1.0}), InvalidInput);
}

TEST_CASE("regression")
{
  std::vector<double> const x{1.0, 2.0, 3.0, 4.0};
  auto const id = regression(x, x);
  CHECK(id.slope == doctest::Approx(1.0));
  CHECK(std::abs(id.intercept) < 1e-12);
  CHECK(id.r2 == doctest::Approx(1.0));
  std::vector<double> y;
  for (double v : x) {
    y.push_back(2.0 * v + 1.0);
  }
  auto const lin = regression(x, y);
  CHECK(lin.slope == doctest::Approx(2.0));
  CHECK(lin.intercept == doctest::Approx(1.0));
  CHECK(lin.r2 == doctest::Approx(1.0));

  // three points by hand: x = 0,1,2; y = 1,2,4 -> slope 1.5, intercept 5/6, r2 = 0.964285...
  auto const h = regression({0.0, 1.0, 2.0}, {1.0, 2.0, 4.0});
  CHECK(h.slope == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(h.intercept == doctest::Approx(5.0 / 6.0).epsilon(1e-14));
  CHECK(h.r2 == doctest::Approx(4.5 / (14.0 / 3.0)).epsilon(1e-14));

  auto const g = regression(golden::stats_x, golden::stats_y);
  CHECK(rel(g.slope, golden::slope) < 1e-12);
  CHECK(rel(g.intercept, golden::intercept) < 1e-12);
  CHECK(rel(g.r2, golden::r2) < 1e-12);
}

TEST_CASE("Bland-Altman")
{
  std::vector<double> const ref{100.0, 200.0, 350.0};
  auto const same = bland_altman(ref, ref);
  CHECK(same.bias_pct == 0.0);
  CHECK(same.loa_low == 0.0);
  CHECK(same.loa_high == 0.0);
  std::vector<double> low;
  for (double v : ref) {
    low.push_back(0.9 * v);
  }
  // 100 (ref - test) / ref: an estimate 10% low gives +10
  auto const b = bland_altman(ref, low);
  CHECK(b.bias_pct == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(std::abs(b.sd_pct) < 1e-12);

  auto const g = bland_altman(golden::stats_x, golden::stats_y);
  CHECK(rel(g.bias_pct, golden::ba_bias) < 1e-12);
  CHECK(rel(g.sd_pct, golden::ba_sd) < 1e-12);
  CHECK(rel(g.loa_low, golden::ba_low) < 1e-12);
  CHECK(rel(g.loa_high, golden::ba_high) < 1e-12);
  CHECK(g.n == 8);
}

TEST_CASE("coefficient of variation per ROI")
{
  auto const s = cov_roi(golden::cov_map, golden::cov_labels);
  REQUIRE(s.size() == 3);
  for (size_t i = 0; i < s.size(); ++i) {
    auto const &g = golden::cov_rows[i];
    CHECK(s[i].label == g.label);
    CHECK(s[i].n == g.n);
    CHECK(rel(s[i].mean, g.mean) < 1e-12);
    CHECK(rel(s[i].std, g.std) < 1e-12);
    CHECK(rel(s[i].cov_pct, g.cov) < 1e-12);
  }
  auto const flat = cov_roi({5.0, 5.0, 5.0}, {1, 1, 1});
  CHECK(flat[0].cov_pct == 0.0);
}

TEST_CASE("Wilcoxon signed-rank exact p")
{
  CHECK(wilcoxon_signed_rank({1, 2, 3, 4, 5, 6, 7, 8}) == doctest::Approx(2.0 / 256.0).epsilon(1e-15));
  CHECK(wilcoxon_signed_rank({1.5, -1.5, 2.5, -2.5}) == doctest::Approx(1.0));
  CHECK(wilcoxon_signed_rank({0.0, 3.0, 0.0}) == doctest::Approx(1.0));
  CHECK(rel(wilcoxon_signed_rank(golden::wilcoxon_diffs), golden::wilcoxon_diffs_p) < 1e-12);
  CHECK(rel(wilcoxon_signed_rank(golden::wilcoxon_tied), golden::wilcoxon_tied_p) < 1e-12);
  std::vector<double> scaled;
  for (double d : golden::wilcoxon_diffs) {
    scaled.push_back(d * 13.0);
  }
  CHECK(wilcoxon_signed_rank(scaled) == wilcoxon_signed_rank(golden::wilcoxon_diffs));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("g-factor of an identical model is one")
{
  auto const m = sense_model({12, 12}, 3, 1, 4);
  int const n = 400;
  auto const r = gfactor_mc(m, m, cg_solve, n, 9);
  REQUIRE(r.g.size() == 1);
  CHECK(r.ratio[0] == 1.0);
  CHECK(std::abs(r.g_avg[0] - 1.0) < 3.0 / std::sqrt(n));
  for (double g : r.g[0]) {
    CHECK(g >= 0.0);
  }
}

TEST_CASE("g-factor matches the closed-form SENSE value")
{
  Dims const d{16, 16};
  auto const accel = sense_model(d, 2, 2, 3);
  auto const full = sense_model(d, 2, 1, 3);
  auto const va = ls_variance(accel);
  auto const vf = ls_variance(full);
  RealMap exact(d.size());
  for (int q = 0; q < d.size(); ++q) {
    exact[q] = std::sqrt(va[q] / vf[q]) / std::sqrt(2.0);
  }
  auto const r = gfactor_mc(accel, full, cg_solve, 1000, 5);
  CHECK(r.ratio[0] == doctest::Approx(2.0));
  double avg = 0.0;
  double err = 0.0;
  for (int q = 0; q < d.size(); ++q) {
    avg += exact[q] / d.size();
    err += std::abs(r.g[0][q] - exact[q]) / exact[q] / d.size();
    CHECK(exact[q] >= 1.0 - 1e-9);
    CHECK(r.g[0][q] >= 0.9);
  }
  MESSAGE("mean relative deviation from the closed form: " << err);
  CHECK(err < 0.05);
  CHECK(std::abs(r.g_avg[0] - avg) / avg < 0.02);
}

TEST_CASE("more replicas shrink the spread of G_avg")
{
  Dims const d{12, 12};
  auto const accel = sense_model(d, 2, 2, 7);
  auto const full = sense_model(d, 2, 1, 7);
  auto spread = [&](int n) {
    std::vector<double> v;
    for (std::uint64_t s = 1; s <= 6; ++s) {
      v.push_back(gfactor_mc(accel, full, cg_solve, n, s).g_avg[0]);
    }
    double const mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) {
      ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / v.size());
  };
  CHECK(spread(400) < spread(25));
}

TEST_CASE("g-factor is deterministic and respects support")
{
  Dims const d{8, 8};
  auto const accel = sense_model(d, 2, 2, 1);
  auto const full = sense_model(d, 2, 1, 1);
  Mask support(d.size(), 0);
  support[10] = 1;
  support[20] = 1;
  auto const a = gfactor_mc(accel, full, cg_solve, 30, 2, {}, support);
  auto const b = gfactor_mc(accel, full, cg_solve, 30, 2, {}, support);
  CHECK(a.g[0] == b.g[0]);
  CHECK(a.g_max[0] == std::max(a.g[0][10], a.g[0][20]));
  CHECK(a.g_avg[0] == doctest::Approx(0.5 * (a.g[0][10] + a.g[0][20])));
}

namespace {

// Mean least-squares g of the subspace coefficients and of the per-contrast images,
// from dense diag((A^H A)^-1).
std::pair<double, double> dense_gfactors(bool vary)
{
  Dims const d{12, 12};
  int const etl = 4;
  auto const mask = make_poisson_mask(d, 2.0, 1.0, 1.0, 5, vary);
  SamplingMask full = mask;
  for (auto &g : full.contrast) {
    std::fill(g.begin(), g.end(), 1);
  }
  auto const phi = random_basis(kReadouts * etl, 3, 8);
  auto model = [&](SamplingMask const &m) {
    return AcquisitionModel(phi, synth_coils(4, d, 2), samples_from(m, assign_echo_ordering(m, etl)), etl);
  };
  auto const accel = model(mask);
  auto const ful = model(full);
  auto mean_g = [&](AcquisitionModel const &a, AcquisitionModel const &f, double r) {
    auto const va = ls_variance(a);
    auto const vf = ls_variance(f);
    double s = 0.0;
    for (Eigen::Index i = 0; i < va.size(); ++i) {
      s += std::sqrt(va[i] / vf[i] / r);
    }
    return s / va.size();
  };
  double const sub = mean_g(accel, ful, subspace_ratios(accel, ful)[0]);
  auto const cr = contrast_ratios(accel, ful);
  double conv = 0.0;
  for (int c = 0; c < kReadouts; ++c) {
    conv += mean_g(contrast_model(accel, c), contrast_model(ful, c), cr[c]) / kReadouts;
  }
  return {sub, conv};
}

} // namespace

TEST_CASE("least-squares g-factors: identical masks agree, complementary masks favour the subspace")
{
  auto const [same_sub, same_conv] = dense_gfactors(false);
  MESSAGE("identical: subspace " << same_sub << ", per contrast " << same_conv);
  CHECK(std::abs(same_sub - same_conv) / same_conv < 0.1);
  auto const [vary_sub, vary_conv] = dense_gfactors(true);
  MESSAGE("complementary: subspace " << vary_sub << ", per contrast " << vary_conv);
  CHECK(vary_sub < vary_conv);
}
