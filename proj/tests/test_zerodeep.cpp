#include <doctest.h>

#include <cmath>

#include "qsub/error.h"
#include "qsub/pipeline.h"
#include "qsub/recon_classic.h"
#include "qsub/zerodeep.h"
#include "gradcheck.h"
#include "support.h"

using namespace qsub;
using namespace qsub::test;

TEST_CASE("denoiser with zero weights is the identity")
{
  DenoiserShape const s{4, 3, 5};
  DenoiserParams p(s);
  auto const x = random_image({7, 5}, 2, 1);
  auto const y = denoise(x, p);
  CHECK((y.data - x.data).norm() == 0.0);
}

TEST_CASE("conv3x3 matches the direct reference")
{
  Dims const d{9, 7};
  auto p = random_params({4, 5, 1}, 3);
  auto const in = to_real_channels(random_image(d, 2, 4));
  auto const a = conv3x3(in, d, p.weight(0), p.bias(0));
  auto const b = conv3x3_reference(in, d, p.weight(0), p.bias(0));
  CHECK((a - b).norm() / b.norm() < 1e-13);
}

TEST_CASE("denoiser input Jacobian vs finite differences")
{
  Dims const d{8, 8};
  auto const p = random_params({4, 4, 5}, 5);
  Eigen::MatrixXd const in = to_real_channels(random_image(d, 2, 6));
  Eigen::MatrixXd const w = to_real_channels(random_image(d, 2, 7));
  DenoiserCache c;
  denoise_real(p, in, d, &c);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.theta.size());
  Eigen::MatrixXd const gin = denoise_real_backward(p, c, w, d, g);
  Eigen::MatrixXd const dir = to_real_channels(random_image(d, 2, 8));
  double const h = 1e-5;
  double const fp = (denoise_real(p, in + h * dir, d).cwiseProduct(w)).sum();
  double const fm = (denoise_real(p, in - h * dir, d).cwiseProduct(w)).sum();
  double const fd = (fp - fm) / (2 * h);
  double const an = gin.cwiseProduct(dir).sum();
  CHECK(rel(an, fd) < 1e-6);
}

TEST_CASE("dc_solve limits")
{
  auto const m = random_model({8, 8}, 2, 3, 2, 21, 0.6);
  auto const z = random_image(m.dims(), 2, 1);
  auto const b = random_image(m.dims(), 2, 2);
  auto const big = dc_solve(z, b, 1e6, m, 10);
  CHECK((big.x.data - z.data).norm() / z.data.norm() < 1e-3);
  // consistent data, tiny lambda: the least-squares solution
  auto const xt = random_image(m.dims(), 2, 3);
  auto const y = forward(m, xt);
  auto const aty = adjoint(m, y);
  CoefficientImage zero(m.dims(), 2);
  auto const small = dc_solve(zero, aty, 1e-9, m, 400, 1e-14);
  SolverConfig cfg;
  cfg.max_iters = 400;
  cfg.tol = 1e-14;
  auto const cg = recon_cg(y, m, cfg);
  CHECK((small.x.data - cg.x.data).norm() / cg.x.data.norm() < 1e-5);
}

TEST_CASE("split_kspace partitions each echo")
{
  TrainConfig cfg;
  cfg.seed = 3;
  std::vector<Sample> s;
  for (int q = 0; q < 100; ++q) {
    s.push_back({0, q});
  }
  auto const a = split_kspace(s, cfg, 0);
  CHECK(a.z.size() == 20);
  CHECK(a.v.size() == 48);
  CHECK(a.w.size() == 32);
  auto const b = split_kspace(s, cfg, 1);
  CHECK(a.z == b.z);
  CHECK(a.v != b.v);
  auto const m = random_model({10, 10}, 2, 4, 1, 3);
  auto const sp = split_kspace(m.samples(), cfg, 5);
  std::vector<int> all;
  all.insert(all.end(), sp.v.begin(), sp.v.end());
  all.insert(all.end(), sp.w.begin(), sp.w.end());
  all.insert(all.end(), sp.z.begin(), sp.z.end());
  std::sort(all.begin(), all.end());
  REQUIRE(static_cast<int>(all.size()) == m.n_samples());
  for (int i = 0; i < m.n_samples(); ++i) {
    CHECK(all[i] == i);
  }
}

TEST_CASE("loss homogeneity and zero residual")
{
  auto const m = random_model({6, 6}, 2, 2, 2, 8);
  auto const x = random_image(m.dims(), 2, 1);
  auto const y = forward(m, x);
  CoefficientImage g;
  auto const v = loss(y, x, m, 0.5, &g);
  CHECK(v.total == 0.0);
  CHECK(g.data.norm() == 0.0);
  CoefficientImage x2 = x;
  x2.data *= 0.0;
  auto const v1 = loss(y, x2, m, 0.5);
  KSpaceData y2 = y;
  y2.values *= 2.0;
  auto const v2 = loss(y2, x2, m, 0.5);
  CHECK(v2.l1 == doctest::Approx(2 * v1.l1));
  CHECK(v2.l2 == doctest::Approx(4 * v1.l2));
  CHECK(loss(y, x2, m, 1.0).total == doctest::Approx(v1.l1));
}

TEST_CASE("unroll with zero steps returns the adjoint")
{
  auto const m = random_model({6, 6}, 2, 2, 2, 8);
  auto const aty = random_image(m.dims(), 2, 4);
  DenoiserParams p({4, 4, 5});
  UnrollOptions o;
  o.steps = 0;
  CHECK((unroll(aty, m, p, o).data - aty.data).norm() == 0.0);
}

TEST_CASE("full parameter gradient vs central finite differences")
{
  for (bool phase : {false, true}) {
    CAPTURE(phase);
    Dims const d{8, 8};
    auto const m = random_model(d, 2, 3, 2, 31, 0.5);
    TrainConfig tc;
    tc.seed = 2;
    auto const sp = split_kspace(m.samples(), tc, 0);
    auto const dc = m.subset(sp.v);
    auto const tgt = m.subset(sp.w);
    auto const y = forward(m, random_image(d, 2, 77));
    auto const aty = adjoint(dc, select_rows(y, sp.v));
    auto const yt = select_rows(y, sp.w);
    auto p = random_params({4, 4, 5}, 13);
    UnrollOptions o;
    o.steps = 2;
    o.cg_iters = 300;
    o.cg_tol = 1e-15;
    o.phase_normalization = phase;
    double const mu = 0.5;
    double const worst = gradcheck_worst(p, aty, dc, yt, tgt, mu, o);
    MESSAGE("worst relative gradient error: " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("stepping rho against its gradient lowers the loss")
{
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    Dims const d{8, 8};
    auto const m = random_model(d, 2, 3, 2, 100 + seed, 0.5);
    TrainConfig tc;
    tc.seed = seed;
    auto const sp = split_kspace(m.samples(), tc, 0);
    auto const dc = m.subset(sp.v);
    auto const tgt = m.subset(sp.w);
    auto const y = forward(m, random_image(d, 2, 200 + seed));
    auto const aty = adjoint(dc, select_rows(y, sp.v));
    auto const yt = select_rows(y, sp.w);
    auto p = random_params({4, 4, 5}, seed);
    UnrollOptions o;
    o.steps = 2;
    o.cg_iters = 200;
    o.cg_tol = 1e-14;
    auto const lg = loss_and_grad(p, aty, dc, yt, tgt, 0.5, o);
    double const g = lg.grad[p.rho_offset()];
    REQUIRE(g != 0.0);
    p.rho() -= 1e-3 * (g > 0 ? 1.0 : -1.0);
    CHECK(loss(yt, unroll(aty, dc, p, o), tgt, 0.5).total < lg.loss.total);
  }
}

TEST_CASE("zero learning rate stops early at the initial parameters")
{
  auto const m = random_model({8, 8}, 2, 3, 2, 12, 0.6);
  auto const y = forward(m, random_image(m.dims(), 2, 3));
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.lr = 0.0;
  cfg.epochs = 20;
  cfg.patience = 2;
  cfg.splits = 3;
  cfg.width = 4;
  cfg.blocks = 2;
  cfg.unroll = 2;
  auto const t = train(y, m, cfg);
  auto const &h = t.history;
  CHECK(h.early_stopped);
  CHECK(h.best_epoch == 0);
  REQUIRE(h.val_loss.size() == 3);
  CHECK(h.val_loss[1] == h.val_loss[0]);
  CHECK(h.val_epoch == std::vector<int>{0, 1, 2});
  CHECK(h.steps == 2 * cfg.splits);
  auto const init = DenoiserParams::initial({4, 4, 2}, cfg.seed, cfg.lambda0);
  CHECK(t.params.theta == init.theta);
}

TEST_CASE("training is deterministic and lowers the validation loss")
{
  Dims const d{16, 16};
  auto const m = random_model(d, 3, 3, 3, 41, 0.35);
  // smooth coefficients so a small denoiser has something to learn
  CoefficientImage x(d, 3);
  for (int iy = 0; iy < d.ny; ++iy) {
    for (int iz = 0; iz < d.nz; ++iz) {
      double const r2 = std::pow(iy - 7.5, 2) + std::pow(iz - 7.5, 2);
      double const blob = r2 < 36.0 ? 1.0 : 0.0;
      x.data.row(iy * d.nz + iz) << Cx(blob, 0.0), Cx(0.5 * blob * iy / 16.0, 0.0), Cx(0.0, 0.3 * blob);
    }
  }
  auto y = forward(m, x);
  y.values += complex_noise(static_cast<int>(y.values.rows()), static_cast<int>(y.values.cols()), 0.02, 5).values;
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.lr = 2e-3;
  cfg.epochs = 6;
  cfg.splits = 4;
  cfg.width = 8;
  cfg.unroll = 3;
  cfg.patience = 10;
  auto const a = train(y, m, cfg);
  auto const b = train(y, m, cfg);
  CHECK(a.params.theta == b.params.theta);
  CHECK(a.history.val_loss == b.history.val_loss);
  MESSAGE("validation loss " << a.history.val_loss.front() << " -> " << a.history.best_val);
  CHECK(a.history.best_val < a.history.val_loss.front());
  CHECK(a.history.best_epoch > 0);
  auto const xi = infer(y, m, a);
  CHECK(xi.dims == d);
  CHECK(std::isfinite(xi.data.norm()));
}

TEST_CASE("training history table")
{
  TrainHistory h;
  h.train_loss = {3.0, 2.0, 1.5};
  h.val_epoch = {0, 2};
  h.val_loss = {4.0, 2.5};
  CHECK(history_csv(h) == "epoch,train_loss,val_loss\n0,,4.000000000\n1,3.000000000,\n2,2.000000000,2.500000000\n"
                          "3,1.500000000,\n");
}
