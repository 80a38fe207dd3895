#include "qsub/zerodeep.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qsub/container.h"
#include "qsub/error.h"
#include "qsub/recon_classic.h"
#include "qsub/rng.h"

namespace qsub {

void TrainConfig::validate() const
{
  require(mu > 0.0 && mu < 1.0, "train: mu must lie in (0, 1)");
  require(lr >= 0.0 && std::isfinite(lr), "train: lr must be finite and non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: Adam betas must lie in [0, 1)");
  require(splits >= 1 && epochs >= 0 && val_every >= 1 && patience >= 1, "train: invalid schedule");
  require(unroll >= 0 && dc_cg_iters >= 1, "train: invalid unroll settings");
  require(z_fraction > 0.0 && z_fraction < 1.0, "train: z_fraction must lie in (0, 1)");
  require(vw_ratio > 0.0 && vw_ratio < 1.0, "train: vw_ratio must lie in (0, 1)");
  require(width >= 1 && blocks >= 1, "train: invalid network shape");
  require(lambda0 > 0.0, "train: lambda0 must be positive");
}

namespace {

// Contiguous [begin, end) ranges of the echo-sorted sample list.
std::vector<std::pair<int, int>> echo_groups(std::vector<Sample> const &samples)
{
  std::vector<std::pair<int, int>> g;
  int b = 0;
  int const n = static_cast<int>(samples.size());
  for (int i = 1; i <= n; ++i) {
    if (i == n || samples[i].echo != samples[b].echo) {
      g.emplace_back(b, i);
      b = i;
    }
  }
  return g;
}

int rounded(double v) { return static_cast<int>(std::lround(v)); }

} // namespace

SplitSpec split_kspace(std::vector<Sample> const &samples, TrainConfig const &cfg, int b_index)
{
  require(b_index >= 0, "split_kspace: b_index must be non-negative");
  require(cfg.z_fraction > 0.0 && cfg.z_fraction < 1.0 && cfg.vw_ratio > 0.0 && cfg.vw_ratio < 1.0,
          "split_kspace: invalid fractions");
  auto zrng = make_rng(cfg.seed, 0x5a000000ull);
  auto vrng = make_rng(cfg.seed, 0x56000000ull + static_cast<std::uint64_t>(b_index));
  SplitSpec s;
  // Counts are rounded cumulatively so sparse echoes still honour the global fractions.
  int seen = 0;
  int z_taken = 0;
  int rest_seen = 0;
  int v_taken = 0;
  for (auto [b, e] : echo_groups(samples)) {
    std::vector<int> idx(e - b);
    std::iota(idx.begin(), idx.end(), b);
    // Z is drawn with a stream independent of b_index, so every set shares it.
    std::shuffle(idx.begin(), idx.end(), zrng);
    seen += e - b;
    int const nz = rounded(cfg.z_fraction * seen) - z_taken;
    z_taken += nz;
    s.z.insert(s.z.end(), idx.begin(), idx.begin() + nz);
    std::vector<int> rest(idx.begin() + nz, idx.end());
    std::sort(rest.begin(), rest.end());
    std::shuffle(rest.begin(), rest.end(), vrng);
    rest_seen += static_cast<int>(rest.size());
    int const nv = rounded(cfg.vw_ratio * rest_seen) - v_taken;
    v_taken += nv;
    s.v.insert(s.v.end(), rest.begin(), rest.begin() + nv);
    s.w.insert(s.w.end(), rest.begin() + nv, rest.end());
  }
  std::sort(s.v.begin(), s.v.end());
  std::sort(s.w.begin(), s.w.end());
  std::sort(s.z.begin(), s.z.end());
  return s;
}

KSpaceData select_rows(KSpaceData const &y, std::vector<int> const &rows)
{
  KSpaceData out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), y.values.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = y.values.row(rows[i]);
  }
  return out;
}

DcResult dc_solve(
    CoefficientImage const &z, CoefficientImage const &a_h_y, double lambda, AcquisitionModel const &model,
    int iters, double tol)
{
  require(lambda > 0.0 && std::isfinite(lambda), "dc_solve: lambda must be positive and finite");
  require(z.dims == a_h_y.dims && z.channels() == a_h_y.channels(), "dc_solve: shape mismatch");
  LinearOp const h = [&](CoefficientImage const &v) {
    CoefficientImage out = normal_apply(model, v);
    out.data += lambda * v.data;
    return out;
  };
  CoefficientImage rhs = a_h_y;
  rhs.data += lambda * z.data;
  auto res = conjugate_gradient(h, rhs, z, iters, tol);
  DcResult out;
  out.iterations = res.iterations;
  double const bn = norm(rhs);
  if (bn > 0.0) {
    CoefficientImage r = h(res.x);
    r.data -= rhs.data;
    out.rel_residual = norm(r) / bn;
  }
  out.x = std::move(res.x);
  return out;
}

namespace {

CoefficientImage apply_denoiser(
    DenoiserParams const &p, CoefficientImage const &x, bool phase_norm, UnrollCache::Step *step)
{
  Dims const d = x.dims;
  if (!phase_norm) {
    DenoiserCache *nc = step ? &step->net : nullptr;
    return from_real_channels(denoise_real(p, to_real_channels(x), d, nc), d);
  }
  Eigen::VectorXcd u(d.size());
  Eigen::VectorXd mag(d.size());
  for (int q = 0; q < d.size(); ++q) {
    mag[q] = std::abs(x.data(q, 0));
    u[q] = mag[q] > 0.0 ? x.data(q, 0) / mag[q] : Cx(1.0, 0.0);
  }
  CoefficientImage xn = x;
  xn.data = u.conjugate().asDiagonal() * x.data;
  DenoiserCache *nc = step ? &step->net : nullptr;
  CoefficientImage dn = from_real_channels(denoise_real(p, to_real_channels(xn), d, nc), d);
  CoefficientImage z = dn;
  z.data = u.asDiagonal() * dn.data;
  if (step) {
    step->den_out = std::move(dn);
    step->phase = std::move(u);
    step->magnitude = std::move(mag);
  }
  return z;
}

CoefficientImage denoiser_backward(
    DenoiserParams const &p, UnrollCache::Step const &step, CoefficientImage const &z_bar, bool phase_norm,
    Eigen::VectorXd &grad)
{
  Dims const d = z_bar.dims;
  if (!phase_norm) {
    return from_real_grad(denoise_real_backward(p, step.net, to_real_grad(z_bar), d, grad), d);
  }
  auto const &u = step.phase;
  // z = dn * u
  Eigen::MatrixXcd const dn_bar = u.conjugate().asDiagonal() * z_bar.data;
  Eigen::VectorXcd u_bar = (z_bar.data.array() * step.den_out.data.array().conjugate()).rowwise().sum();
  // xn = x * conj(u)
  CoefficientImage dn_grad(d, z_bar.channels());
  dn_grad.data = dn_bar;
  CoefficientImage const xn_bar =
      from_real_grad(denoise_real_backward(p, step.net, to_real_grad(dn_grad), d, grad), d);
  CoefficientImage x_bar = xn_bar;
  x_bar.data = u.asDiagonal() * xn_bar.data;
  Eigen::VectorXcd const v_bar = (xn_bar.data.array() * step.x_in.data.array().conjugate()).rowwise().sum();
  u_bar += v_bar.conjugate();
  // u = a / |a| with a = channel 0
  for (int q = 0; q < d.size(); ++q) {
    double const m = step.magnitude[q];
    if (m > 0.0) {
      Cx const uq = u[q];
      double const radial = (std::conj(uq) * u_bar[q]).real();
      x_bar.data(q, 0) += (u_bar[q] - radial * uq) / m;
    }
  }
  return x_bar;
}

} // namespace

CoefficientImage unroll(
    CoefficientImage const &a_h_y, AcquisitionModel const &model, DenoiserParams const &params,
    UnrollOptions const &opt, UnrollCache *cache)
{
  require(opt.steps >= 0, "unroll: negative step count");
  require(params.shape().channels == 2 * a_h_y.channels(), "unroll: denoiser channel count mismatch");
  double const lambda = params.lambda();
  if (cache) {
    cache->steps.assign(opt.steps, {});
    cache->dc_residuals.clear();
  }
  CoefficientImage x = a_h_y;
  for (int p = 0; p < opt.steps; ++p) {
    UnrollCache::Step *st = cache ? &cache->steps[p] : nullptr;
    CoefficientImage z = apply_denoiser(params, x, opt.phase_normalization, st);
    auto dc = dc_solve(z, a_h_y, lambda, model, opt.cg_iters, opt.cg_tol);
    if (cache) {
      st->x_in = std::move(x);
      st->z = std::move(z);
      st->x_out = dc.x;
      cache->dc_residuals.push_back(dc.rel_residual);
    }
    x = std::move(dc.x);
  }
  return x;
}

Eigen::VectorXd unroll_backward(
    UnrollCache const &cache, CoefficientImage const &x_bar, AcquisitionModel const &model,
    DenoiserParams const &params, UnrollOptions const &opt)
{
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.theta.size());
  double const lambda = params.lambda();
  LinearOp const h = [&](CoefficientImage const &v) {
    CoefficientImage out = normal_apply(model, v);
    out.data += lambda * v.data;
    return out;
  };
  double lambda_bar = 0.0;
  CoefficientImage g = x_bar;
  for (int p = static_cast<int>(cache.steps.size()) - 1; p >= 0; --p) {
    auto const &st = cache.steps[p];
    // x_out = H^{-1}(b + lambda z): implicit adjoint through the solve.
    auto const u = conjugate_gradient(h, g, CoefficientImage(g.dims, g.channels()), opt.cg_iters, opt.cg_tol).x;
    CoefficientImage diff = st.z;
    diff.data -= st.x_out.data;
    lambda_bar += dot(u, diff).real();
    CoefficientImage z_bar = u;
    z_bar.data *= lambda;
    g = denoiser_backward(params, st, z_bar, opt.phase_normalization, grad);
  }
  grad[params.rho_offset()] += lambda_bar * params.lambda_slope();
  return grad;
}

LossValue loss(
    KSpaceData const &y_target, CoefficientImage const &x, AcquisitionModel const &model_target, double mu,
    CoefficientImage *grad_x)
{
  require(mu >= 0.0 && mu <= 1.0, "loss: mu must lie in [0, 1]");
  KSpaceData r = forward(model_target, x);
  r.values = y_target.values - r.values;
  LossValue v;
  v.l1 = r.values.cwiseAbs().sum();
  v.l2 = r.values.squaredNorm();
  v.total = mu * v.l1 + (1.0 - mu) * v.l2;
  if (grad_x) {
    KSpaceData rb;
    rb.values = r.values.unaryExpr([mu](Cx c) {
      double const a = std::abs(c);
      Cx const l1 = a > 0.0 ? c / a : Cx(0.0, 0.0);
      return -(mu * l1 + 2.0 * (1.0 - mu) * c);
    });
    *grad_x = adjoint(model_target, rb);
  }
  return v;
}

LossGrad loss_and_grad(
    DenoiserParams const &params, CoefficientImage const &a_h_y_dc, AcquisitionModel const &model_dc,
    KSpaceData const &y_target, AcquisitionModel const &model_target, double mu, UnrollOptions const &opt)
{
  UnrollCache cache;
  auto const x = unroll(a_h_y_dc, model_dc, params, opt, &cache);
  CoefficientImage xb;
  LossGrad out;
  out.loss = loss(y_target, x, model_target, mu, &xb);
  out.grad = unroll_backward(cache, xb, model_dc, params, opt);
  return out;
}

UnrollOptions unroll_options(TrainConfig const &cfg)
{
  UnrollOptions o;
  o.steps = cfg.unroll;
  o.cg_iters = cfg.dc_cg_iters;
  o.cg_tol = cfg.dc_tol;
  o.phase_normalization = cfg.phase_normalization;
  return o;
}

double data_scale_for(KSpaceData const &y, AcquisitionModel const &model)
{
  auto const x0 = adjoint(model, y);
  double const m = x0.data.col(0).cwiseAbs().maxCoeff();
  return m > 0.0 && std::isfinite(m) ? 1.0 / m : 1.0;
}

namespace {

struct Problem
{
  AcquisitionModel dc;
  CoefficientImage aty;
  AcquisitionModel target;
  KSpaceData y_target;
};

Problem make_problem(
    AcquisitionModel const &model, KSpaceData const &y, std::vector<int> const &dc, std::vector<int> const &target)
{
  require(!dc.empty() && !target.empty(), "train: split produced an empty subset");
  auto dcm = model.subset(dc);
  auto aty = adjoint(dcm, select_rows(y, dc));
  return Problem{std::move(dcm), std::move(aty), model.subset(target), select_rows(y, target)};
}

std::vector<int> merged(std::vector<int> a, std::vector<int> const &b)
{
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

void check_finite(double v, char const *what, int epoch, int step)
{
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "train: non-finite " << what << " at epoch " << epoch << ", step " << step;
    throw NumericFailure(os.str());
  }
}

} // namespace

TrainedModel train(KSpaceData const &y, AcquisitionModel const &model, TrainConfig const &cfg)
{
  cfg.validate();
  require(y.values.rows() == model.n_samples() && y.values.cols() == model.n_coils(),
          "train: data does not match the model");
  TrainedModel out;
  out.unroll = unroll_options(cfg);
  out.data_scale = data_scale_for(y, model);
  KSpaceData ys = y;
  ys.values *= out.data_scale;

  DenoiserShape const shape{2 * model.rank(), cfg.width, cfg.blocks};
  DenoiserParams p = DenoiserParams::initial(shape, cfg.seed, cfg.lambda0);

  std::vector<Problem> sets;
  sets.reserve(cfg.splits);
  SplitSpec s0;
  for (int b = 0; b < cfg.splits; ++b) {
    auto s = split_kspace(model.samples(), cfg, b);
    sets.push_back(make_problem(model, ys, s.v, s.w));
    if (b == 0) {
      s0 = std::move(s);
    }
  }
  Problem const val = make_problem(model, ys, merged(s0.v, s0.w), s0.z);

  auto validate = [&](DenoiserParams const &params) {
    auto const x = unroll(val.aty, val.dc, params, out.unroll);
    return loss(val.y_target, x, val.target, cfg.mu).total;
  };

  auto &h = out.history;
  double best = validate(p);
  check_finite(best, "validation loss", 0, 0);
  h.val_epoch.push_back(0);
  h.val_loss.push_back(best);
  h.best_epoch = 0;
  DenoiserParams best_p = p;

  Eigen::VectorXd m = Eigen::VectorXd::Zero(p.theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p.theta.size());
  auto pick = make_rng(cfg.seed, 0x42000000ull);
  std::uniform_int_distribution<int> which(0, cfg.splits - 1);
  int t = 0;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (int s = 0; s < cfg.steps(); ++s) {
      auto const &pr = sets[which(pick)];
      auto lg = loss_and_grad(p, pr.aty, pr.dc, pr.y_target, pr.target, cfg.mu, out.unroll);
      check_finite(lg.loss.total, "training loss", epoch, s);
      check_finite(lg.grad.squaredNorm(), "gradient", epoch, s);
      sum += lg.loss.total;
      ++t;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * lg.grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * lg.grad.cwiseAbs2();
      double const c1 = 1.0 - std::pow(cfg.beta1, t);
      double const c2 = 1.0 - std::pow(cfg.beta2, t);
      p.theta.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
    }
    h.train_loss.push_back(sum / cfg.steps());
    h.steps = t;
    if (epoch % cfg.val_every != 0) {
      continue;
    }
    double const vl = validate(p);
    check_finite(vl, "validation loss", epoch, cfg.steps());
    h.val_epoch.push_back(epoch);
    h.val_loss.push_back(vl);
    if (vl < best) {
      best = vl;
      best_p = p;
      h.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      h.early_stopped = true;
      break;
    }
  }
  h.best_val = best;
  out.params = std::move(best_p);
  return out;
}

CoefficientImage infer(KSpaceData const &y, AcquisitionModel const &model, TrainedModel const &trained)
{
  require(trained.params.shape().channels == 2 * model.rank(), "infer: checkpoint rank does not match the model");
  KSpaceData ys = y;
  ys.values *= trained.data_scale;
  auto const aty = adjoint(model, ys);
  CoefficientImage x = unroll(aty, model, trained.params, trained.unroll);
  x.data /= trained.data_scale;
  return x;
}

void save_checkpoint(std::string const &path, TrainedModel const &m, TrainConfig const &cfg)
{
  auto const &s = m.params.shape();
  nlohmann::json meta;
  meta["kind"] = "zerodeep_checkpoint";
  meta["layout"] = {{"channels", s.channels}, {"width", s.width}, {"blocks", s.blocks}};
  meta["data_scale"] = m.data_scale;
  meta["unroll"] = {{"steps", m.unroll.steps},
                    {"cg_iters", m.unroll.cg_iters},
                    {"cg_tol", m.unroll.cg_tol},
                    {"phase_normalization", m.unroll.phase_normalization}};
  meta["config"] = {{"mu", cfg.mu},         {"lr", cfg.lr},
                    {"beta1", cfg.beta1},   {"beta2", cfg.beta2},
                    {"splits", cfg.splits}, {"epochs", cfg.epochs},
                    {"steps_per_epoch", cfg.steps_per_epoch},
                    {"val_every", cfg.val_every}, {"patience", cfg.patience},
                    {"z_fraction", cfg.z_fraction}, {"vw_ratio", cfg.vw_ratio},
                    {"lambda0", cfg.lambda0}, {"seed", cfg.seed}};
  auto const &h = m.history;
  meta["history"] = {{"train_loss", h.train_loss}, {"val_epoch", h.val_epoch},
                     {"val_loss", h.val_loss},     {"best_epoch", h.best_epoch},
                     {"best_val", h.best_val},     {"steps", h.steps},
                     {"early_stopped", h.early_stopped}};
  std::vector<double> theta(m.params.theta.data(), m.params.theta.data() + m.params.theta.size());
  auto const n = static_cast<std::int64_t>(theta.size());
  write_array(path, make_real({n}, std::move(theta), meta));
}

TrainedModel load_checkpoint(std::string const &path)
{
  auto const a = read_array(path);
  if (a.dtype != "f64" || a.shape.size() != 1 || a.meta.value("kind", "") != "zerodeep_checkpoint") {
    throw FormatError("not a zerodeep checkpoint: " + path);
  }
  TrainedModel m;
  try {
    auto const &l = a.meta.at("layout");
    DenoiserShape const s{l.at("channels").get<int>(), l.at("width").get<int>(), l.at("blocks").get<int>()};
    m.params = DenoiserParams(s);
    if (m.params.theta.size() != a.shape[0]) {
      throw FormatError("checkpoint parameter count does not match its layout: " + path);
    }
    m.params.theta = Eigen::Map<Eigen::VectorXd const>(a.real.data(), a.shape[0]);
    m.data_scale = a.meta.at("data_scale").get<double>();
    auto const &u = a.meta.at("unroll");
    m.unroll.steps = u.at("steps").get<int>();
    m.unroll.cg_iters = u.at("cg_iters").get<int>();
    m.unroll.cg_tol = u.at("cg_tol").get<double>();
    m.unroll.phase_normalization = u.at("phase_normalization").get<bool>();
    if (a.meta.contains("history")) {
      auto const &h = a.meta["history"];
      m.history.train_loss = h.value("train_loss", std::vector<double>{});
      m.history.val_epoch = h.value("val_epoch", std::vector<int>{});
      m.history.val_loss = h.value("val_loss", std::vector<double>{});
      m.history.best_epoch = h.value("best_epoch", 0);
      m.history.best_val = h.value("best_val", 0.0);
      m.history.steps = h.value("steps", 0);
      m.history.early_stopped = h.value("early_stopped", false);
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError("malformed checkpoint manifest in " + path + ": " + e.what());
  } catch (InvalidInput const &e) {
    throw FormatError(std::string("invalid checkpoint layout: ") + e.what());
  }
  return m;
}

} // namespace qsub
