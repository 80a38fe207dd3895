#include "qsub/recon_classic.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsub/error.h"
#include "qsub/rng.h"

namespace qsub {

SolverMethod parse_solver_method(std::string const &s)
{
  if (s == "cg") {
    return SolverMethod::Cg;
  }
  if (s == "llr") {
    return SolverMethod::Llr;
  }
  if (s == "wavelet") {
    return SolverMethod::Wavelet;
  }
  throw InvalidInput("unknown solver method '" + s + "'");
}

std::string to_string(SolverMethod m)
{
  switch (m) {
  case SolverMethod::Cg:
    return "cg";
  case SolverMethod::Llr:
    return "llr";
  case SolverMethod::Wavelet:
    return "wavelet";
  }
  return "?";
}

SolveResult conjugate_gradient(
    LinearOp const &op, CoefficientImage const &rhs, CoefficientImage x0, int max_iters, double tol)
{
  SolveResult res;
  res.x = std::move(x0);
  double const bnorm = norm(rhs);
  if (bnorm == 0.0) {
    res.x.data.setZero();
    res.converged = true;
    return res;
  }
  CoefficientImage r = rhs;
  if (res.x.data.squaredNorm() > 0.0) {
    r.data -= op(res.x).data;
  }
  CoefficientImage p = r;
  double rr = r.data.squaredNorm();
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) / bnorm < tol) {
      res.converged = true;
      break;
    }
    CoefficientImage const ap = op(p);
    double const pap = dot(p, ap).real();
    if (!(pap > 0.0)) {
      break;
    }
    double const alpha = rr / pap;
    res.x.data += alpha * p.data;
    r.data -= alpha * ap.data;
    double const rr_new = r.data.squaredNorm();
    if (!std::isfinite(rr_new)) {
      throw NumericFailure("conjugate_gradient: non-finite residual");
    }
    res.history.push_back(std::sqrt(rr_new) / bnorm);
    res.iterations = it + 1;
    p.data = r.data + (rr_new / rr) * p.data;
    rr = rr_new;
  }
  if (std::sqrt(rr) / bnorm < tol) {
    res.converged = true;
  }
  return res;
}

SolveResult recon_cg(KSpaceData const &y, AcquisitionModel const &model, SolverConfig const &cfg)
{
  auto const aty = adjoint(model, y);
  LinearOp const op = [&](CoefficientImage const &v) { return normal_apply(model, v); };
  return conjugate_gradient(op, aty, CoefficientImage(model.dims(), model.rank()), cfg.max_iters, cfg.tol);
}

namespace {

template <typename Fn>
void for_each_tile(Dims d, int block, Fn &&fn)
{
  for (int y0 = 0; y0 < d.ny; y0 += block) {
    for (int z0 = 0; z0 < d.nz; z0 += block) {
      fn(y0, z0, std::min(block, d.ny - y0), std::min(block, d.nz - z0));
    }
  }
}

Eigen::MatrixXcd gather_tile(CoefficientImage const &x, int y0, int z0, int hy, int hz)
{
  Eigen::MatrixXcd c(hy * hz, x.channels());
  for (int a = 0; a < hy; ++a) {
    for (int b = 0; b < hz; ++b) {
      c.row(a * hz + b) = x.data.row((y0 + a) * x.dims.nz + z0 + b);
    }
  }
  return c;
}

} // namespace

CoefficientImage prox_llr(CoefficientImage const &x, double thresh, int block)
{
  require(block >= 1, "prox_llr: block must be >= 1");
  require(thresh >= 0.0, "prox_llr: threshold must be non-negative");
  CoefficientImage out = x;
  if (thresh == 0.0) {
    return out;
  }
  Dims const d = x.dims;
  std::vector<std::array<int, 4>> tiles;
  for_each_tile(d, block, [&](int y0, int z0, int hy, int hz) { tiles.push_back({y0, z0, hy, hz}); });
#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(tiles.size()); ++i) {
    auto const [y0, z0, hy, hz] = tiles[i];
    Eigen::MatrixXcd const c = gather_tile(x, y0, z0, hy, hz);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd const s = (svd.singularValues().array() - thresh).cwiseMax(0.0).matrix();
    Eigen::MatrixXcd const r = svd.matrixU() * s.cast<Cx>().asDiagonal() * svd.matrixV().adjoint();
    for (int a = 0; a < hy; ++a) {
      for (int b = 0; b < hz; ++b) {
        out.data.row((y0 + a) * d.nz + z0 + b) = r.row(a * hz + b);
      }
    }
  }
  return out;
}

double llr_norm(CoefficientImage const &x, int block)
{
  double total = 0.0;
  for_each_tile(x.dims, block, [&](int y0, int z0, int hy, int hz) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(gather_tile(x, y0, z0, hy, hz));
    total += svd.singularValues().sum();
  });
  return total;
}

int haar_levels(Dims d, int requested)
{
  int levels = 0;
  int ny = d.ny;
  int nz = d.nz;
  while (levels < requested && ny % 2 == 0 && nz % 2 == 0 && ny >= 2 && nz >= 2) {
    ny /= 2;
    nz /= 2;
    ++levels;
  }
  return levels;
}

Dims haar_approx_dims(Dims d, int levels)
{
  int const l = haar_levels(d, levels);
  return {d.ny >> l, d.nz >> l};
}

void haar_forward(Cx *x, Dims d, int requested)
{
  int const levels = haar_levels(d, requested);
  double const h = 1.0 / std::sqrt(2.0);
  std::vector<Cx> tmp(std::max(d.ny, d.nz));
  int ny = d.ny;
  int nz = d.nz;
  for (int l = 0; l < levels; ++l) {
    for (int iy = 0; iy < ny; ++iy) {
      Cx *row = x + iy * d.nz;
      for (int j = 0; j < nz / 2; ++j) {
        tmp[j] = h * (row[2 * j] + row[2 * j + 1]);
        tmp[nz / 2 + j] = h * (row[2 * j] - row[2 * j + 1]);
      }
      std::copy(tmp.begin(), tmp.begin() + nz, row);
    }
    for (int iz = 0; iz < nz; ++iz) {
      for (int j = 0; j < ny / 2; ++j) {
        Cx const a = x[(2 * j) * d.nz + iz];
        Cx const b = x[(2 * j + 1) * d.nz + iz];
        tmp[j] = h * (a + b);
        tmp[ny / 2 + j] = h * (a - b);
      }
      for (int j = 0; j < ny; ++j) {
        x[j * d.nz + iz] = tmp[j];
      }
    }
    ny /= 2;
    nz /= 2;
  }
}

void haar_inverse(Cx *x, Dims d, int requested)
{
  int const levels = haar_levels(d, requested);
  double const h = 1.0 / std::sqrt(2.0);
  std::vector<Cx> tmp(std::max(d.ny, d.nz));
  for (int l = levels - 1; l >= 0; --l) {
    int const ny = d.ny >> l;
    int const nz = d.nz >> l;
    for (int iz = 0; iz < nz; ++iz) {
      for (int j = 0; j < ny / 2; ++j) {
        Cx const a = x[j * d.nz + iz];
        Cx const b = x[(ny / 2 + j) * d.nz + iz];
        tmp[2 * j] = h * (a + b);
        tmp[2 * j + 1] = h * (a - b);
      }
      for (int j = 0; j < ny; ++j) {
        x[j * d.nz + iz] = tmp[j];
      }
    }
    for (int iy = 0; iy < ny; ++iy) {
      Cx *row = x + iy * d.nz;
      for (int j = 0; j < nz / 2; ++j) {
        tmp[2 * j] = h * (row[j] + row[nz / 2 + j]);
        tmp[2 * j + 1] = h * (row[j] - row[nz / 2 + j]);
      }
      std::copy(tmp.begin(), tmp.begin() + nz, row);
    }
  }
}

namespace {

bool in_approx(int iy, int iz, Dims a) { return iy < a.ny && iz < a.nz; }

Cx soft(Cx z, double t)
{
  double const m = std::abs(z);
  return m > t ? z * ((m - t) / m) : Cx{};
}

} // namespace

CoefficientImage prox_wavelet(CoefficientImage const &x, double thresh, int levels)
{
  require(thresh >= 0.0, "prox_wavelet: threshold must be non-negative");
  CoefficientImage out = x;
  if (thresh == 0.0) {
    return out;
  }
  Dims const d = x.dims;
  Dims const a = haar_approx_dims(d, levels);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < x.channels(); ++k) {
    Cx *plane = out.data.col(k).data();
    haar_forward(plane, d, levels);
    for (int iy = 0; iy < d.ny; ++iy) {
      for (int iz = 0; iz < d.nz; ++iz) {
        if (!in_approx(iy, iz, a)) {
          plane[iy * d.nz + iz] = soft(plane[iy * d.nz + iz], thresh);
        }
      }
    }
    haar_inverse(plane, d, levels);
  }
  return out;
}

double wavelet_norm(CoefficientImage const &x, int levels)
{
  Dims const d = x.dims;
  Dims const a = haar_approx_dims(d, levels);
  double total = 0.0;
  Eigen::VectorXcd plane;
  for (int k = 0; k < x.channels(); ++k) {
    plane = x.data.col(k);
    haar_forward(plane.data(), d, levels);
    for (int iy = 0; iy < d.ny; ++iy) {
      for (int iz = 0; iz < d.nz; ++iz) {
        if (!in_approx(iy, iz, a)) {
          total += std::abs(plane[iy * d.nz + iz]);
        }
      }
    }
  }
  return total;
}

double power_iteration(LinearOp const &op, Dims dims, int channels, int iters, std::uint64_t seed)
{
  auto rng = make_rng(seed, 0x9041);
  std::normal_distribution<double> g(0.0, 1.0);
  CoefficientImage v(dims, channels);
  for (Eigen::Index i = 0; i < v.data.size(); ++i) {
    double const re = g(rng);
    double const im = g(rng);
    v.data.data()[i] = Cx(re, im);
  }
  v.data /= v.data.norm();
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    CoefficientImage w = op(v);
    lambda = dot(v, w).real();
    double const n = norm(w);
    if (n == 0.0) {
      return 0.0;
    }
    v.data = w.data / n;
  }
  return lambda;
}

double lipschitz_power_iter(AcquisitionModel const &model, int iters, std::uint64_t seed)
{
  LinearOp const op = [&](CoefficientImage const &v) { return normal_apply(model, v); };
  return power_iteration(op, model.dims(), model.rank(), iters, seed);
}

namespace {

CoefficientImage apply_prox(CoefficientImage const &x, double t, SolverConfig const &cfg)
{
  switch (cfg.method) {
  case SolverMethod::Llr:
    return prox_llr(x, t, cfg.llr_block);
  case SolverMethod::Wavelet:
    return prox_wavelet(x, t, cfg.wavelet_levels);
  case SolverMethod::Cg:
    return x;
  }
  return x;
}

double regularizer(CoefficientImage const &x, SolverConfig const &cfg)
{
  switch (cfg.method) {
  case SolverMethod::Llr:
    return llr_norm(x, cfg.llr_block);
  case SolverMethod::Wavelet:
    return wavelet_norm(x, cfg.wavelet_levels);
  case SolverMethod::Cg:
    return 0.0;
  }
  return 0.0;
}

} // namespace

SolveResult fista(
    LinearOp const &normal, CoefficientImage const &aty, double y_norm2, SolverConfig const &cfg, double lipschitz)
{
  require(cfg.lambda >= 0.0, "fista: lambda must be non-negative");
  SolveResult res;
  if (!(lipschitz > 0.0)) {
    res.x = CoefficientImage(aty.dims, aty.channels());
    res.converged = true;
    return res;
  }
  // Power iteration approaches the top eigenvalue from below.
  double const L = 1.02 * lipschitz;
  double const step = 1.0 / L;
  double const lambda = cfg.method == SolverMethod::Cg ? 0.0 : cfg.lambda;

  auto objective = [&](CoefficientImage const &x, CoefficientImage const &nx) {
    double const data = 0.5 * (dot(x, nx).real() - 2.0 * dot(x, aty).real() + y_norm2);
    return data + (lambda > 0.0 ? lambda * regularizer(x, cfg) : 0.0);
  };

  CoefficientImage x = aty;
  CoefficientImage nx = normal(x);
  CoefficientImage x_prev = x;
  CoefficientImage nx_prev = nx;
  double f = objective(x, nx);
  res.history.push_back(f);
  double t = 1.0;
  int bad = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    double const t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double const beta = (t - 1.0) / t_next;
    CoefficientImage v = x;
    CoefficientImage nv = nx;
    v.data += beta * (x.data - x_prev.data);
    nv.data += beta * (nx.data - nx_prev.data);
    CoefficientImage grad = nv;
    grad.data -= aty.data;
    v.data -= step * grad.data;
    CoefficientImage cand = apply_prox(v, step * lambda, cfg);
    CoefficientImage ncand = normal(cand);
    double fc = objective(cand, ncand);
    double tn = t_next;
    if (!(fc <= f)) {
      // restart from x with a plain proximal-gradient step
      CoefficientImage g = nx;
      g.data -= aty.data;
      CoefficientImage w = x;
      w.data -= step * g.data;
      cand = apply_prox(w, step * lambda, cfg);
      ncand = normal(cand);
      fc = objective(cand, ncand);
      tn = 1.0;
    }
    if (!std::isfinite(fc)) {
      throw NumericFailure("fista: non-finite objective");
    }
    if (fc > f) {
      // the data term cancels against ||y||^2; increases at that scale are stagnation
      if (fc - f <= 1e-12 * std::max(std::abs(f), y_norm2)) {
        res.converged = true;
        res.iterations = it + 1;
        break;
      }
      if (++bad >= 5) {
        std::ostringstream msg;
        msg << "fista: objective increased " << bad << " consecutive iterations after restart";
        throw NumericFailure(msg.str());
      }
      t = 1.0;
      x_prev = x;
      nx_prev = nx;
      res.history.push_back(f);
      continue;
    }
    bad = 0;
    double const dx = (cand.data - x.data).norm();
    double const xn = cand.data.norm();
    x_prev = std::move(x);
    nx_prev = std::move(nx);
    x = std::move(cand);
    nx = std::move(ncand);
    f = fc;
    t = tn;
    res.history.push_back(f);
    res.iterations = it + 1;
    if (xn > 0.0 && dx / xn < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  return res;
}

SolveResult recon_fista(KSpaceData const &y, AcquisitionModel const &model, SolverConfig const &cfg)
{
  auto const aty = adjoint(model, y);
  LinearOp const op = [&](CoefficientImage const &v) { return normal_apply(model, v); };
  double const L = lipschitz_power_iter(model, 30, cfg.seed);
  return fista(op, aty, y.values.squaredNorm(), cfg, L);
}

AcquisitionModel contrast_model(AcquisitionModel const &m, int contrast)
{
  std::vector<Sample> s;
  for (auto const &smp : m.samples()) {
    if (smp.echo / m.etl() == contrast) {
      s.push_back({0, smp.point});
    }
  }
  std::sort(s.begin(), s.end(), [](Sample const &a, Sample const &b) { return a.point < b.point; });
  return AcquisitionModel(Eigen::MatrixXd::Ones(1, 1), m.coils(), std::move(s), 1);
}

KSpaceData contrast_data(AcquisitionModel const &m, KSpaceData const &y, int contrast)
{
  std::vector<std::pair<int, int>> rows; // (point, row)
  for (int i = 0; i < m.n_samples(); ++i) {
    if (m.samples()[i].echo / m.etl() == contrast) {
      rows.emplace_back(m.samples()[i].point, i);
    }
  }
  std::sort(rows.begin(), rows.end());
  KSpaceData out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), y.values.cols());
  for (size_t j = 0; j < rows.size(); ++j) {
    out.values.row(static_cast<Eigen::Index>(j)) = y.values.row(rows[j].second);
  }
  return out;
}

CoefficientImage recon_contrast_pics(
    KSpaceData const &y, AcquisitionModel const &m, double lambda, int max_iters, double tol)
{
  int const contrasts = m.echoes() / m.etl();
  CoefficientImage out(m.dims(), contrasts);
  SolverConfig cfg;
  cfg.method = SolverMethod::Wavelet;
  cfg.lambda = lambda;
  cfg.max_iters = max_iters;
  cfg.tol = tol;
  for (int c = 0; c < contrasts; ++c) {
    auto const mc = contrast_model(m, c);
    auto const yc = contrast_data(m, y, c);
    auto const r = recon_fista(yc, mc, cfg);
    out.data.col(c) = r.x.data.col(0);
  }
  return out;
}

} // namespace qsub
