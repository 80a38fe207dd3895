#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "qsub/rng.h"
#include "qsub/zerodeep.h"

namespace qsub::test {

inline double fd_rel(double g, double fd, double gmax)
{
  return std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6 * gmax});
}

// Worst relative error of the analytic parameter gradient against finite differences.
inline double gradcheck_worst(
    DenoiserParams const &p, CoefficientImage const &aty, AcquisitionModel const &dc, KSpaceData const &yt,
    AcquisitionModel const &tgt, double mu, UnrollOptions const &o)
{
  auto const lg = loss_and_grad(p, aty, dc, yt, tgt, mu, o);
  double const gmax = lg.grad.cwiseAbs().maxCoeff();
  auto f = [&](DenoiserParams const &q) { return loss(yt, unroll(aty, dc, q, o), tgt, mu).total; };
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
    double const scale = std::max(1.0, std::abs(p.theta[i]));
    auto at = [&](double step) {
      auto q = p;
      q.theta[i] += step;
      return f(q);
    };
    // fourth-order central stencil
    auto stencil = [&](double h) { return (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h); };
    // step picked from the self-consistency of successive estimates, never from the analytic value
    double fd = 0.0;
    double best = std::numeric_limits<double>::infinity();
    double prev = stencil(3e-4 * scale);
    for (double h : {1e-4, 3e-5, 1e-5}) {
      double const cur = stencil(h * scale);
      if (std::abs(cur - prev) < best) {
        best = std::abs(cur - prev);
        fd = cur;
      }
      prev = cur;
    }
    worst = std::max(worst, fd_rel(lg.grad[i], fd, gmax));
  }
  return worst;
}

// Normal-distributed weights around unit normalization scales.
inline DenoiserParams random_params(DenoiserShape s, std::uint64_t seed, double scale = 0.3)
{
  DenoiserParams p(s);
  auto rng = make_rng(seed, 9);
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
    p.theta[i] = g(rng);
  }
  for (int b = 0; b < s.blocks; ++b) {
    p.scale(b).array() += 1.0;
  }
  p.rho() = DenoiserParams::rho_for(0.05);
  return p;
}

} // namespace qsub::test
