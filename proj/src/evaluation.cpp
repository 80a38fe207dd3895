#include "qsub/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qsub/error.h"

namespace qsub {

std::vector<double> subspace_ratios(AcquisitionModel const &accel, AcquisitionModel const &full)
{
  require(accel.n_samples() > 0, "gfactor: accelerated model has no samples");
  double const r = static_cast<double>(full.n_samples()) / accel.n_samples();
  return std::vector<double>(accel.rank(), r);
}

std::vector<double> contrast_ratios(AcquisitionModel const &accel, AcquisitionModel const &full)
{
  int const nc = accel.echoes() / accel.etl();
  std::vector<double> r(nc);
  for (int c = 0; c < nc; ++c) {
    int const a = accel.contrast_count(c);
    require(a > 0, "gfactor: contrast without samples");
    r[c] = static_cast<double>(full.contrast_count(c)) / a;
  }
  return r;
}

namespace {

// Per-voxel, per-channel complex standard deviation over n replicas (1/(n-1)).
struct Moments
{
  Eigen::MatrixXcd sum;
  Eigen::MatrixXd sum2;
  int n = 0;

  void add(CoefficientImage const &x)
  {
    if (n == 0) {
      sum = Eigen::MatrixXcd::Zero(x.data.rows(), x.data.cols());
      sum2 = Eigen::MatrixXd::Zero(x.data.rows(), x.data.cols());
    }
    sum += x.data;
    sum2 += x.data.cwiseAbs2();
    ++n;
  }

  Eigen::MatrixXd std() const
  {
    Eigen::MatrixXd var = (sum2 - sum.cwiseAbs2() / n) / (n - 1);
    return var.cwiseMax(0.0).cwiseSqrt();
  }
};

Moments replicate(AcquisitionModel const &model, ReconFn const &fn, int n_iter, std::uint64_t seed)
{
  Moments m;
  int constexpr batch = 16;
  for (int b0 = 0; b0 < n_iter; b0 += batch) {
    int const nb = std::min(batch, n_iter - b0);
    std::vector<CoefficientImage> out(nb);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nb; ++i) {
      auto const y = complex_noise(model.n_samples(), model.n_coils(), 1.0, seed + b0 + i);
      out[i] = fn(model, y);
    }
    // ordered reduction keeps results independent of the thread count
    for (auto const &x : out) {
      m.add(x);
    }
  }
  return m;
}

} // namespace

GFactorReport gfactor_mc(
    AcquisitionModel const &model_accel, AcquisitionModel const &model_full, ReconFn const &recon_fn, int n_iter,
    std::uint64_t seed, std::vector<double> ratios, Mask support)
{
  require(n_iter >= 2, "gfactor: need at least two replicas");
  require(model_accel.dims() == model_full.dims(), "gfactor: model dims differ");
  Dims const d = model_accel.dims();
  if (support.empty()) {
    support.assign(d.size(), 1);
  }
  require(static_cast<int>(support.size()) == d.size(), "gfactor: support size mismatch");
  auto const acc = replicate(model_accel, recon_fn, n_iter, seed * 2654435761ull + 1);
  auto const ful = replicate(model_full, recon_fn, n_iter, seed * 2654435761ull + 0x9e3779b9ull);
  Eigen::MatrixXd const sa = acc.std();
  Eigen::MatrixXd const sf = ful.std();
  int const nch = static_cast<int>(sa.cols());
  require(sf.cols() == nch, "gfactor: reconstructions differ in channel count");
  if (ratios.empty()) {
    ratios = subspace_ratios(model_accel, model_full);
  }
  require(static_cast<int>(ratios.size()) == nch, "gfactor: one ratio per channel required");

  GFactorReport rep;
  rep.dims = d;
  rep.ratio = ratios;
  rep.support = support;
  rep.n_iter = n_iter;
  for (int c = 0; c < nch; ++c) {
    RealMap g(d.size(), 0.0);
    double sum = 0.0;
    double mx = 0.0;
    int n = 0;
    for (int q = 0; q < d.size(); ++q) {
      if (!support[q]) {
        continue;
      }
      g[q] = sf(q, c) > 0.0 ? sa(q, c) / sf(q, c) / std::sqrt(ratios[c]) : 0.0;
      sum += g[q];
      mx = std::max(mx, g[q]);
      ++n;
    }
    rep.g.push_back(std::move(g));
    rep.g_avg.push_back(n ? sum / n : 0.0);
    rep.g_max.push_back(mx);
  }
  return rep;
}

double rmse_percent(RealMap const &est, RealMap const &ref, Mask const &roi)
{
  require(est.size() == ref.size(), "rmse: size mismatch");
  require(roi.empty() || roi.size() == ref.size(), "rmse: roi size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    if (!roi.empty() && !roi[i]) {
      continue;
    }
    num += (est[i] - ref[i]) * (est[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  require(den > 0.0, "rmse: reference is zero over the ROI");
  return 100.0 * std::sqrt(num / den);
}

Regression regression(std::vector<double> const &x, std::vector<double> const &y)
{
  require(x.size() == y.size() && x.size() >= 2, "regression: need two or more paired values");
  double const n = static_cast<double>(x.size());
  double const mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double const my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, "regression: x has no spread");
  Regression r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return r;
}

BlandAltman bland_altman(std::vector<double> const &ref, std::vector<double> const &test)
{
  require(ref.size() == test.size() && !ref.empty(), "bland_altman: need paired values");
  std::vector<double> d(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) {
    require(ref[i] != 0.0, "bland_altman: zero reference value");
    d[i] = 100.0 * (ref[i] - test[i]) / ref[i];
  }
  BlandAltman b;
  b.n = static_cast<int>(d.size());
  b.bias_pct = std::accumulate(d.begin(), d.end(), 0.0) / b.n;
  if (b.n > 1) {
    double ss = 0.0;
    for (double v : d) {
      ss += (v - b.bias_pct) * (v - b.bias_pct);
    }
    b.sd_pct = std::sqrt(ss / (b.n - 1));
  }
  b.loa_low = b.bias_pct - 1.96 * b.sd_pct;
  b.loa_high = b.bias_pct + 1.96 * b.sd_pct;
  return b;
}

std::vector<RoiStats> cov_roi(RealMap const &map, LabelMap const &labels)
{
  require(map.size() == labels.size(), "cov_roi: size mismatch");
  int const top = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  std::vector<RoiStats> out;
  for (int l = 1; l <= top; ++l) {
    double s = 0.0;
    double s2 = 0.0;
    int n = 0;
    for (size_t i = 0; i < map.size(); ++i) {
      if (labels[i] == l) {
        s += map[i];
        ++n;
      }
    }
    if (n == 0) {
      continue;
    }
    double const mean = s / n;
    for (size_t i = 0; i < map.size(); ++i) {
      if (labels[i] == l) {
        s2 += (map[i] - mean) * (map[i] - mean);
      }
    }
    RoiStats r;
    r.label = l;
    r.n = n;
    r.mean = mean;
    r.std = std::sqrt(s2 / n);
    r.cov_pct = mean != 0.0 ? 100.0 * r.std / mean : 0.0;
    out.push_back(r);
  }
  return out;
}

double wilcoxon_signed_rank(std::vector<double> const &diffs)
{
  std::vector<double> nz;
  for (double v : diffs) {
    require(std::isfinite(v), "wilcoxon: non-finite difference");
    if (v != 0.0) {
      nz.push_back(v);
    }
  }
  int const n = static_cast<int>(nz.size());
  if (n == 0) {
    return 1.0;
  }
  // Doubled mid-ranks are integers.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(nz[a]) < std::abs(nz[b]); });
  std::vector<int> rank2(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) {
      ++j;
    }
    for (int k = i; k <= j; ++k) {
      rank2[order[k]] = i + j + 2;
    }
    i = j + 1;
  }
  int const total = std::accumulate(rank2.begin(), rank2.end(), 0);
  int w = 0;
  for (int i = 0; i < n; ++i) {
    w += nz[i] > 0.0 ? rank2[i] : 0;
  }
  // Number of sign assignments reaching each doubled positive-rank sum; the
  // same count as enumerating all 2^n patterns, without the exponential loop.
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  for (int r : rank2) {
    for (int s = total; s >= r; --s) {
      count[s] += count[s - r];
    }
  }
  int const dev = std::abs(2 * w - total);
  double hit = 0.0;
  double all = 0.0;
  for (int s = 0; s <= total; ++s) {
    all += count[s];
    if (std::abs(2 * s - total) >= dev) {
      hit += count[s];
    }
  }
  return std::min(1.0, hit / all);
}

double median(std::vector<double> v)
{
  require(!v.empty(), "median: empty input");
  auto const mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double const hi = *mid;
  if (v.size() % 2 == 1) {
    return hi;
  }
  return 0.5 * (hi + *std::max_element(v.begin(), mid));
}

} // namespace qsub
