#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "acquisition.h"

namespace qsub {

using ReconFn = std::function<CoefficientImage(AcquisitionModel const &, KSpaceData const &)>;
using Mask = std::vector<std::uint8_t>;

struct GFactorReport
{
  Dims dims;
  std::vector<RealMap> g;       // per channel
  std::vector<double> ratio;    // undersampling factor R per channel
  std::vector<double> g_avg;    // over support
  std::vector<double> g_max;
  Mask support;
  int n_iter = 0;
};

// Sampled-point count ratio full / accelerated, one value for every channel.
std::vector<double> subspace_ratios(AcquisitionModel const &accel, AcquisitionModel const &full);
// Per contrast c: count_full(c) / count_accel(c).
std::vector<double> contrast_ratios(AcquisitionModel const &accel, AcquisitionModel const &full);

// Pseudo-multiple-replica g-factor: both models see unit-variance complex
// noise only; g = (sigma_accel / sigma_full) / sqrt(R). Empty ratios means
// subspace_ratios; empty support means every voxel.
GFactorReport gfactor_mc(
    AcquisitionModel const &model_accel, AcquisitionModel const &model_full, ReconFn const &recon_fn, int n_iter,
    std::uint64_t seed, std::vector<double> ratios = {}, Mask support = {});

// 100 ||est - ref|| / ||ref|| over the ROI (empty ROI mask: all voxels).
double rmse_percent(RealMap const &est, RealMap const &ref, Mask const &roi = {});

struct Regression
{
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

Regression regression(std::vector<double> const &x, std::vector<double> const &y);

// Differences are 100 (ref - test) / ref; LoA = bias +- 1.96 sd with the
// sample standard deviation.
struct BlandAltman
{
  double bias_pct = 0.0;
  double sd_pct = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  int n = 0;
};

BlandAltman bland_altman(std::vector<double> const &ref, std::vector<double> const &test);

struct RoiStats
{
  int label = 0;
  double mean = 0.0;
  double std = 0.0; // population
  double cov_pct = 0.0;
  int n = 0;
};

// One entry per positive label present in the map, ascending.
std::vector<RoiStats> cov_roi(RealMap const &map, LabelMap const &labels);

// Exact two-sided p-value of the signed-rank statistic over all 2^n sign
// assignments (zero differences dropped, ties mid-ranked).
double wilcoxon_signed_rank(std::vector<double> const &diffs);

double median(std::vector<double> v);

} // namespace qsub
