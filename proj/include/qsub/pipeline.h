#pragma once

#include <memory>
#include <string>
#include <vector>

#include "acquisition.h"
#include "config.h"
#include "dictionary.h"
#include "evaluation.h"
#include "phantom.h"
#include "recon_classic.h"
#include "zerodeep.h"

namespace qsub {

// Dictionary, basis and matchers for one configuration.
struct Modeling
{
  BlockSchedule schedule;
  Dictionary dict;
  SubspaceBasis basis;
  double basis_error_pct = 0.0;
  std::shared_ptr<DictionaryMatcher const> subspace;
  std::shared_ptr<DictionaryMatcher const> five_point;
};

Modeling build_modeling(RunConfig const &cfg);

DigitalPhantom build_phantom(RunConfig const &cfg, ParameterGrid const &grid);
SamplingMask build_mask(RunConfig const &cfg, Dims dims, std::uint64_t seed);

// Everything up to the acquired, noisy k-space.
struct Scenario
{
  RunConfig cfg;
  Modeling modeling;
  DigitalPhantom phantom;
  SamplingMask mask;
  AcquisitionModel model;
  KSpaceData y;
  double noise_sigma = 0.0;
  Mask roi; // voxels scored by the metrics
};

Scenario build_scenario(RunConfig const &cfg);
Scenario build_scenario(RunConfig const &cfg, Modeling modeling);

// Ground-truth subspace coefficients of the phantom.
CoefficientImage true_coefficients(Scenario const &s);

struct MethodResult
{
  std::string method;
  double lambda = 0.0; // selected regularization (NaN where not applicable)
  ParameterMaps maps;
  CoefficientImage image; // subspace coefficients, or the five contrast images
  TrainHistory history;   // zerodeep only
};

MethodResult run_method(Scenario const &s, std::string const &method);

// Maps from subspace coefficients / five contrast images.
ParameterMaps match_subspace(Scenario const &s, CoefficientImage const &x);
ParameterMaps match_contrasts(Scenario const &s, CoefficientImage const &contrasts);

struct MapMetrics
{
  double rmse = 0.0;     // percent
  double bias = 0.0;     // Bland-Altman mean over ROI means, percent
  double cov = 0.0;      // mean within-ROI CoV, percent
};

struct MethodMetrics
{
  MapMetrics t1, t2, pd;
};

MethodMetrics evaluate_maps(Scenario const &s, ParameterMaps const &m);

struct SummaryRow
{
  std::string method;
  double lambda;
  MethodMetrics metrics;
};

std::string summary_csv(std::vector<SummaryRow> const &rows);
// epoch,train_loss,val_loss; val_loss empty on epochs without validation.
std::string history_csv(TrainHistory const &h);

struct PipelineOutput
{
  std::vector<MethodResult> results;
  std::vector<SummaryRow> summary;
};

// Runs every configured method on one scenario and writes outputs into dir
// when it is non-empty.
PipelineOutput run_pipeline(RunConfig const &cfg, std::string const &dir = {});

// g-factor of the subspace CG reconstruction and of the per-contrast SENSE
// reconstruction on the same masks.
struct GFactorComparison
{
  GFactorReport subspace;
  GFactorReport conventional;
  double subspace_mean = 0.0;     // mean of G_avg over channels
  double conventional_mean = 0.0;
};

GFactorComparison gfactor_compare(RunConfig const &cfg, Modeling const &modeling, int cg_iters = 100);

// File helpers.
void write_text(std::string const &path, std::string const &text);
// 8-bit binary PGM, min-max windowed.
void write_pgm(std::string const &path, RealMap const &m, Dims dims);
std::string fixed(double v, int digits = 6);

} // namespace qsub
