#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acquisition.h"
#include "denoiser.h"

namespace qsub {

struct TrainConfig
{
  double mu = 0.5;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int splits = 20;         // B
  int epochs = 30;
  int steps_per_epoch = 0; // 0: one step per split set
  int val_every = 1;       // epochs
  int patience = 5;        // validations without improvement
  int unroll = 6;          // P
  int dc_cg_iters = 10;
  double dc_tol = 1e-12;
  double z_fraction = 0.2;
  double vw_ratio = 0.6;  // share of the non-Z points used for DC
  int width = 16;
  int blocks = 5;
  double lambda0 = 0.005;
  bool phase_normalization = false;
  std::uint64_t seed = 0;

  void validate() const;
  int steps() const { return steps_per_epoch > 0 ? steps_per_epoch : splits; }
};

// Sample indices (into model.samples()), ascending and pairwise disjoint.
struct SplitSpec
{
  std::vector<int> v;
  std::vector<int> w;
  std::vector<int> z;
};

// Z is drawn once from (seed) and is shared by every b_index; V/W are drawn
// per echo from (seed, b_index).
SplitSpec split_kspace(std::vector<Sample> const &samples, TrainConfig const &cfg, int b_index);

KSpaceData select_rows(KSpaceData const &y, std::vector<int> const &rows);

struct DcResult
{
  CoefficientImage x;
  double rel_residual = 0.0; // ||H x - (b + lambda z)|| / ||b + lambda z||
  int iterations = 0;
};

// (A^H A + lambda I)^{-1} (a_h_y + lambda z) by CG warm-started at z.
DcResult dc_solve(
    CoefficientImage const &z, CoefficientImage const &a_h_y, double lambda, AcquisitionModel const &model,
    int iters, double tol = 1e-12);

struct UnrollOptions
{
  int steps = 6;
  int cg_iters = 10;
  double cg_tol = 1e-12;
  bool phase_normalization = false;
};

struct UnrollCache
{
  struct Step
  {
    CoefficientImage x_in; // x_p
    CoefficientImage z;    // D(x_p)
    CoefficientImage x_out; // x_{p+1}
    CoefficientImage den_out; // denoiser output before the phase is re-applied
    Eigen::VectorXcd phase;
    Eigen::VectorXd magnitude;
    DenoiserCache net;
  };
  std::vector<Step> steps;
  std::vector<double> dc_residuals;
};

CoefficientImage unroll(
    CoefficientImage const &a_h_y, AcquisitionModel const &model, DenoiserParams const &params,
    UnrollOptions const &opt, UnrollCache *cache = nullptr);

// Reverse pass for x_bar = dL/dx_P. Returns dL/dtheta.
Eigen::VectorXd unroll_backward(
    UnrollCache const &cache, CoefficientImage const &x_bar, AcquisitionModel const &model,
    DenoiserParams const &params, UnrollOptions const &opt);

struct LossValue
{
  double total = 0.0;
  double l1 = 0.0;
  double l2 = 0.0; // squared
};

// mu ||y_t - A_t x||_1 + (1 - mu) ||y_t - A_t x||_2^2. When grad_x is given it
// receives dL/dx.
LossValue loss(
    KSpaceData const &y_target, CoefficientImage const &x, AcquisitionModel const &model_target, double mu,
    CoefficientImage *grad_x = nullptr);

struct LossGrad
{
  LossValue loss;
  Eigen::VectorXd grad;
};

LossGrad loss_and_grad(
    DenoiserParams const &params, CoefficientImage const &a_h_y_dc, AcquisitionModel const &model_dc,
    KSpaceData const &y_target, AcquisitionModel const &model_target, double mu, UnrollOptions const &opt);

struct TrainHistory
{
  std::vector<double> train_loss; // per epoch, mean over its steps
  std::vector<int> val_epoch;     // epoch of each validation (0 = before training)
  std::vector<double> val_loss;
  int best_epoch = 0;
  double best_val = 0.0;
  int steps = 0;
  bool early_stopped = false;
};

struct TrainedModel
{
  DenoiserParams params;
  double data_scale = 1.0; // applied to k-space before the network sees it
  UnrollOptions unroll;
  TrainHistory history;
};

UnrollOptions unroll_options(TrainConfig const &cfg);
// max |A^H y| of channel 0 mapped to 1.
double data_scale_for(KSpaceData const &y, AcquisitionModel const &model);

TrainedModel train(KSpaceData const &y, AcquisitionModel const &model, TrainConfig const &cfg);

CoefficientImage infer(KSpaceData const &y, AcquisitionModel const &model, TrainedModel const &trained);

void save_checkpoint(std::string const &path, TrainedModel const &m, TrainConfig const &cfg);
TrainedModel load_checkpoint(std::string const &path);

} // namespace qsub
