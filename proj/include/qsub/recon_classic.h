#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acquisition.h"

namespace qsub {

enum class SolverMethod
{
  Cg,
  Llr,
  Wavelet
};

SolverMethod parse_solver_method(std::string const &s);
std::string to_string(SolverMethod m);

struct SolverConfig
{
  SolverMethod method = SolverMethod::Cg;
  double lambda = 0.0;
  int max_iters = 100;
  double tol = 1e-6;
  int llr_block = 8;
  int wavelet_levels = 3;
  std::uint64_t seed = 0; // power iteration start
};

struct SolveResult
{
  CoefficientImage x;
  // CG: relative residual per iteration. FISTA: objective per iteration,
  // starting with the objective at the initial point.
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

using LinearOp = std::function<CoefficientImage(CoefficientImage const &)>;

// Conjugate gradient for a Hermitian positive (semi)definite operator.
SolveResult conjugate_gradient(
    LinearOp const &op, CoefficientImage const &rhs, CoefficientImage x0, int max_iters, double tol);

// CG on A^H A x = A^H y using the kernel-based normal operator; starts at 0.
SolveResult recon_cg(KSpaceData const &y, AcquisitionModel const &model, SolverConfig const &cfg);

// Blockwise singular-value soft-thresholding of the (block^2) x K Casorati
// matrices of non-overlapping tiles. Edge tiles are cropped.
CoefficientImage prox_llr(CoefficientImage const &x, double thresh, int block);
double llr_norm(CoefficientImage const &x, int block);

// Orthonormal multilevel Haar transform in Mallat layout, per channel. The
// number of levels is reduced while the current band has an odd size.
void haar_forward(Cx *plane, Dims dims, int levels);
void haar_inverse(Cx *plane, Dims dims, int levels);
int haar_levels(Dims dims, int requested);
// Approximation band extent after the transform.
Dims haar_approx_dims(Dims dims, int levels);

// Complex soft-thresholding of the detail coefficients; the approximation band
// is left untouched.
CoefficientImage prox_wavelet(CoefficientImage const &x, double thresh, int levels = 3);
double wavelet_norm(CoefficientImage const &x, int levels);

// Largest eigenvalue of the operator by power iteration from a seeded random
// start.
double power_iteration(LinearOp const &op, Dims dims, int channels, int iters, std::uint64_t seed);
double lipschitz_power_iter(AcquisitionModel const &model, int iters = 30, std::uint64_t seed = 0);

// FISTA on 1/2 ||y - A x||^2 + lambda R(x), starting at A^H y. On an objective
// increase the momentum is reset and a plain proximal-gradient step is taken
// instead, so the objective history is non-increasing.
SolveResult recon_fista(KSpaceData const &y, AcquisitionModel const &model, SolverConfig const &cfg);

// Generic form used by both the subspace and the per-contrast solvers.
SolveResult fista(
    LinearOp const &normal,
    CoefficientImage const &aty,
    double y_norm2,
    SolverConfig const &cfg,
    double lipschitz);

// SENSE model of one contrast: every sample of contrast c collapsed to a
// single image (basis [1], one echo).
AcquisitionModel contrast_model(AcquisitionModel const &subspace_model, int contrast);
KSpaceData contrast_data(AcquisitionModel const &subspace_model, KSpaceData const &y, int contrast);

// Conventional reconstruction: each of the five contrasts is solved with its
// own SENSE model and l1-Haar regularization. Returns five channels.
CoefficientImage recon_contrast_pics(
    KSpaceData const &y, AcquisitionModel const &subspace_model, double lambda, int max_iters = 100,
    double tol = 1e-6);

} // namespace qsub
