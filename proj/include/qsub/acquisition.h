#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dictionary.h"
#include "fft.h"
#include "phantom.h"
#include "types.h"

namespace qsub {

// One boolean (ky, kz) grid per contrast.
struct SamplingMask
{
  Dims dims;
  std::vector<std::vector<std::uint8_t>> contrast; // kReadouts grids
  double ry = 1.0;
  double rz = 1.0;
  std::string pattern;
  std::uint64_t seed = 0;

  int count(int c) const;
  int total() const;
};

// Regular (ry, rz) lattice shifted per contrast by (0,0), (1,0), (0,1), (1,1), (1,0).
SamplingMask make_uniform_mask(Dims dims, int ry, int rz, std::uint64_t seed = 0);

// Variable-density Poisson-disc pattern with a fully sampled 4x4 centre. Each
// contrast draws its own effective (ry, rz) within +-jitter_pct of nominal.
// With vary_across_contrasts = false, every contrast reuses contrast 0.
SamplingMask make_poisson_mask(
    Dims dims, double ry, double rz, double jitter_pct, std::uint64_t seed,
    bool vary_across_contrasts = true);

// Echo index per contrast and point, -1 where not sampled.
struct EchoOrdering
{
  int etl = 1;
  std::vector<std::vector<int>> echo;
};

// Centre-out: points sorted by distance from the k-space centre (ties by
// (ky, kz)), rank r is acquired at echo min(r / shots, etl - 1).
EchoOrdering assign_echo_ordering(SamplingMask const &mask, int etl);

// One acquired k-space location of one echo. echo in [0, T), point = ky*nz + kz.
struct Sample
{
  int echo;
  int point;
};

// Sorted by (echo, point); echo t = contrast * etl + ordering index.
std::vector<Sample> samples_from(SamplingMask const &mask, EchoOrdering const &ordering);

struct CoilSet
{
  Dims dims;
  Eigen::MatrixXcd maps; // N x L

  int count() const { return static_cast<int>(maps.cols()); }
};

CoilSet synth_coils(int coils, Dims dims, std::uint64_t seed);

// Per k-space point, the K x K matrix sum_t m_t(q) phi_t phi_t^T. Real because
// the basis is real; stored as N blocks of K*K doubles, row-major.
struct SpatioTemporalKernel
{
  Dims dims;
  int k = 0;
  std::vector<double> blocks;

  double const *at(int q) const { return blocks.data() + static_cast<size_t>(q) * k * k; }
};

SpatioTemporalKernel precompute_kernel(
    Eigen::MatrixXd const &phi, std::vector<Sample> const &samples, Dims dims);
// Serial reference: explicit sum over every echo's mask.
SpatioTemporalKernel precompute_kernel_reference(
    Eigen::MatrixXd const &phi, std::vector<Sample> const &samples, Dims dims);

// Multi-coil undersampled Fourier model A = M F C Phi.
class AcquisitionModel
{
public:
  AcquisitionModel(Eigen::MatrixXd phi, CoilSet coils, std::vector<Sample> samples, int etl);

  Dims dims() const { return coils_.dims; }
  int rank() const { return static_cast<int>(phi_.cols()); }
  int echoes() const { return static_cast<int>(phi_.rows()); }
  int etl() const { return etl_; }
  int n_samples() const { return static_cast<int>(samples_.size()); }
  int n_coils() const { return coils_.count(); }

  Eigen::MatrixXd const &phi() const { return phi_; }
  CoilSet const &coils() const { return coils_; }
  std::vector<Sample> const &samples() const { return samples_; }
  SpatioTemporalKernel const &kernel() const { return kernel_; }
  Fft2 const &fft() const { return fft_; }

  // Model restricted to the given sample indices (ascending).
  AcquisitionModel subset(std::vector<int> const &indices) const;
  // Number of samples whose echo lies in contrast c.
  int contrast_count(int c) const;

private:
  Eigen::MatrixXd phi_;
  CoilSet coils_;
  std::vector<Sample> samples_;
  int etl_;
  SpatioTemporalKernel kernel_;
  Fft2 fft_;
};

// Values at the model's samples, n_samples x L.
struct KSpaceData
{
  Eigen::MatrixXcd values;
};

KSpaceData forward(AcquisitionModel const &model, CoefficientImage const &x);
CoefficientImage adjoint(AcquisitionModel const &model, KSpaceData const &y);
// C^H F^H (Phi^T M Phi) F C x with K*L transforms, parallel over coils.
CoefficientImage normal_apply(AcquisitionModel const &model, CoefficientImage const &x);

// Serial references evaluated per echo with T*L transforms, in the literal
// operator order.
KSpaceData forward_naive(AcquisitionModel const &model, CoefficientImage const &x);
CoefficientImage normal_naive(AcquisitionModel const &model, CoefficientImage const &x);

struct AcquireOptions
{
  double noise_sigma = 0.0; // complex std: E|n|^2 = sigma^2
  bool truncated = false;   // pass echo images through Phi Phi^T first
  std::uint64_t seed = 0;
};

// Simulates every voxel's evolution and samples the coil-weighted echo images.
KSpaceData acquire(
    DigitalPhantom const &phantom,
    BlockSchedule const &schedule,
    AcquisitionModel const &model,
    AcquireOptions const &opt = {});

// Complex Gaussian noise with E|n|^2 = sigma^2 per entry.
KSpaceData complex_noise(int rows, int cols, double sigma, std::uint64_t seed);

} // namespace qsub
