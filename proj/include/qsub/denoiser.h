#pragma once

#include <cstdint>
#include <vector>

#include "types.h"

namespace qsub {

inline constexpr double kLeakySlope = 0.05;
inline constexpr double kNormEps = 1e-5;

struct DenoiserShape
{
  int channels = 8; // 2K real channels (re/im interleaved per coefficient)
  int width = 16;   // hidden feature maps
  int blocks = 5;   // conv -> norm -> leaky ReLU blocks before the output conv
};

// All trainable scalars in one flat vector: per block [conv weights, conv
// bias, norm scale, norm shift], then the output conv [weights, bias], then
// rho with lambda_dc = softplus(rho).
class DenoiserParams
{
public:
  DenoiserParams() = default;
  explicit DenoiserParams(DenoiserShape shape);

  // He-normal hidden convolutions, unit norm scale, zero output convolution
  // (so the untrained network is the identity), lambda_dc = lambda0.
  static DenoiserParams initial(DenoiserShape shape, std::uint64_t seed, double lambda0 = 0.005);

  DenoiserShape const &shape() const { return shape_; }
  int layers() const { return shape_.blocks + 1; }
  int in_channels(int layer) const;
  int out_channels(int layer) const;

  // (in_channels * 9) x out_channels, row = c_in * 9 + (dy + 1) * 3 + (dz + 1).
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<Eigen::MatrixXd const> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<Eigen::VectorXd const> bias(int layer) const;
  Eigen::Map<Eigen::VectorXd> scale(int block);
  Eigen::Map<Eigen::VectorXd const> scale(int block) const;
  Eigen::Map<Eigen::VectorXd> shift(int block);
  Eigen::Map<Eigen::VectorXd const> shift(int block) const;

  double rho() const { return theta[rho_offset_]; }
  double &rho() { return theta[rho_offset_]; }
  double lambda() const;
  // d lambda / d rho
  double lambda_slope() const;
  static double rho_for(double lambda);

  Eigen::Index rho_offset() const { return rho_offset_; }

  Eigen::VectorXd theta;

private:
  struct Offsets
  {
    Eigen::Index weight, bias, scale, shift;
  };

  DenoiserShape shape_;
  std::vector<Offsets> offsets_;
  Eigen::Index rho_offset_ = 0;
};

struct DenoiserCache
{
  struct Layer
  {
    Eigen::MatrixXd input;  // N x C_in
    Eigen::MatrixXd xhat;   // normalized pre-activation (blocks only)
    Eigen::VectorXd inv_std;
    Eigen::MatrixXd normed; // after scale/shift, before leaky ReLU
  };
  std::vector<Layer> layers;
};

// 3x3 "same" convolution, zero padding. in: N x C_in, weight as above.
Eigen::MatrixXd conv3x3(
    Eigen::MatrixXd const &in, Dims dims, Eigen::Ref<Eigen::MatrixXd const> weight,
    Eigen::Ref<Eigen::VectorXd const> bias);
// Serial direct-loop reference of conv3x3.
Eigen::MatrixXd conv3x3_reference(
    Eigen::MatrixXd const &in, Dims dims, Eigen::Ref<Eigen::MatrixXd const> weight,
    Eigen::Ref<Eigen::VectorXd const> bias);

// Real-valued network on N x C inputs; output = input + f(input). Fills
// `cache` when non-null.
Eigen::MatrixXd denoise_real(
    DenoiserParams const &p, Eigen::MatrixXd const &in, Dims dims, DenoiserCache *cache = nullptr);

// Reverse pass. Adds parameter gradients into grad (size theta) and returns
// the gradient with respect to the input.
Eigen::MatrixXd denoise_real_backward(
    DenoiserParams const &p, DenoiserCache const &cache, Eigen::MatrixXd const &grad_out, Dims dims,
    Eigen::VectorXd &grad);

Eigen::MatrixXd to_real_channels(CoefficientImage const &x);
CoefficientImage from_real_channels(Eigen::MatrixXd const &r, Dims dims);
// Real-gradient convention: for real L, the complex gradient is dL/dRe + i dL/dIm.
Eigen::MatrixXd to_real_grad(CoefficientImage const &g);
CoefficientImage from_real_grad(Eigen::MatrixXd const &g, Dims dims);

CoefficientImage denoise(CoefficientImage const &x, DenoiserParams const &p);

} // namespace qsub
