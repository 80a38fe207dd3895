#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace qsub {

using Cx = std::complex<double>;

// Image plane over the phase-encode directions (ky, kz). Voxel / k-point index
// is row-major: q = iy * nz + iz.
struct Dims
{
  int ny = 0;
  int nz = 0;

  int size() const { return ny * nz; }
  bool operator==(Dims const &) const = default;
};

// K complex coefficient channels over the image plane. Column k of `data` is
// channel k; row q is the coefficient vector of voxel q.
struct CoefficientImage
{
  Dims dims;
  Eigen::MatrixXcd data;

  CoefficientImage() = default;
  CoefficientImage(Dims d, int channels)
      : dims(d)
      , data(Eigen::MatrixXcd::Zero(d.size(), channels))
  {
  }

  int channels() const { return static_cast<int>(data.cols()); }
};

inline Cx dot(CoefficientImage const &a, CoefficientImage const &b)
{
  return (a.data.array().conjugate() * b.data.array()).sum();
}

inline double norm(CoefficientImage const &a) { return a.data.norm(); }

// Real-valued map over the image plane, row-major.
using RealMap = std::vector<double>;
using LabelMap = std::vector<int>;

} // namespace qsub
