#pragma once

#include "types.h"

namespace qsub {

// Centered, unitary 2D DFT on a row-major ny x nz plane. Forward and inverse
// are exact adjoints of each other. Plans are cached per size and shared;
// transforms may run concurrently.
class Fft2
{
public:
  explicit Fft2(Dims dims);

  void forward(Cx *data) const;
  void inverse(Cx *data) const;

  Dims dims() const { return dims_; }

private:
  void run(Cx *data, bool forward) const;

  Dims dims_;
  void *plan_fwd_ = nullptr;
  void *plan_inv_ = nullptr;
  bool even_ = false;
  double sign_ = 1.0;
};

} // namespace qsub
