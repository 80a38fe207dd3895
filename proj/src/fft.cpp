#include "qsub/fft.h"

#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include <fftw3.h>

#include "qsub/error.h"

namespace qsub {

namespace {

struct PlanPair
{
  fftw_plan fwd;
  fftw_plan inv;
};

std::mutex plan_mutex;
std::map<std::pair<int, int>, PlanPair> &plan_cache()
{
  static std::map<std::pair<int, int>, PlanPair> cache;
  return cache;
}

PlanPair plans_for(Dims d)
{
  std::lock_guard lock(plan_mutex);
  auto &cache = plan_cache();
  auto key = std::make_pair(d.ny, d.nz);
  auto it = cache.find(key);
  if (it != cache.end()) {
    return it->second;
  }
  auto *buf = fftw_alloc_complex(static_cast<size_t>(d.size()));
  // ESTIMATE keeps the chosen algorithm, and therefore the rounding, fixed
  // from run to run.
  unsigned const flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair p{
      fftw_plan_dft_2d(d.ny, d.nz, buf, buf, FFTW_FORWARD, flags),
      fftw_plan_dft_2d(d.ny, d.nz, buf, buf, FFTW_BACKWARD, flags)};
  fftw_free(buf);
  cache.emplace(key, p);
  return p;
}

void shift(Cx *data, Dims d, int sy, int sz, std::vector<Cx> &tmp)
{
  tmp.assign(data, data + d.size());
  for (int iy = 0; iy < d.ny; ++iy) {
    int const oy = (iy + sy) % d.ny;
    for (int iz = 0; iz < d.nz; ++iz) {
      int const oz = (iz + sz) % d.nz;
      data[oy * d.nz + oz] = tmp[iy * d.nz + iz];
    }
  }
}

} // namespace

Fft2::Fft2(Dims dims)
    : dims_(dims)
{
  if (dims.ny <= 0 || dims.nz <= 0) {
    throw InvalidInput("Fft2: non-positive dimensions");
  }
  auto p = plans_for(dims);
  plan_fwd_ = p.fwd;
  plan_inv_ = p.inv;
  even_ = dims.ny % 2 == 0 && dims.nz % 2 == 0;
  // For even sizes the centered transform is a checkerboard-modulated FFT with
  // a global sign (-1)^(ny/2 + nz/2).
  sign_ = ((dims.ny / 2 + dims.nz / 2) % 2 == 0) ? 1.0 : -1.0;
}

void Fft2::forward(Cx *data) const { run(data, true); }
void Fft2::inverse(Cx *data) const { run(data, false); }

void Fft2::run(Cx *data, bool fwd) const
{
  auto *plan = static_cast<fftw_plan>(fwd ? plan_fwd_ : plan_inv_);
  auto *raw = reinterpret_cast<fftw_complex *>(data);
  double const scale = 1.0 / std::sqrt(static_cast<double>(dims_.size()));
  if (even_) {
    for (int iy = 0; iy < dims_.ny; ++iy) {
      for (int iz = 0; iz < dims_.nz; ++iz) {
        if ((iy + iz) & 1) {
          data[iy * dims_.nz + iz] = -data[iy * dims_.nz + iz];
        }
      }
    }
    fftw_execute_dft(plan, raw, raw);
    double const s = sign_ * scale;
    for (int iy = 0; iy < dims_.ny; ++iy) {
      for (int iz = 0; iz < dims_.nz; ++iz) {
        double const f = ((iy + iz) & 1) ? -s : s;
        data[iy * dims_.nz + iz] *= f;
      }
    }
    return;
  }
  // ifftshift, transform, fftshift
  std::vector<Cx> tmp;
  shift(data, dims_, dims_.ny - dims_.ny / 2, dims_.nz - dims_.nz / 2, tmp);
  fftw_execute_dft(plan, raw, raw);
  for (int i = 0; i < dims_.size(); ++i) {
    data[i] *= scale;
  }
  shift(data, dims_, dims_.ny / 2, dims_.nz / 2, tmp);
}

} // namespace qsub
