#pragma once

#include <random>

#include "qsub/acquisition.h"
#include "qsub/rng.h"

namespace qsub::test {

inline Eigen::MatrixXd random_basis(int t, int k, std::uint64_t seed)
{
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(t, k);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = g(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(t, k);
}

inline CoefficientImage random_image(Dims d, int k, std::uint64_t seed)
{
  auto rng = make_rng(seed, 2);
  std::normal_distribution<double> g;
  CoefficientImage x(d, k);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) {
    x.data.data()[i] = Cx(g(rng), g(rng));
  }
  return x;
}

inline KSpaceData noise_data(int rows, int cols, std::uint64_t seed) { return complex_noise(rows, cols, 1.0, seed); }

// Every echo samples each point with probability `density`.
inline std::vector<Sample> random_samples(Dims d, int echoes, double density, std::uint64_t seed)
{
  auto rng = make_rng(seed, 3);
  std::bernoulli_distribution keep(density);
  std::vector<Sample> s;
  for (int t = 0; t < echoes; ++t) {
    for (int q = 0; q < d.size(); ++q) {
      if (keep(rng)) {
        s.push_back({t, q});
      }
    }
  }
  return s;
}

inline AcquisitionModel random_model(Dims d, int k, int etl, int coils, std::uint64_t seed, double density = 0.4)
{
  int const t = etl * kReadouts;
  return AcquisitionModel(random_basis(t, k, seed), synth_coils(coils, d, seed), random_samples(d, t, density, seed),
                          etl);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

} // namespace qsub::test
