#include "qsub/acquisition.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include "qsub/error.h"
#include "qsub/rng.h"

namespace qsub {

int SamplingMask::count(int c) const
{
  int n = 0;
  for (auto v : contrast[c]) {
    n += v ? 1 : 0;
  }
  return n;
}

int SamplingMask::total() const
{
  int n = 0;
  for (int c = 0; c < static_cast<int>(contrast.size()); ++c) {
    n += count(c);
  }
  return n;
}

SamplingMask make_uniform_mask(Dims dims, int ry, int rz, std::uint64_t seed)
{
  require(dims.size() > 0, "make_uniform_mask: empty dims");
  require(ry >= 1 && rz >= 1, "make_uniform_mask: reduction factors must be >= 1");
  static constexpr std::array<std::array<int, 2>, kReadouts> shifts{
      {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {1, 0}}};
  SamplingMask m;
  m.dims = dims;
  m.ry = ry;
  m.rz = rz;
  m.pattern = "uniform";
  m.seed = seed;
  for (int c = 0; c < kReadouts; ++c) {
    std::vector<std::uint8_t> grid(dims.size(), 0);
    int const dy = shifts[c][0] % ry;
    int const dz = shifts[c][1] % rz;
    for (int iy = dy; iy < dims.ny; iy += ry) {
      for (int iz = dz; iz < dims.nz; iz += rz) {
        grid[iy * dims.nz + iz] = 1;
      }
    }
    m.contrast.push_back(std::move(grid));
  }
  return m;
}

namespace {

// Dart throwing over a fixed random visiting order. The exclusion radius grows
// linearly from the centre; `scale` sets the overall density.
std::vector<std::uint8_t> poisson_disc(
    Dims dims, double aniso, double scale, std::vector<int> const &order)
{
  int const cy = dims.ny / 2;
  int const cz = dims.nz / 2;
  double const sy = std::sqrt(aniso);
  double const sz = 1.0 / sy;
  std::vector<std::uint8_t> grid(dims.size(), 0);
  for (int iy = cy - 2; iy < cy + 2; ++iy) {
    for (int iz = cz - 2; iz < cz + 2; ++iz) {
      if (iy >= 0 && iy < dims.ny && iz >= 0 && iz < dims.nz) {
        grid[iy * dims.nz + iz] = 1;
      }
    }
  }
  auto radius = [&](int iy, int iz) {
    double const u = (iy - cy) / (0.5 * dims.ny);
    double const v = (iz - cz) / (0.5 * dims.nz);
    double const rho = std::sqrt(0.5 * (u * u + v * v));
    return scale * (0.5 + rho);
  };
  double const rmax = scale * (0.5 + 1.0);
  int const wy = static_cast<int>(std::ceil(rmax / sy)) + 1;
  int const wz = static_cast<int>(std::ceil(rmax / sz)) + 1;
  for (int q : order) {
    int const iy = q / dims.nz;
    int const iz = q % dims.nz;
    if (grid[q]) {
      continue;
    }
    double const r = radius(iy, iz);
    double const r2 = r * r;
    bool ok = true;
    for (int jy = std::max(0, iy - wy); ok && jy <= std::min(dims.ny - 1, iy + wy); ++jy) {
      for (int jz = std::max(0, iz - wz); jz <= std::min(dims.nz - 1, iz + wz); ++jz) {
        if (!grid[jy * dims.nz + jz]) {
          continue;
        }
        double const dy = (jy - iy) * sy;
        double const dz = (jz - iz) * sz;
        if (dy * dy + dz * dz < r2) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      grid[q] = 1;
    }
  }
  return grid;
}

std::vector<std::uint8_t> poisson_contrast(Dims dims, double ry, double rz, std::mt19937_64 &rng)
{
  int const n = dims.size();
  if (ry * rz <= 1.0) {
    return std::vector<std::uint8_t>(n, 1);
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    order[i] = i;
  }
  std::shuffle(order.begin(), order.end(), rng);
  double const target = n / (ry * rz);
  double const aniso = rz / ry; // stretches ky distances when ry > rz
  auto count = [](std::vector<std::uint8_t> const &g) {
    return static_cast<double>(std::count(g.begin(), g.end(), std::uint8_t{1}));
  };
  double lo = 0.0;
  double hi = 2.0 * std::sqrt(ry * rz) + 2.0;
  auto best = poisson_disc(dims, aniso, hi, order);
  double best_err = std::abs(count(best) - target);
  for (int it = 0; it < 40; ++it) {
    double const mid = 0.5 * (lo + hi);
    auto g = poisson_disc(dims, aniso, mid, order);
    double const c = count(g);
    double const err = std::abs(c - target);
    if (err < best_err) {
      best_err = err;
      best = std::move(g);
    }
    if (c > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return best;
}

} // namespace

SamplingMask make_poisson_mask(
    Dims dims, double ry, double rz, double jitter_pct, std::uint64_t seed, bool vary_across_contrasts)
{
  require(dims.size() > 0, "make_poisson_mask: empty dims");
  require(ry >= 1.0 && rz >= 1.0, "make_poisson_mask: reduction factors must be >= 1");
  require(jitter_pct >= 0.0, "make_poisson_mask: jitter must be non-negative");
  SamplingMask m;
  m.dims = dims;
  m.ry = ry;
  m.rz = rz;
  m.pattern = "poisson";
  m.seed = seed;
  for (int c = 0; c < kReadouts; ++c) {
    if (c > 0 && !vary_across_contrasts) {
      m.contrast.push_back(m.contrast[0]);
      continue;
    }
    auto rng = make_rng(seed, static_cast<std::uint64_t>(c));
    std::uniform_real_distribution<double> jitter(-jitter_pct / 100.0, jitter_pct / 100.0);
    double const ry_c = ry * (1.0 + jitter(rng));
    double const rz_c = rz * (1.0 + jitter(rng));
    m.contrast.push_back(poisson_contrast(dims, ry_c, rz_c, rng));
  }
  return m;
}

EchoOrdering assign_echo_ordering(SamplingMask const &mask, int etl)
{
  require(etl >= 1, "assign_echo_ordering: etl must be >= 1");
  Dims const d = mask.dims;
  int const cy = d.ny / 2;
  int const cz = d.nz / 2;
  EchoOrdering o;
  o.etl = etl;
  for (auto const &grid : mask.contrast) {
    std::vector<std::tuple<int, int, int>> pts; // (dist^2, iy, iz)
    for (int iy = 0; iy < d.ny; ++iy) {
      for (int iz = 0; iz < d.nz; ++iz) {
        if (grid[iy * d.nz + iz]) {
          pts.emplace_back((iy - cy) * (iy - cy) + (iz - cz) * (iz - cz), iy, iz);
        }
      }
    }
    std::sort(pts.begin(), pts.end());
    int const count = static_cast<int>(pts.size());
    int const shots = std::max(1, (count + etl - 1) / etl);
    std::vector<int> echo(d.size(), -1);
    for (int r = 0; r < count; ++r) {
      auto const [dist, iy, iz] = pts[r];
      echo[iy * d.nz + iz] = std::min(r / shots, etl - 1);
    }
    o.echo.push_back(std::move(echo));
  }
  return o;
}

std::vector<Sample> samples_from(SamplingMask const &mask, EchoOrdering const &ordering)
{
  require(mask.contrast.size() == ordering.echo.size(), "samples_from: contrast count mismatch");
  std::vector<Sample> s;
  for (int c = 0; c < static_cast<int>(mask.contrast.size()); ++c) {
    for (int q = 0; q < mask.dims.size(); ++q) {
      if (mask.contrast[c][q]) {
        s.push_back({c * ordering.etl + ordering.echo[c][q], q});
      }
    }
  }
  std::sort(s.begin(), s.end(), [](Sample const &a, Sample const &b) {
    return std::tie(a.echo, a.point) < std::tie(b.echo, b.point);
  });
  return s;
}

CoilSet synth_coils(int coils, Dims dims, std::uint64_t seed)
{
  require(coils >= 1, "synth_coils: need at least one coil");
  require(dims.size() > 0, "synth_coils: empty dims");
  auto rng = make_rng(seed, 0xc011);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  CoilSet c;
  c.dims = dims;
  c.maps.resize(dims.size(), coils);
  double const cy = 0.5 * (dims.ny - 1);
  double const cz = 0.5 * (dims.nz - 1);
  double const ring = 0.6 * std::max(dims.ny, dims.nz);
  double const width = 0.45 * std::max(dims.ny, dims.nz);
  for (int l = 0; l < coils; ++l) {
    double const angle = 2.0 * std::numbers::pi * (l + 0.15 * unit(rng)) / coils;
    double const py = cy + ring * std::cos(angle);
    double const pz = cz + ring * std::sin(angle);
    double const ky = 0.5 * std::numbers::pi * unit(rng) / dims.ny;
    double const kz = 0.5 * std::numbers::pi * unit(rng) / dims.nz;
    double const phase0 = std::numbers::pi * unit(rng);
    for (int iy = 0; iy < dims.ny; ++iy) {
      for (int iz = 0; iz < dims.nz; ++iz) {
        double const r2 = (iy - py) * (iy - py) + (iz - pz) * (iz - pz);
        double const mag = std::exp(-r2 / (2.0 * width * width));
        double const ph = phase0 + ky * (iy - cy) + kz * (iz - cz);
        c.maps(iy * dims.nz + iz, l) = std::polar(mag, ph);
      }
    }
  }
  for (int q = 0; q < dims.size(); ++q) {
    double const sos = c.maps.row(q).norm();
    c.maps.row(q) /= sos;
  }
  return c;
}

SpatioTemporalKernel precompute_kernel(
    Eigen::MatrixXd const &phi, std::vector<Sample> const &samples, Dims dims)
{
  int const K = static_cast<int>(phi.cols());
  SpatioTemporalKernel ker;
  ker.dims = dims;
  ker.k = K;
  ker.blocks.assign(static_cast<size_t>(dims.size()) * K * K, 0.0);
  // Group samples by point so each thread owns whole blocks.
  std::vector<int> start(dims.size() + 1, 0);
  for (auto const &s : samples) {
    ++start[s.point + 1];
  }
  for (int q = 0; q < dims.size(); ++q) {
    start[q + 1] += start[q];
  }
  std::vector<int> echoes(samples.size());
  {
    auto fill = start;
    for (auto const &s : samples) {
      echoes[fill[s.point]++] = s.echo;
    }
  }
#pragma omp parallel for schedule(static)
  for (int q = 0; q < dims.size(); ++q) {
    double *blk = ker.blocks.data() + static_cast<size_t>(q) * K * K;
    for (int j = start[q]; j < start[q + 1]; ++j) {
      int const t = echoes[j];
      for (int a = 0; a < K; ++a) {
        double const pa = phi(t, a);
        for (int b = 0; b < K; ++b) {
          blk[a * K + b] += pa * phi(t, b);
        }
      }
    }
  }
  return ker;
}

SpatioTemporalKernel precompute_kernel_reference(
    Eigen::MatrixXd const &phi, std::vector<Sample> const &samples, Dims dims)
{
  int const K = static_cast<int>(phi.cols());
  int const T = static_cast<int>(phi.rows());
  SpatioTemporalKernel ker;
  ker.dims = dims;
  ker.k = K;
  ker.blocks.assign(static_cast<size_t>(dims.size()) * K * K, 0.0);
  for (int t = 0; t < T; ++t) {
    std::vector<std::uint8_t> mask(dims.size(), 0);
    for (auto const &s : samples) {
      if (s.echo == t) {
        mask[s.point] = 1;
      }
    }
    Eigen::MatrixXd const outer = phi.row(t).transpose() * phi.row(t);
    for (int q = 0; q < dims.size(); ++q) {
      if (!mask[q]) {
        continue;
      }
      for (int a = 0; a < K; ++a) {
        for (int b = 0; b < K; ++b) {
          ker.blocks[static_cast<size_t>(q) * K * K + a * K + b] += outer(a, b);
        }
      }
    }
  }
  return ker;
}

AcquisitionModel::AcquisitionModel(Eigen::MatrixXd phi, CoilSet coils, std::vector<Sample> samples, int etl)
    : phi_(std::move(phi))
    , coils_(std::move(coils))
    , samples_(std::move(samples))
    , etl_(etl)
    , fft_(coils_.dims)
{
  require(phi_.cols() >= 1, "AcquisitionModel: basis must have at least one column");
  require(etl_ >= 1 && phi_.rows() % etl_ == 0, "AcquisitionModel: echo count must be a multiple of etl");
  require(coils_.maps.rows() == coils_.dims.size(), "AcquisitionModel: coil map size mismatch");
  for (size_t i = 0; i < samples_.size(); ++i) {
    auto const &s = samples_[i];
    require(i == 0 || samples_[i - 1].echo <= s.echo, "AcquisitionModel: samples must be ordered by echo");
    require(s.echo >= 0 && s.echo < phi_.rows(), "AcquisitionModel: sample echo out of range");
    require(s.point >= 0 && s.point < coils_.dims.size(), "AcquisitionModel: sample point out of range");
  }
  kernel_ = precompute_kernel(phi_, samples_, coils_.dims);
}

AcquisitionModel AcquisitionModel::subset(std::vector<int> const &indices) const
{
  std::vector<Sample> s;
  s.reserve(indices.size());
  for (int i : indices) {
    s.push_back(samples_.at(i));
  }
  return AcquisitionModel(phi_, coils_, std::move(s), etl_);
}

int AcquisitionModel::contrast_count(int c) const
{
  int n = 0;
  for (auto const &s : samples_) {
    n += (s.echo / etl_ == c) ? 1 : 0;
  }
  return n;
}

namespace {

void check_image(AcquisitionModel const &m, CoefficientImage const &x)
{
  require(x.dims == m.dims(), "operator: image dims mismatch");
  require(x.channels() == m.rank(), "operator: channel count mismatch");
}

void check_data(AcquisitionModel const &m, KSpaceData const &y)
{
  require(y.values.rows() == m.n_samples(), "operator: sample count mismatch");
  require(y.values.cols() == m.n_coils(), "operator: coil count mismatch");
}

// F (c_l * x_k) for every channel k, as N x K.
Eigen::MatrixXcd coil_spectra(AcquisitionModel const &m, CoefficientImage const &x, int l)
{
  Eigen::MatrixXcd X(x.data.rows(), x.channels());
  for (int k = 0; k < x.channels(); ++k) {
    X.col(k) = x.data.col(k).cwiseProduct(m.coils().maps.col(l));
    m.fft().forward(X.col(k).data());
  }
  return X;
}

// sum_l conj(c_l) F^H Z_l, with the per-coil terms reduced in coil order.
CoefficientImage combine(AcquisitionModel const &m, std::vector<Eigen::MatrixXcd> &per_coil)
{
  CoefficientImage out(m.dims(), static_cast<int>(per_coil.front().cols()));
  for (int l = 0; l < m.n_coils(); ++l) {
    out.data += m.coils().maps.col(l).conjugate().asDiagonal() * per_coil[l];
  }
  return out;
}

} // namespace

KSpaceData forward(AcquisitionModel const &m, CoefficientImage const &x)
{
  check_image(m, x);
  KSpaceData y;
  y.values.resize(m.n_samples(), m.n_coils());
  auto const &samples = m.samples();
  int const K = m.rank();
#pragma omp parallel for schedule(static)
  for (int l = 0; l < m.n_coils(); ++l) {
    Eigen::MatrixXcd const X = coil_spectra(m, x, l);
    for (int s = 0; s < m.n_samples(); ++s) {
      Cx acc{};
      for (int k = 0; k < K; ++k) {
        acc += m.phi()(samples[s].echo, k) * X(samples[s].point, k);
      }
      y.values(s, l) = acc;
    }
  }
  return y;
}

CoefficientImage adjoint(AcquisitionModel const &m, KSpaceData const &y)
{
  check_data(m, y);
  int const K = m.rank();
  int const N = m.dims().size();
  auto const &samples = m.samples();
  std::vector<Eigen::MatrixXcd> per_coil(m.n_coils());
#pragma omp parallel for schedule(static)
  for (int l = 0; l < m.n_coils(); ++l) {
    Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(N, K);
    for (int s = 0; s < m.n_samples(); ++s) {
      Cx const v = y.values(s, l);
      for (int k = 0; k < K; ++k) {
        Z(samples[s].point, k) += m.phi()(samples[s].echo, k) * v;
      }
    }
    for (int k = 0; k < K; ++k) {
      m.fft().inverse(Z.col(k).data());
    }
    per_coil[l] = std::move(Z);
  }
  return combine(m, per_coil);
}

CoefficientImage normal_apply(AcquisitionModel const &m, CoefficientImage const &x)
{
  check_image(m, x);
  int const K = m.rank();
  int const N = m.dims().size();
  auto const &ker = m.kernel();
  std::vector<Eigen::MatrixXcd> per_coil(m.n_coils());
#pragma omp parallel for schedule(static)
  for (int l = 0; l < m.n_coils(); ++l) {
    Eigen::MatrixXcd X = coil_spectra(m, x, l);
    Eigen::VectorXcd v(K);
    for (int q = 0; q < N; ++q) {
      double const *blk = ker.at(q);
      for (int a = 0; a < K; ++a) {
        Cx acc{};
        for (int b = 0; b < K; ++b) {
          acc += blk[a * K + b] * X(q, b);
        }
        v[a] = acc;
      }
      X.row(q) = v.transpose();
    }
    for (int k = 0; k < K; ++k) {
      m.fft().inverse(X.col(k).data());
    }
    per_coil[l] = std::move(X);
  }
  return combine(m, per_coil);
}

namespace {

std::vector<int> echo_offsets(AcquisitionModel const &m)
{
  std::vector<int> off(m.echoes() + 1, 0);
  for (auto const &s : m.samples()) {
    ++off[s.echo + 1];
  }
  for (int t = 0; t < m.echoes(); ++t) {
    off[t + 1] += off[t];
  }
  return off;
}

} // namespace

KSpaceData forward_naive(AcquisitionModel const &m, CoefficientImage const &x)
{
  check_image(m, x);
  int const N = m.dims().size();
  auto const off = echo_offsets(m);
  KSpaceData y;
  y.values.resize(m.n_samples(), m.n_coils());
  Eigen::VectorXcd buf(N);
  for (int t = 0; t < m.echoes(); ++t) {
    if (off[t] == off[t + 1]) {
      continue;
    }
    Eigen::VectorXcd const echo = x.data * m.phi().row(t).transpose().cast<Cx>();
    for (int l = 0; l < m.n_coils(); ++l) {
      buf = echo.cwiseProduct(m.coils().maps.col(l));
      m.fft().forward(buf.data());
      for (int s = off[t]; s < off[t + 1]; ++s) {
        y.values(s, l) = buf[m.samples()[s].point];
      }
    }
  }
  return y;
}

CoefficientImage normal_naive(AcquisitionModel const &m, CoefficientImage const &x)
{
  check_image(m, x);
  int const N = m.dims().size();
  int const K = m.rank();
  auto const off = echo_offsets(m);
  CoefficientImage out(m.dims(), K);
  Eigen::VectorXcd buf(N);
  Eigen::VectorXcd masked(N);
  for (int t = 0; t < m.echoes(); ++t) {
    Eigen::VectorXcd const echo = x.data * m.phi().row(t).transpose().cast<Cx>();
    Eigen::VectorXcd back = Eigen::VectorXcd::Zero(N);
    for (int l = 0; l < m.n_coils(); ++l) {
      buf = echo.cwiseProduct(m.coils().maps.col(l));
      m.fft().forward(buf.data());
      masked.setZero();
      for (int s = off[t]; s < off[t + 1]; ++s) {
        int const q = m.samples()[s].point;
        masked[q] = buf[q];
      }
      m.fft().inverse(masked.data());
      back += m.coils().maps.col(l).conjugate().cwiseProduct(masked);
    }
    for (int k = 0; k < K; ++k) {
      out.data.col(k) += m.phi()(t, k) * back;
    }
  }
  return out;
}

KSpaceData complex_noise(int rows, int cols, double sigma, std::uint64_t seed)
{
  auto rng = make_rng(seed, 0x9015e);
  std::normal_distribution<double> g(0.0, sigma / std::sqrt(2.0));
  KSpaceData n;
  n.values.resize(rows, cols);
  for (int l = 0; l < cols; ++l) {
    for (int s = 0; s < rows; ++s) {
      double const re = g(rng);
      double const im = g(rng);
      n.values(s, l) = Cx(re, im);
    }
  }
  return n;
}

KSpaceData acquire(
    DigitalPhantom const &phantom, BlockSchedule const &schedule, AcquisitionModel const &m, AcquireOptions const &opt)
{
  require(phantom.dims == m.dims(), "acquire: phantom and model dims differ");
  require(schedule.echoes() == m.echoes(), "acquire: schedule echo count differs from the basis");
  require(opt.noise_sigma >= 0.0, "acquire: noise_sigma must be non-negative");
  int const N = m.dims().size();
  int const T = m.echoes();

  // Evolutions per distinct tissue tuple.
  Eigen::MatrixXd echoes = Eigen::MatrixXd::Zero(N, T);
  std::map<std::array<double, 5>, Eigen::RowVectorXd> cache;
  for (int q = 0; q < N; ++q) {
    if (phantom.pd[q] == 0.0) {
      continue;
    }
    auto const p = phantom.voxel(q);
    std::array<double, 5> key{p.t1_ms, p.t2_ms, p.pd, p.b1, p.ie};
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto const e = simulate_evolution(p, schedule);
      Eigen::RowVectorXd row = Eigen::Map<Eigen::RowVectorXd const>(e.values.data(), T);
      if (opt.truncated) {
        row = (row * m.phi()) * m.phi().transpose();
      }
      it = cache.emplace(key, std::move(row)).first;
    }
    echoes.row(q) = it->second;
  }

  auto const off = echo_offsets(m);
  KSpaceData y;
  y.values = Eigen::MatrixXcd::Zero(m.n_samples(), m.n_coils());
  Eigen::VectorXcd buf(N);
  for (int t = 0; t < T; ++t) {
    if (off[t] == off[t + 1]) {
      continue;
    }
    for (int l = 0; l < m.n_coils(); ++l) {
      buf = echoes.col(t).cast<Cx>().cwiseProduct(m.coils().maps.col(l));
      m.fft().forward(buf.data());
      for (int s = off[t]; s < off[t + 1]; ++s) {
        y.values(s, l) = buf[m.samples()[s].point];
      }
    }
  }
  if (opt.noise_sigma > 0.0) {
    y.values += complex_noise(m.n_samples(), m.n_coils(), opt.noise_sigma, opt.seed).values;
  }
  return y;
}

} // namespace qsub
