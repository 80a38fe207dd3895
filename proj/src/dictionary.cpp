#include "qsub/dictionary.h"

#include <algorithm>
#include <cmath>

#include "qsub/error.h"

namespace qsub {

GridSpec paper_grid_spec()
{
  GridSpec g;
  g.t1 = {{300, 3000, 5}, {3000, 5000, 100}};
  g.t2 = {{10, 100, 1}, {100, 200, 2}, {200, 400, 10}, {400, 500, 20}};
  g.b1 = {{0.65, 1.35, 0.05}};
  g.ie = {{0.5, 1.0, 0.02}};
  return g;
}

GridSpec desk_grid_spec()
{
  auto g = paper_grid_spec();
  for (auto *axis : {&g.t1, &g.t2, &g.b1, &g.ie}) {
    for (auto &seg : *axis) {
      seg.step *= 5.0;
    }
  }
  return g;
}

std::vector<double> axis_values(std::vector<AxisSegment> const &segments)
{
  std::vector<double> out;
  for (auto const &seg : segments) {
    require(seg.step > 0.0 || seg.lo == seg.hi, "grid: step must be positive");
    require(seg.hi >= seg.lo, "grid: segment upper bound below lower bound");
    long const n = seg.step > 0.0 ? static_cast<long>(std::floor((seg.hi - seg.lo) / seg.step + 1e-9)) : 0;
    for (long i = 0; i <= n; ++i) {
      double const v = std::round((seg.lo + i * seg.step) * 1e9) / 1e9;
      if (out.empty() || v > out.back() + 1e-9) {
        out.push_back(v);
      }
    }
  }
  require(!out.empty(), "grid: empty axis");
  return out;
}

ParameterGrid build_grid(GridSpec const &spec)
{
  ParameterGrid g;
  g.t1_values = axis_values(spec.t1);
  g.t2_values = axis_values(spec.t2);
  g.b1_values = axis_values(spec.b1);
  g.ie_values = axis_values(spec.ie);
  return g;
}

Dictionary build_dictionary(
    ParameterGrid const &grid, BlockSchedule const &schedule, IeMode ie_mode, SteadyStateOptions const &steady)
{
  require(grid.size() > 0, "build_dictionary: empty grid");
  Dictionary d;
  d.grid = grid;
  if (ie_mode.fixed) {
    d.grid.ie_values = {ie_mode.value};
  }
  d.schedule = schedule;
  d.ie_mode = ie_mode;

  for (double b1 : d.grid.b1_values) {
    for (double ie : d.grid.ie_values) {
      for (double t1 : d.grid.t1_values) {
        for (double t2 : d.grid.t2_values) {
          d.params.push_back({t1, t2, 1.0, b1, ie});
        }
      }
    }
  }
  long const n = static_cast<long>(d.params.size());
  d.atoms.resize(n, schedule.echoes());
  bool failed = false;
  std::string what;
#pragma omp parallel for schedule(dynamic, 64)
  for (long i = 0; i < n; ++i) {
    try {
      simulate_into(d.params[i], schedule, steady, d.atoms.row(i).data());
    } catch (Error const &e) {
#pragma omp critical
      {
        failed = true;
        what = e.what();
      }
    }
  }
  if (failed) {
    throw NumericFailure("build_dictionary: " + what);
  }
  return d;
}

SubspaceBasis compute_basis(Dictionary const &d, BasisTarget const &target)
{
  require(target.k.has_value() != target.err_pct.has_value(),
          "compute_basis: give exactly one of k or err_pct");
  int const T = d.echoes();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(T, T);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(d.atoms.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) {
    throw NumericFailure("compute_basis: eigendecomposition failed");
  }
  Eigen::VectorXd const lambda = eig.eigenvalues().reverse();
  Eigen::MatrixXd const vectors = eig.eigenvectors().rowwise().reverse();

  int const rank_max = std::min(T, d.n_atoms());
  SubspaceBasis b;
  b.singular_values = lambda.head(rank_max).cwiseMax(0.0).cwiseSqrt();

  int k = 0;
  if (target.k) {
    k = *target.k;
    require(k >= 0 && k <= T, "compute_basis: k must lie in [0, T]");
  } else {
    require(*target.err_pct >= 0.0, "compute_basis: err_pct must be non-negative");
    k = T;
    for (int kk = 0; kk <= T; ++kk) {
      if (basis_error_from_spectrum(b.singular_values, kk) <= *target.err_pct) {
        k = kk;
        break;
      }
    }
  }
  b.phi = vectors.leftCols(k);
  for (int c = 0; c < k; ++c) {
    Eigen::Index imax;
    b.phi.col(c).cwiseAbs().maxCoeff(&imax);
    if (b.phi(imax, c) < 0.0) {
      b.phi.col(c) *= -1.0;
    }
  }
  return b;
}

double basis_error(RowMatrix const &atoms, Eigen::MatrixXd const &phi)
{
  double total = 0.0;
  double resid = 0.0;
  Eigen::Index const block = 4096;
  for (Eigen::Index r0 = 0; r0 < atoms.rows(); r0 += block) {
    Eigen::Index const nr = std::min(block, atoms.rows() - r0);
    auto const rows = atoms.middleRows(r0, nr);
    total += rows.squaredNorm();
    if (phi.cols() == 0) {
      resid += rows.squaredNorm();
    } else {
      resid += (rows - (rows * phi) * phi.transpose()).squaredNorm();
    }
  }
  if (total == 0.0) {
    return 0.0;
  }
  return 100.0 * std::sqrt(resid / total);
}

double basis_error(Dictionary const &d, SubspaceBasis const &basis)
{
  require(basis.echoes() == d.echoes(), "basis_error: basis length mismatch");
  return basis_error(d.atoms, basis.phi);
}

double basis_error_from_spectrum(Eigen::VectorXd const &s, int k)
{
  double const total = s.squaredNorm();
  if (total == 0.0) {
    return 0.0;
  }
  int const n = static_cast<int>(s.size());
  double tail = 0.0;
  for (int i = std::min(k, n); i < n; ++i) {
    tail += s[i] * s[i];
  }
  return 100.0 * std::sqrt(tail / total);
}

Eigen::VectorXcd project(Eigen::VectorXcd const &e, SubspaceBasis const &basis)
{
  require(e.size() == basis.echoes(), "project: length mismatch");
  return basis.phi.transpose().cast<Cx>() * e;
}

Eigen::VectorXcd expand(Eigen::VectorXcd const &x, SubspaceBasis const &basis)
{
  require(x.size() == basis.rank(), "expand: length mismatch");
  return basis.phi.cast<Cx>() * x;
}

DictionaryMatcher::DictionaryMatcher(Eigen::MatrixXd signatures, Dictionary const &d)
    : signatures_(std::move(signatures))
    , params_(d.params)
    , b1_values_(d.grid.b1_values)
{
  norm2_ = signatures_.rowwise().squaredNorm();
  int const per_b1 = static_cast<int>(d.grid.ie_values.size() * d.grid.t1_values.size() *
                                      d.grid.t2_values.size());
  for (size_t i = 0; i <= b1_values_.size(); ++i) {
    b1_begin_.push_back(static_cast<int>(i) * per_b1);
  }
}

DictionaryMatcher DictionaryMatcher::subspace(Dictionary const &d, SubspaceBasis const &basis)
{
  require(basis.echoes() == d.echoes(), "DictionaryMatcher: basis length mismatch");
  return DictionaryMatcher(d.atoms * basis.phi, d);
}

DictionaryMatcher DictionaryMatcher::five_point(Dictionary const &d)
{
  auto const idx = five_point_indices(d.schedule.timing.etl);
  Eigen::MatrixXd sig(d.n_atoms(), kReadouts);
  for (int k = 0; k < kReadouts; ++k) {
    sig.col(k) = d.atoms.col(idx[k]);
  }
  return DictionaryMatcher(std::move(sig), d);
}

double DictionaryMatcher::snap_b1(double b1) const
{
  double const lo = b1_values_.front();
  double const hi = b1_values_.back();
  double const v = std::clamp(b1, lo, hi);
  size_t best = 0;
  for (size_t i = 1; i < b1_values_.size(); ++i) {
    if (std::abs(b1_values_[i] - v) < std::abs(b1_values_[best] - v)) {
      best = i;
    }
  }
  return b1_values_[best];
}

MatchResult DictionaryMatcher::match(Eigen::Ref<Eigen::VectorXcd const> x, double b1) const
{
  require(x.size() == signatures_.cols(), "match: signal length mismatch");
  MatchResult r;
  double const b1_snapped = snap_b1(b1);
  r.b1_used = b1_snapped;
  double const xnorm = x.norm();
  if (xnorm == 0.0 || !std::isfinite(xnorm)) {
    return r;
  }
  size_t bi = 0;
  while (b1_values_[bi] != b1_snapped) {
    ++bi;
  }
  int const begin = b1_begin_[bi];
  int const count = b1_begin_[bi + 1] - begin;
  auto const block = signatures_.middleRows(begin, count);
  Eigen::VectorXd const xr = x.real();
  Eigen::VectorXd const xi = x.imag();
  Eigen::VectorXd const re = block * xr;
  Eigen::VectorXd const im = block * xi;

  int best = -1;
  double best_score = -1.0;
  for (int i = 0; i < count; ++i) {
    double const n2 = norm2_[begin + i];
    if (n2 <= 0.0) {
      continue;
    }
    double const s = (re[i] * re[i] + im[i] * im[i]) / n2;
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  if (best < 0) {
    return r;
  }
  int const atom = begin + best;
  r.atom = atom;
  r.background = false;
  r.t1_ms = params_[atom].t1_ms;
  r.t2_ms = params_[atom].t2_ms;
  r.ie_used = params_[atom].ie;
  r.pd = Cx(re[best], im[best]) / norm2_[atom];
  r.score = std::min(1.0, std::sqrt(best_score) / xnorm);
  return r;
}

namespace {

void store(ParameterMaps &maps, int q, MatchResult const &r)
{
  maps.t1[q] = r.t1_ms;
  maps.t2[q] = r.t2_ms;
  maps.pd[q] = std::abs(r.pd);
  maps.pd_complex[q] = r.pd;
  maps.score[q] = r.score;
}

ParameterMaps empty_maps(Dims dims)
{
  ParameterMaps maps;
  maps.dims = dims;
  maps.t1.assign(dims.size(), 0.0);
  maps.t2.assign(dims.size(), 0.0);
  maps.pd.assign(dims.size(), 0.0);
  maps.score.assign(dims.size(), 0.0);
  maps.pd_complex.assign(dims.size(), Cx{});
  return maps;
}

} // namespace

ParameterMaps match_map(
    Eigen::MatrixXcd const &signals, Dims dims, RealMap const &b1_map, DictionaryMatcher const &m)
{
  require(signals.rows() == dims.size(), "match_map: signal rows must equal voxel count");
  require(static_cast<int>(b1_map.size()) == dims.size(), "match_map: b1 map size mismatch");
  auto maps = empty_maps(dims);
#pragma omp parallel for schedule(dynamic, 16)
  for (int q = 0; q < dims.size(); ++q) {
    Eigen::VectorXcd const x = signals.row(q).transpose();
    store(maps, q, m.match(x, b1_map[q]));
  }
  return maps;
}

ParameterMaps match_map_serial(
    Eigen::MatrixXcd const &signals, Dims dims, RealMap const &b1_map, DictionaryMatcher const &m)
{
  require(signals.rows() == dims.size(), "match_map: signal rows must equal voxel count");
  require(static_cast<int>(b1_map.size()) == dims.size(), "match_map: b1 map size mismatch");
  auto maps = empty_maps(dims);
  for (int q = 0; q < dims.size(); ++q) {
    Eigen::VectorXcd const x = signals.row(q).transpose();
    store(maps, q, m.match(x, b1_map[q]));
  }
  return maps;
}

} // namespace qsub
