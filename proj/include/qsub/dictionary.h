#pragma once

#include <optional>
#include <vector>

#include "signal_model.h"
#include "types.h"

namespace qsub {

struct AxisSegment
{
  double lo;
  double hi;
  double step;
};

// Piecewise-uniform sampling of each parameter axis.
struct GridSpec
{
  std::vector<AxisSegment> t1;
  std::vector<AxisSegment> t2;
  std::vector<AxisSegment> b1;
  std::vector<AxisSegment> ie;
};

GridSpec paper_grid_spec();
// Every step of paper_grid_spec() multiplied by five.
GridSpec desk_grid_spec();

struct ParameterGrid
{
  std::vector<double> t1_values;
  std::vector<double> t2_values;
  std::vector<double> b1_values;
  std::vector<double> ie_values;

  size_t size() const
  {
    return t1_values.size() * t2_values.size() * b1_values.size() * ie_values.size();
  }
};

std::vector<double> axis_values(std::vector<AxisSegment> const &segments);
ParameterGrid build_grid(GridSpec const &spec);

struct IeMode
{
  bool fixed = false;
  double value = 0.8;

  static IeMode full() { return {false, 0.8}; }
  static IeMode fixed_at(double v) { return {true, v}; }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One atom per (b1, ie, t1, t2) tuple, t2 fastest. Atoms are simulated with
// pd = 1, so every b1 value owns one contiguous run of rows.
struct Dictionary
{
  RowMatrix atoms; // n_atoms x T
  std::vector<TissueParams> params;
  ParameterGrid grid; // ie_values collapsed to one entry in fixed mode
  BlockSchedule schedule;
  IeMode ie_mode;

  int n_atoms() const { return static_cast<int>(atoms.rows()); }
  int echoes() const { return static_cast<int>(atoms.cols()); }
};

Dictionary build_dictionary(
    ParameterGrid const &grid,
    BlockSchedule const &schedule,
    IeMode ie_mode = IeMode::full(),
    SteadyStateOptions const &steady = {});

struct SubspaceBasis
{
  Eigen::MatrixXd phi; // T x K, orthonormal columns
  Eigen::VectorXd singular_values;

  int rank() const { return static_cast<int>(phi.cols()); }
  int echoes() const { return static_cast<int>(phi.rows()); }
};

struct BasisTarget
{
  std::optional<int> k;
  std::optional<double> err_pct;
};

// Top left singular vectors of atoms^T, obtained from the eigendecomposition of
// the T x T Gram matrix. Column signs are fixed so that each column's largest
// entry is positive.
SubspaceBasis compute_basis(Dictionary const &d, BasisTarget const &target);

// 100 * ||D - D Phi Phi^T||_F / ||D||_F, evaluated directly.
double basis_error(Dictionary const &d, SubspaceBasis const &basis);
double basis_error(RowMatrix const &atoms, Eigen::MatrixXd const &phi);
// Same quantity from the singular-value tail.
double basis_error_from_spectrum(Eigen::VectorXd const &singular_values, int k);

Eigen::VectorXcd project(Eigen::VectorXcd const &evolution, SubspaceBasis const &basis);
Eigen::VectorXcd expand(Eigen::VectorXcd const &coeffs, SubspaceBasis const &basis);

struct MatchResult
{
  double t1_ms = 0.0;
  double t2_ms = 0.0;
  Cx pd{0.0, 0.0};
  double b1_used = 0.0;
  double ie_used = 0.0;
  double score = 0.0;
  int atom = -1;
  bool background = true;
};

// Exhaustive normalized-correlation search over precomputed atom signatures.
// A signature is either the subspace projection of an atom or its five
// readout-start samples.
class DictionaryMatcher
{
public:
  static DictionaryMatcher subspace(Dictionary const &d, SubspaceBasis const &basis);
  static DictionaryMatcher five_point(Dictionary const &d);

  // b1 is clamped to the grid range and snapped to the nearest grid value;
  // only atoms with that b1 compete.
  MatchResult match(Eigen::Ref<Eigen::VectorXcd const> x, double b1) const;

  double snap_b1(double b1) const;
  int length() const { return static_cast<int>(signatures_.cols()); }

private:
  DictionaryMatcher(Eigen::MatrixXd signatures, Dictionary const &d);

  Eigen::MatrixXd signatures_; // n_atoms x M
  Eigen::VectorXd norm2_;
  std::vector<TissueParams> params_;
  std::vector<double> b1_values_;
  std::vector<int> b1_begin_; // first row for each b1 value, plus end sentinel
};

struct ParameterMaps
{
  Dims dims;
  RealMap t1;
  RealMap t2;
  RealMap pd; // magnitude
  RealMap score;
  std::vector<Cx> pd_complex;
};

// Voxelwise matching; parallel over voxels.
ParameterMaps match_map(
    Eigen::MatrixXcd const &signals, Dims dims, RealMap const &b1_map, DictionaryMatcher const &m);
// Serial reference of match_map.
ParameterMaps match_map_serial(
    Eigen::MatrixXcd const &signals, Dims dims, RealMap const &b1_map, DictionaryMatcher const &m);

} // namespace qsub
