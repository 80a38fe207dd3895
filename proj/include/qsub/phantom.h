#pragma once

#include <string>
#include <vector>

#include "dictionary.h"
#include "types.h"

namespace qsub {

struct TissueSpec
{
  std::string name;
  int label = 0;
  double t1_ms = 0.0;
  double t2_ms = 0.0;
  double pd = 0.0;
};

struct DigitalPhantom
{
  Dims dims;
  RealMap t1;
  RealMap t2;
  RealMap pd;
  RealMap b1;
  RealMap ie;
  LabelMap labels; // 0 = outside the object
  std::vector<TissueSpec> tissues;

  TissueParams voxel(int q) const { return {t1[q], t2[q], pd[q], b1[q], ie[q]}; }
};

struct SphereSpec
{
  double cy; // centre, in voxels
  double cz;
  double radius;
  double t1_ms;
  double t2_ms;
  double pd;
};

struct B1Profile
{
  bool flat = false;
  double value = 1.0; // used when flat
  double lo = 0.85;   // smooth profile range
  double hi = 1.15;
};

struct NistOptions
{
  std::vector<SphereSpec> spheres; // empty: eight default spheres
  B1Profile b1;
  double ie = 0.8;
  double fill_t1_ms = 2400.0;
  double fill_t2_ms = 300.0;
  double fill_pd = 0.5;
  double disc_fraction = 0.92; // disc radius relative to half the FOV
};

// Default spheres: T1 and T2 log-spaced over [600, 2500] ms and [40, 350] ms,
// placed on a ring inside the plate.
std::vector<SphereSpec> default_spheres(Dims dims);
DigitalPhantom make_nist_like(Dims dims, NistOptions const &opt = {});

struct BrainOptions
{
  TissueSpec wm{"wm", 1, 800.0, 70.0, 0.7};
  TissueSpec gm{"gm", 2, 1400.0, 90.0, 0.85};
  TissueSpec csf{"csf", 3, 4000.0, 450.0, 1.0};
  B1Profile b1;
  double ie = 0.8;
};

DigitalPhantom make_brain_like(Dims dims, unsigned long seed, BrainOptions const &opt = {});

// Snaps every tissue T1/T2 to the nearest grid value and clamps B1 to the grid
// range, so the phantom is representable by the dictionary.
void snap_to_grid(DigitalPhantom &p, ParameterGrid const &grid, bool snap_b1 = false);

enum class ContrastKind
{
  T1w,
  T2w,
  Flair,
  Mprage,
  Dir
};

struct ContrastSpec
{
  ContrastKind kind = ContrastKind::T1w;
  double tr_ms = 0.0;
  double te_ms = 0.0;
  std::vector<double> ti_ms;
};

void validate(ContrastSpec const &s);

ContrastKind parse_contrast_kind(std::string const &s);
std::string to_string(ContrastKind k);

// Closed-form idealized contrast equations (perfect pulses, no echo-train
// effects).
double synth_signal(double t1, double t2, double pd, ContrastSpec const &spec);
RealMap synth_contrast(RealMap const &t1, RealMap const &t2, RealMap const &pd, ContrastSpec const &spec);

} // namespace qsub
