#include "qsub/phantom.h"

#include <algorithm>
#include <cmath>

#include "qsub/error.h"
#include "qsub/rng.h"

namespace qsub {

namespace {

RealMap b1_map(Dims d, B1Profile const &b)
{
  require(b.flat ? b.value > 0.0 : (b.lo > 0.0 && b.hi >= b.lo), "phantom: invalid B1 profile");
  RealMap m(d.size(), b.value);
  if (b.flat) {
    return m;
  }
  // Smooth diagonal ramp from lo to hi.
  for (int iy = 0; iy < d.ny; ++iy) {
    for (int iz = 0; iz < d.nz; ++iz) {
      double const u = 0.5 * ((d.ny > 1 ? iy / (d.ny - 1.0) : 0.5) + (d.nz > 1 ? iz / (d.nz - 1.0) : 0.5));
      m[iy * d.nz + iz] = b.lo + (b.hi - b.lo) * u;
    }
  }
  return m;
}

DigitalPhantom empty_phantom(Dims d, B1Profile const &b1, double ie, double t1, double t2)
{
  require(d.ny > 0 && d.nz > 0, "phantom: dims must be positive");
  require(ie > 0.0 && ie <= 1.0, "phantom: inversion efficiency must lie in (0, 1]");
  DigitalPhantom p;
  p.dims = d;
  p.t1.assign(d.size(), t1);
  p.t2.assign(d.size(), t2);
  p.pd.assign(d.size(), 0.0);
  p.b1 = b1_map(d, b1);
  p.ie.assign(d.size(), ie);
  p.labels.assign(d.size(), 0);
  return p;
}

void paint(DigitalPhantom &p, int q, TissueSpec const &t)
{
  p.t1[q] = t.t1_ms;
  p.t2[q] = t.t2_ms;
  p.pd[q] = t.pd;
  p.labels[q] = t.label;
}

double centre(int n) { return 0.5 * (n - 1); }

double nearest(std::vector<double> const &v, double x)
{
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end()) {
    return v.back();
  }
  if (it == v.begin()) {
    return *it;
  }
  return (x - *(it - 1) <= *it - x) ? *(it - 1) : *it;
}

} // namespace

std::vector<SphereSpec> default_spheres(Dims d)
{
  double const half = 0.5 * std::min(d.ny, d.nz);
  double const ring = 0.55 * half;
  double const radius = 0.13 * half;
  std::vector<SphereSpec> s;
  int constexpr n = 8;
  for (int i = 0; i < n; ++i) {
    double const f = i / (n - 1.0);
    double const a = 2.0 * M_PI * i / n;
    s.push_back({centre(d.ny) + ring * std::cos(a), centre(d.nz) + ring * std::sin(a), radius,
                 600.0 * std::pow(2500.0 / 600.0, f), 40.0 * std::pow(350.0 / 40.0, f), 1.0});
  }
  return s;
}

DigitalPhantom make_nist_like(Dims d, NistOptions const &opt)
{
  auto p = empty_phantom(d, opt.b1, opt.ie, opt.fill_t1_ms, opt.fill_t2_ms);
  auto const spheres = opt.spheres.empty() ? default_spheres(d) : opt.spheres;
  for (auto const &s : spheres) {
    require(s.radius > 0.0, "phantom: sphere radius must be positive");
    require(s.cy - s.radius >= -0.5 && s.cy + s.radius <= d.ny - 0.5 && s.cz - s.radius >= -0.5 &&
                s.cz + s.radius <= d.nz - 0.5,
            "phantom: sphere extends outside the field of view");
    validate(TissueParams{s.t1_ms, s.t2_ms, s.pd, 1.0, opt.ie});
  }
  int const fill_label = static_cast<int>(spheres.size()) + 1;
  TissueSpec const fill{"fill", fill_label, opt.fill_t1_ms, opt.fill_t2_ms, opt.fill_pd};
  double const disc = opt.disc_fraction * 0.5 * std::min(d.ny, d.nz);
  for (int iy = 0; iy < d.ny; ++iy) {
    for (int iz = 0; iz < d.nz; ++iz) {
      double const dy = iy - centre(d.ny);
      double const dz = iz - centre(d.nz);
      if (opt.fill_pd > 0.0 && dy * dy + dz * dz <= disc * disc) {
        paint(p, iy * d.nz + iz, fill);
      }
    }
  }
  for (size_t i = 0; i < spheres.size(); ++i) {
    auto const &s = spheres[i];
    TissueSpec const t{"sphere" + std::to_string(i + 1), static_cast<int>(i) + 1, s.t1_ms, s.t2_ms, s.pd};
    p.tissues.push_back(t);
    for (int iy = 0; iy < d.ny; ++iy) {
      for (int iz = 0; iz < d.nz; ++iz) {
        double const dy = iy - s.cy;
        double const dz = iz - s.cz;
        if (dy * dy + dz * dz <= s.radius * s.radius) {
          require(p.labels[iy * d.nz + iz] == 0 || p.labels[iy * d.nz + iz] == fill_label,
                  "phantom: spheres overlap");
          paint(p, iy * d.nz + iz, t);
        }
      }
    }
  }
  if (opt.fill_pd > 0.0) {
    p.tissues.push_back(fill);
  }
  return p;
}

DigitalPhantom make_brain_like(Dims d, unsigned long seed, BrainOptions const &opt)
{
  auto const grid = build_grid(paper_grid_spec());
  auto clamp_tissue = [&](TissueSpec t) {
    t.t1_ms = std::clamp(t.t1_ms, grid.t1_values.front(), grid.t1_values.back());
    t.t2_ms = std::clamp(t.t2_ms, grid.t2_values.front(), grid.t2_values.back());
    validate(TissueParams{t.t1_ms, t.t2_ms, t.pd, 1.0, opt.ie});
    return t;
  };
  TissueSpec const wm = clamp_tissue(opt.wm);
  TissueSpec const gm = clamp_tissue(opt.gm);
  TissueSpec const csf = clamp_tissue(opt.csf);
  auto p = empty_phantom(d, opt.b1, opt.ie, wm.t1_ms, wm.t2_ms);

  auto rng = make_rng(seed, 0xb7a1);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  double const hy = 0.5 * d.ny;
  double const hz = 0.5 * d.nz;
  struct Ellipse
  {
    double cy, cz, ay, az;
  };
  auto inside = [](Ellipse const &e, double y, double z) {
    double const u = (y - e.cy) / e.ay;
    double const v = (z - e.cz) / e.az;
    return u * u + v * v <= 1.0;
  };
  double const cy = centre(d.ny);
  double const cz = centre(d.nz);
  Ellipse const head{cy, cz, 0.88 * hy * (1 + jitter(rng)), 0.72 * hz * (1 + jitter(rng))};
  Ellipse const cortex{cy, cz, head.ay - 0.07 * hy, head.az - 0.07 * hz};
  Ellipse const white{cy, cz, cortex.ay - 0.14 * hy, cortex.az - 0.14 * hz};
  double const off = 0.12 * hz * (1 + jitter(rng));
  Ellipse const vl{cy + jitter(rng) * hy, cz - off, 0.22 * hy, 0.06 * hz};
  Ellipse const vr{cy + jitter(rng) * hy, cz + off, 0.22 * hy, 0.06 * hz};
  for (int iy = 0; iy < d.ny; ++iy) {
    for (int iz = 0; iz < d.nz; ++iz) {
      int const q = iy * d.nz + iz;
      if (!inside(head, iy, iz)) {
        continue;
      }
      if (inside(vl, iy, iz) || inside(vr, iy, iz)) {
        paint(p, q, csf);
      } else if (inside(white, iy, iz)) {
        paint(p, q, wm);
      } else if (inside(cortex, iy, iz)) {
        paint(p, q, gm);
      } else {
        paint(p, q, csf);
      }
    }
  }
  p.tissues = {wm, gm, csf};
  return p;
}

void snap_to_grid(DigitalPhantom &p, ParameterGrid const &g, bool snap_b1)
{
  require(!g.t1_values.empty() && !g.t2_values.empty() && !g.b1_values.empty() && !g.ie_values.empty(),
          "snap_to_grid: empty grid axis");
  for (int q = 0; q < p.dims.size(); ++q) {
    p.t1[q] = nearest(g.t1_values, p.t1[q]);
    p.t2[q] = nearest(g.t2_values, p.t2[q]);
    p.b1[q] = snap_b1 ? nearest(g.b1_values, p.b1[q])
                      : std::clamp(p.b1[q], g.b1_values.front(), g.b1_values.back());
    p.ie[q] = nearest(g.ie_values, p.ie[q]);
  }
  for (auto &t : p.tissues) {
    t.t1_ms = nearest(g.t1_values, t.t1_ms);
    t.t2_ms = nearest(g.t2_values, t.t2_ms);
  }
}

ContrastKind parse_contrast_kind(std::string const &s)
{
  if (s == "t1w") {
    return ContrastKind::T1w;
  }
  if (s == "t2w") {
    return ContrastKind::T2w;
  }
  if (s == "flair") {
    return ContrastKind::Flair;
  }
  if (s == "mprage") {
    return ContrastKind::Mprage;
  }
  if (s == "dir") {
    return ContrastKind::Dir;
  }
  throw InvalidInput("unknown contrast kind '" + s + "' (t1w, t2w, flair, mprage, dir)");
}

std::string to_string(ContrastKind k)
{
  switch (k) {
  case ContrastKind::T1w:
    return "t1w";
  case ContrastKind::T2w:
    return "t2w";
  case ContrastKind::Flair:
    return "flair";
  case ContrastKind::Mprage:
    return "mprage";
  case ContrastKind::Dir:
    return "dir";
  }
  return "?";
}

void validate(ContrastSpec const &s)
{
  require(s.tr_ms > 0.0 && s.te_ms >= 0.0, "synth: TR must be positive and TE non-negative");
  size_t const need = s.kind == ContrastKind::Dir ? 2 : (s.kind == ContrastKind::Flair || s.kind == ContrastKind::Mprage) ? 1 : 0;
  require(s.ti_ms.size() >= need, "synth: " + to_string(s.kind) + " needs " + std::to_string(need) + " TI value(s)");
  for (double ti : s.ti_ms) {
    require(ti > 0.0, "synth: TI must be positive");
  }
}

double synth_signal(double t1, double t2, double pd, ContrastSpec const &s)
{
  require(t1 > 0.0 && t2 > 0.0 && pd >= 0.0, "synth: invalid tissue values");
  double const e1 = std::exp(-s.tr_ms / t1);
  double const e2 = std::exp(-s.te_ms / t2);
  switch (s.kind) {
  case ContrastKind::T1w:
  case ContrastKind::T2w:
    // ideal 90/180 spin echo
    return pd * (1.0 - e1) * e2;
  case ContrastKind::Flair:
    // ideal inversion, magnitude image
    return pd * std::abs(1.0 - 2.0 * std::exp(-s.ti_ms[0] / t1) + e1) * e2;
  case ContrastKind::Mprage:
    // full recovery before the inversion, readout at TI
    return pd * std::abs(1.0 - 2.0 * std::exp(-s.ti_ms[0] / t1));
  case ContrastKind::Dir: {
    double const ti1 = s.ti_ms[0];
    double const ti2 = s.ti_ms[1];
    return pd * std::abs(1.0 - 2.0 * std::exp(-ti2 / t1) + 2.0 * std::exp(-(ti1 + ti2) / t1) - e1) * e2;
  }
  }
  return 0.0;
}

RealMap synth_contrast(RealMap const &t1, RealMap const &t2, RealMap const &pd, ContrastSpec const &spec)
{
  validate(spec);
  require(t1.size() == t2.size() && t1.size() == pd.size(), "synth: map sizes differ");
  RealMap out(t1.size(), 0.0);
  for (size_t i = 0; i < t1.size(); ++i) {
    // background voxels carry no tissue
    out[i] = pd[i] > 0.0 && t1[i] > 0.0 && t2[i] > 0.0 ? synth_signal(t1[i], t2[i], pd[i], spec) : 0.0;
  }
  return out;
}

} // namespace qsub
