#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dictionary.h"
#include "phantom.h"
#include "signal_model.h"
#include "zerodeep.h"

namespace qsub {

inline constexpr int kSchemaVersion = 1;

struct GridSection
{
  std::string t1_t2 = "desk"; // step preset for the T1/T2 axes: desk | paper
  std::string b1 = "paper";   // step preset for the B1 axis
  double ie_fixed = 0.8;      // <= 0: full IE axis of the T1/T2 preset
};

struct BasisSection
{
  int k = 4;
  double err_pct = -1.0; // > 0: smallest K reaching this error instead
};

struct PhantomSection
{
  std::string kind = "nist"; // nist | brain
  int ny = 64;
  int nz = 64;
  B1Profile b1;
  bool snap_b1 = true;
  double ie = 0.8;
};

struct CoilSection
{
  int count = 8;
};

struct MaskSection
{
  std::string pattern = "poisson"; // poisson | uniform
  double ry = 3.0;
  double rz = 3.0;
  double jitter_pct = 1.0;
  bool vary_across_contrasts = true;
};

struct AcquireSection
{
  double noise_rel = 0.005; // noise std relative to the RMS of the noiseless samples
  bool truncated = false;
};

struct SolverSection
{
  int cg_iters = 30;
  int fista_iters = 60;
  double tol = 1e-6;
  int llr_block = 8;
  int wavelet_levels = 3;
  std::vector<double> llr_lambdas{1e-4, 3e-4, 1e-3, 3e-3};
  std::vector<double> wavelet_lambdas{1e-4, 3e-4, 1e-3, 3e-3};
  std::vector<double> pics_lambdas{1e-4, 3e-4, 1e-3, 3e-3};
};

struct EvalSection
{
  int gfactor_iters = 100;
};

struct SimulateSection
{
  TissueParams tissue{1000.0, 80.0, 1.0, 1.0, 0.8};
};

struct SynthSection
{
  std::vector<ContrastSpec> contrasts{
      {ContrastKind::T1w, 500.0, 10.0, {}},
      {ContrastKind::T2w, 5000.0, 100.0, {}},
      {ContrastKind::Flair, 9000.0, 100.0, {2500.0}},
      {ContrastKind::Mprage, 2300.0, 3.0, {900.0}},
      {ContrastKind::Dir, 7500.0, 30.0, {3000.0, 450.0}},
  };
};

struct RunConfig
{
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 1;
  std::vector<std::string> methods{"cg", "llr", "wavelet", "zerodeep", "pics"};
  SequenceTiming timing;
  SteadyStateOptions steady;
  GridSection grid;
  BasisSection basis;
  PhantomSection phantom;
  CoilSection coils;
  MaskSection masks;
  AcquireSection acquire;
  SolverSection solver;
  TrainConfig train;
  EvalSection eval;
  SimulateSection simulate;
  SynthSection synth;
};

nlohmann::json to_json(RunConfig const &c);
// Missing keys take defaults; unknown keys raise InvalidInput.
RunConfig config_from_json(nlohmann::json const &j);
// Reads a JSON file (empty path: defaults) and applies the QSUB_SEED override.
// Range checks across every section; InvalidInput on the first violation.
void validate(RunConfig const &c);

RunConfig load_config(std::string const &path);
void write_config(std::string const &path, RunConfig const &c);

GridSpec grid_spec(GridSection const &g);
IeMode ie_mode(GridSection const &g);

} // namespace qsub
