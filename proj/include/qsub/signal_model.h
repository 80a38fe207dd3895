#pragma once

#include <array>
#include <vector>

namespace qsub {

struct TissueParams
{
  double t1_ms = 1000.0;
  double t2_ms = 80.0;
  double pd = 1.0;
  double b1 = 1.0;
  double ie = 1.0;
};

void validate(TissueParams const &p);

inline constexpr int kReadouts = 5;

struct SequenceTiming
{
  double tr_ms = 4500.0;
  double te_t2prep_ms = 100.0; // not reported for the protocol; assumed
  double esp_ms = 5.8;
  int etl = 127;
  double flip_deg = 4.0; // not reported for the protocol; assumed
  std::array<double, 4> inv_delay_ms{100.0, 1000.0, 1900.0, 2800.0};

  int echoes() const { return etl * kReadouts; }
};

enum class EventKind
{
  T2Prep,
  Readout,
  Inversion,
  DeadTime
};

struct Event
{
  EventKind kind;
  double start_ms;
  double duration_ms;
  int readout = -1; // 0..4 for readouts
};

// Event layout over one block [0, TR). The T2 preparation occupies
// [0, te_t2prep), readout 1 follows immediately, the inversion sits at the end
// of readout 1, and readout k (k = 2..5) starts inv_delay[k-2] after it.
struct BlockSchedule
{
  SequenceTiming timing;
  std::vector<Event> events;
  std::array<double, kReadouts> readout_start_ms{};
  double inversion_ms = 0.0;

  double readout_duration_ms() const { return timing.etl * timing.esp_ms; }
  int echoes() const { return timing.echoes(); }
  std::vector<double> echo_times_ms() const;
};

BlockSchedule build_schedule(SequenceTiming const &timing);

// Longitudinal recovery toward m0 over dt.
double relax_t1(double m, double m0, double dt_ms, double t1_ms);

struct ErnstSaturation
{
  double m0_star_factor;
  double t1_star_ms;
};

// Apparent equilibrium and relaxation time under a continuous pulse train.
ErnstSaturation ernst_saturation(double t1_ms, double esp_ms, double flip_rad);

double apply_t2prep(double m, double te_ms, double t2_ms);

// Written as -m * ie, so ie = 0 leaves no longitudinal magnetization.
double apply_inversion(double m, double ie);

struct SteadyStateOptions
{
  double tol = 1e-6;
  int max_blocks = 20;
};

struct SignalEvolution
{
  std::vector<double> values;     // T = 5 * etl transverse samples
  std::vector<double> echo_times; // ms from block start
  int blocks_used = 0;
  double last_change = 0.0;
};

// Iterates whole blocks from thermal equilibrium until the start-of-block
// longitudinal magnetization settles, then returns the samples of the settled
// block. Throws NumericFailure if max_blocks is reached first.
SignalEvolution simulate_evolution(
    TissueParams const &p, BlockSchedule const &s, SteadyStateOptions const &steady = {});

// Same iteration without allocation of echo times; writes T samples to out.
// Used by dictionary generation.
void simulate_into(
    TissueParams const &p, BlockSchedule const &s, SteadyStateOptions const &steady, double *out);

struct FivePointSignal
{
  std::array<double, kReadouts> values{};
};

std::array<int, kReadouts> five_point_indices(int etl);
FivePointSignal extract_five_point(SignalEvolution const &e, BlockSchedule const &s);

} // namespace qsub
