#include "qsub/signal_model.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "qsub/error.h"

namespace qsub {

void validate(TissueParams const &p)
{
  require(p.t1_ms > 0.0, "TissueParams: t1_ms must be positive");
  require(p.t2_ms > 0.0, "TissueParams: t2_ms must be positive");
  require(p.pd >= 0.0, "TissueParams: pd must be non-negative");
  require(p.b1 > 0.0, "TissueParams: b1 must be positive");
  require(p.ie >= 0.0 && p.ie <= 1.0, "TissueParams: ie must lie in [0, 1]");
}

BlockSchedule build_schedule(SequenceTiming const &t)
{
  require(t.etl >= 1, "SequenceTiming: etl must be >= 1");
  require(t.esp_ms > 0.0, "SequenceTiming: esp_ms must be positive");
  require(t.tr_ms > 0.0, "SequenceTiming: tr_ms must be positive");
  require(t.te_t2prep_ms >= 0.0, "SequenceTiming: te_t2prep_ms must be non-negative");
  require(t.inv_delay_ms[0] >= 0.0, "SequenceTiming: inversion delays must be non-negative");
  for (int i = 1; i < 4; ++i) {
    require(t.inv_delay_ms[i] > t.inv_delay_ms[i - 1],
            "SequenceTiming: inversion delays must be strictly increasing");
  }

  BlockSchedule s;
  s.timing = t;
  double const dur = s.readout_duration_ms();
  s.readout_start_ms[0] = t.te_t2prep_ms;
  s.inversion_ms = s.readout_start_ms[0] + dur;
  for (int k = 1; k < kReadouts; ++k) {
    s.readout_start_ms[k] = s.inversion_ms + t.inv_delay_ms[k - 1];
  }
  for (int k = 1; k + 1 < kReadouts; ++k) {
    if (s.readout_start_ms[k] + dur > s.readout_start_ms[k + 1]) {
      std::ostringstream msg;
      msg << "build_schedule: readout " << k + 1 << " (" << dur << " ms) overlaps readout " << k + 2;
      throw InvalidInput(msg.str());
    }
  }
  double const end = s.readout_start_ms[kReadouts - 1] + dur;
  if (end > t.tr_ms) {
    std::ostringstream msg;
    msg << "build_schedule: events end at " << end << " ms, beyond TR " << t.tr_ms << " ms";
    throw InvalidInput(msg.str());
  }

  s.events.push_back({EventKind::T2Prep, 0.0, t.te_t2prep_ms});
  s.events.push_back({EventKind::Readout, s.readout_start_ms[0], dur, 0});
  s.events.push_back({EventKind::Inversion, s.inversion_ms, 0.0});
  double cursor = s.inversion_ms;
  for (int k = 1; k < kReadouts; ++k) {
    if (s.readout_start_ms[k] > cursor) {
      s.events.push_back({EventKind::DeadTime, cursor, s.readout_start_ms[k] - cursor});
    }
    s.events.push_back({EventKind::Readout, s.readout_start_ms[k], dur, k});
    cursor = s.readout_start_ms[k] + dur;
  }
  if (t.tr_ms > cursor) {
    s.events.push_back({EventKind::DeadTime, cursor, t.tr_ms - cursor});
  }
  return s;
}

std::vector<double> BlockSchedule::echo_times_ms() const
{
  std::vector<double> out;
  out.reserve(echoes());
  for (int k = 0; k < kReadouts; ++k) {
    for (int j = 0; j < timing.etl; ++j) {
      out.push_back(readout_start_ms[k] + (j + 1) * timing.esp_ms);
    }
  }
  return out;
}

double relax_t1(double m, double m0, double dt_ms, double t1_ms)
{
  return m0 - (m0 - m) * std::exp(-dt_ms / t1_ms);
}

ErnstSaturation ernst_saturation(double t1_ms, double esp_ms, double flip_rad)
{
  double const e = std::exp(-esp_ms / t1_ms);
  double const factor = (1.0 - e) / (1.0 - std::cos(flip_rad) * e);
  return {factor, factor * t1_ms};
}

double apply_t2prep(double m, double te_ms, double t2_ms) { return m * std::exp(-te_ms / t2_ms); }

double apply_inversion(double m, double ie) { return -m * ie; }

namespace {

// One block starting from longitudinal magnetization m; returns the value at
// the end of the block and writes T samples.
double run_block(
    double m,
    TissueParams const &p,
    BlockSchedule const &s,
    ErnstSaturation const &star,
    double star_decay,
    double sin_flip,
    double *out)
{
  auto const &t = s.timing;
  double const dur = s.readout_duration_ms();
  double const m0_star = star.m0_star_factor * p.pd;

  auto readout = [&](double mz, double *dst) {
    for (int j = 0; j < t.etl; ++j) {
      mz = m0_star - (m0_star - mz) * star_decay;
      dst[j] = mz * sin_flip;
    }
    return mz;
  };

  m = apply_t2prep(m, t.te_t2prep_ms, p.t2_ms);
  m = readout(m, out);
  m = apply_inversion(m, p.ie);
  double cursor = s.inversion_ms;
  for (int k = 1; k < kReadouts; ++k) {
    m = relax_t1(m, p.pd, s.readout_start_ms[k] - cursor, p.t1_ms);
    m = readout(m, out + k * t.etl);
    cursor = s.readout_start_ms[k] + dur;
  }
  return relax_t1(m, p.pd, t.tr_ms - cursor, p.t1_ms);
}

} // namespace

namespace {

struct SteadyStateRun
{
  int blocks = 0;
  double change = 0.0;
};

SteadyStateRun iterate_blocks(
    TissueParams const &p, BlockSchedule const &s, SteadyStateOptions const &steady, double *out)
{
  validate(p);
  double const flip = s.timing.flip_deg * p.b1 * std::numbers::pi / 180.0;
  auto const star = ernst_saturation(p.t1_ms, s.timing.esp_ms, flip);
  double const star_decay = std::exp(-s.timing.esp_ms / star.t1_star_ms);
  double const sin_flip = std::sin(flip);

  SteadyStateRun run;
  double m = p.pd;
  for (int b = 0; b < steady.max_blocks; ++b) {
    double const next = run_block(m, p, s, star, star_decay, sin_flip, out);
    double const diff = std::abs(next - m);
    run.change = std::abs(m) > 0.0 ? diff / std::abs(m) : diff;
    run.blocks = b + 1;
    m = next;
    if (run.change < steady.tol) {
      return run;
    }
  }
  std::ostringstream msg;
  msg << "simulate_evolution: no steady state after " << steady.max_blocks
      << " blocks (last relative change " << run.change << ")";
  throw NumericFailure(msg.str());
}

} // namespace

void simulate_into(
    TissueParams const &p, BlockSchedule const &s, SteadyStateOptions const &steady, double *out)
{
  iterate_blocks(p, s, steady, out);
}

SignalEvolution simulate_evolution(
    TissueParams const &p, BlockSchedule const &s, SteadyStateOptions const &steady)
{
  SignalEvolution e;
  e.values.assign(s.echoes(), 0.0);
  e.echo_times = s.echo_times_ms();
  auto const run = iterate_blocks(p, s, steady, e.values.data());
  e.blocks_used = run.blocks;
  e.last_change = run.change;
  return e;
}

std::array<int, kReadouts> five_point_indices(int etl)
{
  std::array<int, kReadouts> idx{};
  for (int k = 0; k < kReadouts; ++k) {
    idx[k] = k * etl;
  }
  return idx;
}

FivePointSignal extract_five_point(SignalEvolution const &e, BlockSchedule const &s)
{
  require(static_cast<int>(e.values.size()) == s.echoes(), "extract_five_point: length mismatch");
  FivePointSignal f;
  auto const idx = five_point_indices(s.timing.etl);
  for (int k = 0; k < kReadouts; ++k) {
    f.values[k] = e.values[idx[k]];
  }
  return f;
}

} // namespace qsub
