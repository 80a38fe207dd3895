#include "qsub/pipeline.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "qsub/container.h"
#include "qsub/error.h"

namespace qsub {

namespace fs = std::filesystem;

Modeling build_modeling(RunConfig const &cfg)
{
  Modeling m;
  m.schedule = build_schedule(cfg.timing);
  auto const grid = build_grid(grid_spec(cfg.grid));
  m.dict = build_dictionary(grid, m.schedule, ie_mode(cfg.grid), cfg.steady);
  BasisTarget t;
  if (cfg.basis.err_pct > 0.0) {
    t.err_pct = cfg.basis.err_pct;
  } else {
    t.k = cfg.basis.k;
  }
  m.basis = compute_basis(m.dict, t);
  m.basis_error_pct = basis_error_from_spectrum(m.basis.singular_values, m.basis.rank());
  m.subspace = std::make_shared<DictionaryMatcher const>(DictionaryMatcher::subspace(m.dict, m.basis));
  m.five_point = std::make_shared<DictionaryMatcher const>(DictionaryMatcher::five_point(m.dict));
  return m;
}

DigitalPhantom build_phantom(RunConfig const &cfg, ParameterGrid const &grid)
{
  auto const &pc = cfg.phantom;
  Dims const d{pc.ny, pc.nz};
  DigitalPhantom p;
  if (pc.kind == "nist") {
    NistOptions o;
    o.b1 = pc.b1;
    o.ie = pc.ie;
    p = make_nist_like(d, o);
  } else if (pc.kind == "brain") {
    BrainOptions o;
    o.b1 = pc.b1;
    o.ie = pc.ie;
    p = make_brain_like(d, cfg.seed, o);
  } else {
    throw InvalidInput("config: phantom.kind must be 'nist' or 'brain', got '" + pc.kind + "'");
  }
  snap_to_grid(p, grid, pc.snap_b1);
  return p;
}

SamplingMask build_mask(RunConfig const &cfg, Dims dims, std::uint64_t seed)
{
  auto const &m = cfg.masks;
  if (m.pattern == "poisson") {
    return make_poisson_mask(dims, m.ry, m.rz, m.jitter_pct, seed, m.vary_across_contrasts);
  }
  if (m.pattern == "uniform") {
    require(m.ry == std::floor(m.ry) && m.rz == std::floor(m.rz), "config: uniform masks need integer factors");
    return make_uniform_mask(dims, static_cast<int>(m.ry), static_cast<int>(m.rz), seed);
  }
  throw InvalidInput("config: masks.pattern must be 'poisson' or 'uniform', got '" + m.pattern + "'");
}

namespace {

Mask scored_roi(DigitalPhantom const &p)
{
  std::vector<bool> use(p.labels.empty() ? 1 : *std::max_element(p.labels.begin(), p.labels.end()) + 1, false);
  for (auto const &t : p.tissues) {
    if (t.name != "fill" && t.label < static_cast<int>(use.size())) {
      use[t.label] = true;
    }
  }
  Mask roi(p.labels.size(), 0);
  for (size_t i = 0; i < roi.size(); ++i) {
    roi[i] = p.labels[i] > 0 && use[p.labels[i]];
  }
  return roi;
}

AcquisitionModel make_model(RunConfig const &cfg, Modeling const &m, Dims d, SamplingMask const &mask)
{
  auto const ordering = assign_echo_ordering(mask, cfg.timing.etl);
  return AcquisitionModel(m.basis.phi, synth_coils(cfg.coils.count, d, cfg.seed + 11), samples_from(mask, ordering),
                          cfg.timing.etl);
}

} // namespace

Scenario build_scenario(RunConfig const &cfg) { return build_scenario(cfg, build_modeling(cfg)); }

Scenario build_scenario(RunConfig const &cfg, Modeling modeling)
{
  auto phantom = build_phantom(cfg, modeling.dict.grid);
  Dims const d = phantom.dims;
  auto mask = build_mask(cfg, d, cfg.seed + 23);
  auto model = make_model(cfg, modeling, d, mask);
  AcquireOptions ao;
  ao.truncated = cfg.acquire.truncated;
  auto y = acquire(phantom, modeling.schedule, model, ao);
  require(cfg.acquire.noise_rel >= 0.0, "config: acquire.noise_rel must be non-negative");
  double const rms = y.values.norm() / std::sqrt(static_cast<double>(y.values.size()));
  double const sigma = cfg.acquire.noise_rel * rms;
  if (sigma > 0.0) {
    y.values += complex_noise(model.n_samples(), model.n_coils(), sigma, cfg.seed + 37).values;
  }
  Mask roi = scored_roi(phantom);
  return Scenario{cfg,  std::move(modeling), std::move(phantom), std::move(mask), std::move(model), std::move(y),
                  sigma, std::move(roi)};
}

CoefficientImage true_coefficients(Scenario const &s)
{
  auto const &p = s.phantom;
  auto const &phi = s.modeling.basis.phi;
  CoefficientImage x(p.dims, s.modeling.basis.rank());
  std::map<std::tuple<double, double, double, double>, Eigen::VectorXd> cache;
  for (int q = 0; q < p.dims.size(); ++q) {
    if (p.pd[q] == 0.0) {
      continue;
    }
    auto key = std::make_tuple(p.t1[q], p.t2[q], p.b1[q], p.ie[q]);
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto tp = p.voxel(q);
      tp.pd = 1.0;
      auto const ev = simulate_evolution(tp, s.modeling.schedule, s.cfg.steady);
      Eigen::Map<Eigen::VectorXd const> v(ev.values.data(), static_cast<Eigen::Index>(ev.values.size()));
      it = cache.emplace(key, phi.transpose() * v).first;
    }
    x.data.row(q) = (p.pd[q] * it->second).cast<Cx>().transpose();
  }
  return x;
}

ParameterMaps match_subspace(Scenario const &s, CoefficientImage const &x)
{
  return match_map(x.data, x.dims, s.phantom.b1, *s.modeling.subspace);
}

ParameterMaps match_contrasts(Scenario const &s, CoefficientImage const &c)
{
  require(c.channels() == kReadouts, "match_contrasts: expected five contrast images");
  return match_map(c.data, c.dims, s.phantom.b1, *s.modeling.five_point);
}

namespace {

MapMetrics map_metrics(Scenario const &s, RealMap const &est, RealMap const &ref)
{
  MapMetrics m;
  m.rmse = rmse_percent(est, ref, s.roi);
  LabelMap lab(s.phantom.labels.size(), 0);
  for (size_t i = 0; i < lab.size(); ++i) {
    lab[i] = s.roi[i] ? s.phantom.labels[i] : 0;
  }
  auto const est_stats = cov_roi(est, lab);
  auto const ref_stats = cov_roi(ref, lab);
  std::vector<double> rv;
  std::vector<double> ev;
  double cov = 0.0;
  for (size_t i = 0; i < est_stats.size(); ++i) {
    rv.push_back(ref_stats[i].mean);
    ev.push_back(est_stats[i].mean);
    cov += est_stats[i].cov_pct;
  }
  if (!rv.empty()) {
    m.bias = bland_altman(rv, ev).bias_pct;
    m.cov = cov / static_cast<double>(rv.size());
  }
  return m;
}

double score(MethodMetrics const &m) { return 0.5 * (m.t1.rmse + m.t2.rmse); }

double data_norm(Scenario const &s)
{
  double const v = adjoint(s.model, s.y).data.col(0).cwiseAbs().maxCoeff();
  return v > 0.0 ? v : 1.0;
}

} // namespace

MethodMetrics evaluate_maps(Scenario const &s, ParameterMaps const &m)
{
  return {map_metrics(s, m.t1, s.phantom.t1), map_metrics(s, m.t2, s.phantom.t2),
          map_metrics(s, m.pd, s.phantom.pd)};
}

MethodResult run_method(Scenario const &s, std::string const &method)
{
  auto const &sc = s.cfg.solver;
  MethodResult r;
  r.method = method;
  r.lambda = std::numeric_limits<double>::quiet_NaN();
  // Regularization weights are relative to max |A^H y|.
  double const scale = data_norm(s);
  KSpaceData yn = s.y;
  yn.values /= scale;

  auto finish = [&](CoefficientImage x, bool contrasts) {
    x.data *= scale;
    r.maps = contrasts ? match_contrasts(s, x) : match_subspace(s, x);
    r.image = std::move(x);
  };

  if (method == "cg") {
    SolverConfig c;
    c.max_iters = sc.cg_iters;
    c.tol = sc.tol;
    finish(recon_cg(yn, s.model, c).x, false);
    return r;
  }
  if (method == "llr" || method == "wavelet" || method == "pics") {
    auto const &grid = method == "llr" ? sc.llr_lambdas : method == "wavelet" ? sc.wavelet_lambdas : sc.pics_lambdas;
    require(!grid.empty(), "config: empty lambda grid for " + method);
    double best = std::numeric_limits<double>::infinity();
    double lip = 0.0;
    if (method != "pics") {
      lip = lipschitz_power_iter(s.model, 30, s.cfg.seed);
    }
    for (double lam : grid) {
      MethodResult cand;
      CoefficientImage x;
      if (method == "pics") {
        x = recon_contrast_pics(yn, s.model, lam, sc.fista_iters, sc.tol);
      } else {
        SolverConfig c;
        c.method = method == "llr" ? SolverMethod::Llr : SolverMethod::Wavelet;
        c.lambda = lam;
        c.max_iters = sc.fista_iters;
        c.tol = sc.tol;
        c.llr_block = sc.llr_block;
        c.wavelet_levels = sc.wavelet_levels;
        c.seed = s.cfg.seed;
        x = fista([&](CoefficientImage const &v) { return normal_apply(s.model, v); }, adjoint(s.model, yn),
                  yn.values.squaredNorm(), c, lip)
                .x;
      }
      x.data *= scale;
      auto maps = method == "pics" ? match_contrasts(s, x) : match_subspace(s, x);
      double const sc_val = score(evaluate_maps(s, maps));
      if (sc_val < best) {
        best = sc_val;
        r.lambda = lam;
        r.maps = std::move(maps);
        r.image = std::move(x);
      }
    }
    return r;
  }
  if (method == "zerodeep") {
    auto const trained = train(yn, s.model, s.cfg.train);
    finish(infer(yn, s.model, trained), false);
    r.lambda = trained.params.lambda();
    r.history = trained.history;
    return r;
  }
  throw InvalidInput("unknown method '" + method + "' (cg, llr, wavelet, zerodeep, pics)");
}

std::string fixed(double v, int digits)
{
  if (!std::isfinite(v)) {
    return "na";
  }
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string summary_csv(std::vector<SummaryRow> const &rows)
{
  std::ostringstream os;
  os << "method,lambda";
  for (char const *p : {"t1", "t2", "pd"}) {
    os << ',' << p << "_rmse_pct," << p << "_bias_pct," << p << "_cov_pct";
  }
  os << '\n';
  for (auto const &r : rows) {
    os << r.method << ',' << fixed(r.lambda, 8);
    for (auto const *m : {&r.metrics.t1, &r.metrics.t2, &r.metrics.pd}) {
      os << ',' << fixed(m->rmse) << ',' << fixed(m->bias) << ',' << fixed(m->cov);
    }
    os << '\n';
  }
  return os.str();
}

std::string history_csv(TrainHistory const &h)
{
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  size_t v = 0;
  for (size_t e = 0; e <= h.train_loss.size(); ++e) {
    bool const has_val = v < h.val_epoch.size() && h.val_epoch[v] == static_cast<int>(e);
    if (e == 0 && !has_val) {
      continue;
    }
    os << e << ',' << (e == 0 ? "" : fixed(h.train_loss[e - 1], 9)) << ',';
    if (has_val) {
      os << fixed(h.val_loss[v++], 9);
    }
    os << '\n';
  }
  return os.str();
}

void write_text(std::string const &path, std::string const &text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) {
    throw FormatError("cannot write " + path);
  }
}

void write_pgm(std::string const &path, RealMap const &m, Dims d)
{
  require(static_cast<int>(m.size()) == d.size(), "write_pgm: size mismatch");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : m) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::string px(m.size(), '\0');
  for (size_t i = 0; i < m.size(); ++i) {
    double const u = (hi > lo && std::isfinite(m[i])) ? (m[i] - lo) / (hi - lo) : 0.0;
    px[i] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(u, 0.0, 1.0))));
  }
  std::ostringstream os;
  os << "P5\n" << d.nz << ' ' << d.ny << "\n255\n" << px;
  write_text(path, os.str());
}

PipelineOutput run_pipeline(RunConfig const &cfg, std::string const &dir)
{
  require(!cfg.methods.empty(), "pipeline: no methods configured");
  if (!dir.empty()) {
    fs::create_directories(dir);
    write_config((fs::path(dir) / "resolved_config.json").string(), cfg);
  }
  auto const s = build_scenario(cfg);
  PipelineOutput out;
  for (auto const &m : cfg.methods) {
    auto r = run_method(s, m);
    out.summary.push_back({m, r.lambda, evaluate_maps(s, r.maps)});
    if (!dir.empty()) {
      auto const base = fs::path(dir) / m;
      write_array(base.string() + "_image.qsub", to_stored(r.image, {{"method", m}}));
      for (auto const &[name, map] : {std::pair{"t1", &r.maps.t1}, {"t2", &r.maps.t2}, {"pd", &r.maps.pd}}) {
        write_array(base.string() + "_" + name + ".qsub", map_to_stored(*map, r.maps.dims, {{"method", m}}));
        write_pgm(base.string() + "_" + name + ".pgm", *map, r.maps.dims);
      }
      if (m == "zerodeep") {
        write_text(base.string() + "_history.csv", history_csv(r.history));
      }
    }
    out.results.push_back(std::move(r));
  }
  if (!dir.empty()) {
    write_text((fs::path(dir) / "summary.csv").string(), summary_csv(out.summary));
  }
  return out;
}

GFactorComparison gfactor_compare(RunConfig const &cfg, Modeling const &modeling, int cg_iters)
{
  auto const phantom = build_phantom(cfg, modeling.dict.grid);
  Dims const d = phantom.dims;
  auto const mask = build_mask(cfg, d, cfg.seed + 23);
  auto const accel = make_model(cfg, modeling, d, mask);
  SamplingMask full = mask;
  for (auto &g : full.contrast) {
    std::fill(g.begin(), g.end(), 1);
  }
  auto const full_model = make_model(cfg, modeling, d, full);
  Mask support(d.size(), 0);
  for (int q = 0; q < d.size(); ++q) {
    support[q] = phantom.labels[q] > 0;
  }
  double const tol = 1e-8;
  ReconFn const sub = [&](AcquisitionModel const &m, KSpaceData const &y) {
    LinearOp const op = [&](CoefficientImage const &v) { return normal_apply(m, v); };
    return conjugate_gradient(op, adjoint(m, y), CoefficientImage(m.dims(), m.rank()), cg_iters, tol).x;
  };
  ReconFn const conv = [&](AcquisitionModel const &m, KSpaceData const &y) {
    CoefficientImage out(m.dims(), kReadouts);
    for (int c = 0; c < kReadouts; ++c) {
      auto const cm = contrast_model(m, c);
      auto const cy = contrast_data(m, y, c);
      LinearOp const op = [&](CoefficientImage const &v) { return normal_apply(cm, v); };
      out.data.col(c) =
          conjugate_gradient(op, adjoint(cm, cy), CoefficientImage(m.dims(), 1), cg_iters, tol).x.data.col(0);
    }
    return out;
  };
  int const n = cfg.eval.gfactor_iters;
  GFactorComparison g;
  g.subspace = gfactor_mc(accel, full_model, sub, n, cfg.seed, subspace_ratios(accel, full_model), support);
  g.conventional = gfactor_mc(accel, full_model, conv, n, cfg.seed, contrast_ratios(accel, full_model), support);
  auto mean = [](std::vector<double> const &v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  g.subspace_mean = mean(g.subspace.g_avg);
  g.conventional_mean = mean(g.conventional.g_avg);
  return g;
}

} // namespace qsub
