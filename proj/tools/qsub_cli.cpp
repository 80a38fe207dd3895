#include <CLI11.hpp>

#include <omp.h>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "qsub/config.h"
#include "qsub/container.h"
#include "qsub/error.h"
#include "qsub/evaluation.h"
#include "qsub/pipeline.h"

using namespace qsub;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common
{
  std::string config;
  std::string dir = "run";
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

RunConfig resolve(Common const &c)
{
  auto cfg = load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  if (c.jobs > 0) {
    omp_set_num_threads(c.jobs);
  }
  return cfg;
}

std::string in_dir(Common const &c, std::string const &name) { return (fs::path(c.dir) / name).string(); }

void prepare(Common const &c, RunConfig const &cfg)
{
  fs::create_directories(c.dir);
  write_config(in_dir(c, "resolved_config.json"), cfg);
}

// Phantom as a (6, ny, nz) f64 stack: t1, t2, pd, b1, ie, label.
void save_phantom(std::string const &path, DigitalPhantom const &p)
{
  std::vector<double> d;
  for (auto const *m : {&p.t1, &p.t2, &p.pd, &p.b1, &p.ie}) {
    d.insert(d.end(), m->begin(), m->end());
  }
  for (int l : p.labels) {
    d.push_back(l);
  }
  json tissues = json::array();
  for (auto const &t : p.tissues) {
    tissues.push_back({{"name", t.name}, {"label", t.label}, {"t1_ms", t.t1_ms}, {"t2_ms", t.t2_ms}, {"pd", t.pd}});
  }
  write_array(path, make_real({6, p.dims.ny, p.dims.nz}, std::move(d),
                              {{"kind", "phantom"}, {"planes", {"t1", "t2", "pd", "b1", "ie", "label"}},
                               {"tissues", tissues}}));
}

DigitalPhantom load_phantom(std::string const &path)
{
  auto const a = read_array(path);
  if (a.dtype != "f64" || a.shape.size() != 3 || a.shape[0] != 6 || a.meta.value("kind", "") != "phantom") {
    throw FormatError("not a phantom container: " + path);
  }
  DigitalPhantom p;
  p.dims = {static_cast<int>(a.shape[1]), static_cast<int>(a.shape[2])};
  auto const n = static_cast<size_t>(p.dims.size());
  auto plane = [&](int i) { return RealMap(a.real.begin() + i * n, a.real.begin() + (i + 1) * n); };
  p.t1 = plane(0);
  p.t2 = plane(1);
  p.pd = plane(2);
  p.b1 = plane(3);
  p.ie = plane(4);
  for (double v : plane(5)) {
    p.labels.push_back(static_cast<int>(v));
  }
  try {
    for (auto const &t : a.meta.at("tissues")) {
      p.tissues.push_back({t.at("name").get<std::string>(), t.at("label").get<int>(), t.at("t1_ms").get<double>(),
                           t.at("t2_ms").get<double>(), t.at("pd").get<double>()});
    }
  } catch (json::exception const &e) {
    throw FormatError("malformed phantom manifest: " + std::string(e.what()));
  }
  return p;
}

void save_model(Common const &c, AcquisitionModel const &m)
{
  write_array(in_dir(c, "basis.qsub"), to_stored(m.phi(), {{"kind", "basis"}}));
  auto const d = m.dims();
  write_array(in_dir(c, "coils.qsub"), to_stored(m.coils().maps, {{"kind", "coils"}, {"ny", d.ny}, {"nz", d.nz}}));
  std::vector<double> s;
  for (auto const &x : m.samples()) {
    s.push_back(x.echo);
    s.push_back(x.point);
  }
  write_array(in_dir(c, "samples.qsub"),
              make_real({m.n_samples(), 2}, std::move(s), {{"kind", "samples"}, {"etl", m.etl()}}));
}

Eigen::MatrixXd load_basis(Common const &c) { return real_matrix_from_stored(read_array(in_dir(c, "basis.qsub"))); }

AcquisitionModel load_model(Common const &c)
{
  auto const phi = load_basis(c);
  auto const ca = read_array(in_dir(c, "coils.qsub"));
  CoilSet coils;
  coils.maps = complex_matrix_from_stored(ca);
  coils.dims = {ca.meta.value("ny", 0), ca.meta.value("nz", 0)};
  if (coils.dims.size() != coils.maps.rows()) {
    throw FormatError("coil container dims do not match its rows");
  }
  auto const sa = read_array(in_dir(c, "samples.qsub"));
  auto const sm = real_matrix_from_stored(sa);
  std::vector<Sample> samples;
  for (Eigen::Index i = 0; i < sm.rows(); ++i) {
    samples.push_back({static_cast<int>(sm(i, 0)), static_cast<int>(sm(i, 1))});
  }
  return AcquisitionModel(phi, coils, samples, sa.meta.value("etl", 1));
}

KSpaceData load_kspace(Common const &c)
{
  return KSpaceData{complex_matrix_from_stored(read_array(in_dir(c, "kspace.qsub")))};
}

void save_maps(Common const &c, ParameterMaps const &m, std::string const &tag)
{
  std::vector<double> d;
  for (auto const *x : {&m.t1, &m.t2, &m.pd}) {
    d.insert(d.end(), x->begin(), x->end());
  }
  write_array(in_dir(c, "maps.qsub"),
              make_real({3, m.dims.ny, m.dims.nz}, std::move(d), {{"kind", "maps"}, {"source", tag}}));
  write_pgm(in_dir(c, "map_t1.pgm"), m.t1, m.dims);
  write_pgm(in_dir(c, "map_t2.pgm"), m.t2, m.dims);
  write_pgm(in_dir(c, "map_pd.pgm"), m.pd, m.dims);
}

ParameterMaps load_maps(std::string const &path)
{
  auto const a = read_array(path);
  if (a.dtype != "f64" || a.shape.size() != 3 || a.shape[0] != 3) {
    throw FormatError("not a maps container: " + path);
  }
  ParameterMaps m;
  m.dims = {static_cast<int>(a.shape[1]), static_cast<int>(a.shape[2])};
  auto const n = static_cast<size_t>(m.dims.size());
  m.t1.assign(a.real.begin(), a.real.begin() + n);
  m.t2.assign(a.real.begin() + n, a.real.begin() + 2 * n);
  m.pd.assign(a.real.begin() + 2 * n, a.real.end());
  return m;
}

std::pair<double, double> parse_r(std::string const &s)
{
  auto const x = s.find('x');
  try {
    if (x == std::string::npos) {
      double const r = std::stod(s);
      return {r, 1.0};
    }
    return {std::stod(s.substr(0, x)), std::stod(s.substr(x + 1))};
  } catch (std::exception const &) {
    throw InvalidInput("--R expects RYxRZ, e.g. 3x3");
  }
}

std::vector<std::string> split_list(std::string const &s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

// --- subcommands -----------------------------------------------------------

void cmd_simulate(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const sched = build_schedule(cfg.timing);
  auto const ev = simulate_evolution(cfg.simulate.tissue, sched, cfg.steady);
  std::ostringstream os;
  os << "echo,time_ms,signal\n";
  for (size_t i = 0; i < ev.values.size(); ++i) {
    os << i << ',' << fixed(ev.echo_times[i], 3) << ',' << fixed(ev.values[i], 12) << '\n';
  }
  write_text(in_dir(c, "evolution.csv"), os.str());
  auto const fp = extract_five_point(ev, sched);
  std::ostringstream f;
  f << "readout,signal\n";
  for (int k = 0; k < kReadouts; ++k) {
    f << k + 1 << ',' << fixed(fp.values[k], 12) << '\n';
  }
  write_text(in_dir(c, "five_point.csv"), f.str());
  write_array(in_dir(c, "evolution.qsub"),
              make_real({static_cast<std::int64_t>(ev.values.size())}, ev.values, {{"blocks_used", ev.blocks_used}}));
  std::cout << "simulated " << ev.values.size() << " echoes in " << ev.blocks_used << " blocks\n";
}

void cmd_dict(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const grid = build_grid(grid_spec(cfg.grid));
  auto const d = build_dictionary(grid, build_schedule(cfg.timing), ie_mode(cfg.grid), cfg.steady);
  Eigen::MatrixXd const atoms = d.atoms;
  write_array(in_dir(c, "dict_atoms.qsub"), to_stored(atoms, {{"kind", "dictionary"}}));
  std::vector<double> p;
  for (auto const &t : d.params) {
    p.insert(p.end(), {t.t1_ms, t.t2_ms, t.b1, t.ie});
  }
  write_array(in_dir(c, "dict_params.qsub"),
              make_real({d.n_atoms(), 4}, std::move(p), {{"columns", {"t1_ms", "t2_ms", "b1", "ie"}}}));
  std::cout << "dictionary: " << d.n_atoms() << " atoms x " << d.echoes() << " echoes\n";
}

void cmd_basis(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const m = build_modeling(cfg);
  write_array(in_dir(c, "basis.qsub"), to_stored(m.basis.phi, {{"kind", "basis"}, {"err_pct", m.basis_error_pct}}));
  std::ostringstream os;
  os << "k,singular_value,error_pct\n";
  for (int k = 1; k <= std::min<int>(10, static_cast<int>(m.basis.singular_values.size())); ++k) {
    os << k << ',' << fixed(m.basis.singular_values[k - 1], 9) << ','
       << fixed(basis_error_from_spectrum(m.basis.singular_values, k), 6) << '\n';
  }
  write_text(in_dir(c, "basis_spectrum.csv"), os.str());
  std::cout << "basis K=" << m.basis.rank() << " error " << fixed(m.basis_error_pct, 4) << "%\n";
}

void cmd_phantom(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const p = build_phantom(cfg, build_grid(grid_spec(cfg.grid)));
  save_phantom(in_dir(c, "phantom.qsub"), p);
  RealMap lab(p.labels.begin(), p.labels.end());
  write_pgm(in_dir(c, "phantom_labels.pgm"), lab, p.dims);
  write_pgm(in_dir(c, "phantom_t1.pgm"), p.t1, p.dims);
  write_pgm(in_dir(c, "phantom_t2.pgm"), p.t2, p.dims);
  std::cout << "phantom " << cfg.phantom.kind << " " << p.dims.ny << "x" << p.dims.nz << ", "
            << p.tissues.size() << " tissues\n";
}

void cmd_acquire(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const s = build_scenario(cfg);
  save_phantom(in_dir(c, "phantom.qsub"), s.phantom);
  save_model(c, s.model);
  write_array(in_dir(c, "kspace.qsub"), to_stored(s.y.values, {{"kind", "kspace"}, {"noise_sigma", s.noise_sigma}}));
  for (int k = 0; k < kReadouts; ++k) {
    RealMap m(s.mask.contrast[k].begin(), s.mask.contrast[k].end());
    write_pgm(in_dir(c, "mask_" + std::to_string(k + 1) + ".pgm"), m, s.mask.dims);
  }
  std::cout << "acquired " << s.model.n_samples() << " samples x " << s.model.n_coils() << " coils\n";
}

void write_history(Common const &c, std::vector<double> const &h, std::string const &name)
{
  std::ostringstream os;
  os << "iteration,value\n";
  for (size_t i = 0; i < h.size(); ++i) {
    os << i << ',' << fixed(h[i], 12) << '\n';
  }
  write_text(in_dir(c, name), os.str());
}

struct ReconArgs
{
  std::string method = "cg";
  std::optional<double> lambda;
  std::optional<int> iters;
  std::optional<double> tol;
};

void cmd_recon(Common const &c, ReconArgs const &a)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const model = load_model(c);
  auto const y = load_kspace(c);
  double const tol = a.tol.value_or(cfg.solver.tol);
  if (a.method == "pics") {
    double const lam = a.lambda.value_or(cfg.solver.pics_lambdas.at(0));
    auto const x = recon_contrast_pics(y, model, lam, a.iters.value_or(cfg.solver.fista_iters), tol);
    write_array(in_dir(c, "contrasts.qsub"), to_stored(x, {{"method", "pics"}, {"lambda", lam}}));
    std::cout << "pics reconstruction written\n";
    return;
  }
  SolverConfig s;
  s.method = parse_solver_method(a.method);
  s.lambda = a.lambda.value_or(s.method == SolverMethod::Llr       ? cfg.solver.llr_lambdas.at(0)
                               : s.method == SolverMethod::Wavelet ? cfg.solver.wavelet_lambdas.at(0)
                                                                   : 0.0);
  s.max_iters = a.iters.value_or(s.method == SolverMethod::Cg ? cfg.solver.cg_iters : cfg.solver.fista_iters);
  s.tol = tol;
  s.llr_block = cfg.solver.llr_block;
  s.wavelet_levels = cfg.solver.wavelet_levels;
  s.seed = cfg.seed;
  auto const r = s.method == SolverMethod::Cg ? recon_cg(y, model, s) : recon_fista(y, model, s);
  write_array(in_dir(c, "coeffs.qsub"), to_stored(r.x, {{"method", a.method}, {"lambda", s.lambda}}));
  write_history(c, r.history, "history.csv");
  std::cout << a.method << ": " << r.iterations << " iterations" << (r.converged ? ", converged" : "") << "\n";
}

void add_train_flags(CLI::App *sub, TrainConfig &t, CLI::App *app_for_first)
{
  (void)app_for_first;
  sub->add_option("--mu", t.mu, "l1 weight of the mixed loss");
  sub->add_option("--lr", t.lr, "Adam learning rate");
  sub->add_option("--beta1", t.beta1, "Adam beta1");
  sub->add_option("--beta2", t.beta2, "Adam beta2");
  sub->add_option("--adam-eps", t.adam_eps, "Adam epsilon");
  sub->add_option("--splits", t.splits, "number of V/W split sets");
  sub->add_option("--epochs", t.epochs, "maximum epochs");
  sub->add_option("--steps-per-epoch", t.steps_per_epoch, "steps per epoch (0: one per split)");
  sub->add_option("--val-every", t.val_every, "validation cadence in epochs");
  sub->add_option("--patience", t.patience, "validations without improvement before stopping");
  sub->add_option("--unroll", t.unroll, "unrolled iterations");
  sub->add_option("--dc-cg-iters", t.dc_cg_iters, "CG iterations per data-consistency step");
  sub->add_option("--dc-tol", t.dc_tol, "CG tolerance of the data-consistency step");
  sub->add_option("--z-fraction", t.z_fraction, "validation share of every echo");
  sub->add_option("--vw-ratio", t.vw_ratio, "consistency share of the remaining points");
  sub->add_option("--width", t.width, "hidden feature maps");
  sub->add_option("--blocks", t.blocks, "convolution blocks");
  sub->add_option("--lambda0", t.lambda0, "initial data-consistency weight");
  sub->add_flag("--phase-normalization,!--no-phase-normalization", t.phase_normalization, "normalize channel phase");
}

// Train flags are collected into a config overlay; unset flags keep the file values.
struct TrainOverlay
{
  TrainConfig values;
  CLI::App *sub = nullptr;

  void apply(TrainConfig &t) const
  {
    auto set = [&](char const *flag, auto &dst, auto const &src) {
      if (sub->count(flag) > 0) {
        dst = src;
      }
    };
    set("--mu", t.mu, values.mu);
    set("--lr", t.lr, values.lr);
    set("--beta1", t.beta1, values.beta1);
    set("--beta2", t.beta2, values.beta2);
    set("--adam-eps", t.adam_eps, values.adam_eps);
    set("--splits", t.splits, values.splits);
    set("--epochs", t.epochs, values.epochs);
    set("--steps-per-epoch", t.steps_per_epoch, values.steps_per_epoch);
    set("--val-every", t.val_every, values.val_every);
    set("--patience", t.patience, values.patience);
    set("--unroll", t.unroll, values.unroll);
    set("--dc-cg-iters", t.dc_cg_iters, values.dc_cg_iters);
    set("--dc-tol", t.dc_tol, values.dc_tol);
    set("--z-fraction", t.z_fraction, values.z_fraction);
    set("--vw-ratio", t.vw_ratio, values.vw_ratio);
    set("--width", t.width, values.width);
    set("--blocks", t.blocks, values.blocks);
    set("--lambda0", t.lambda0, values.lambda0);
    if (sub->count("--phase-normalization") + sub->count("--no-phase-normalization") > 0) {
      t.phase_normalization = values.phase_normalization;
    }
  }
};

void cmd_train(Common const &c, TrainOverlay const &o)
{
  auto cfg = resolve(c);
  o.apply(cfg.train);
  prepare(c, cfg);
  auto const model = load_model(c);
  auto const y = load_kspace(c);
  auto const t = train(y, model, cfg.train);
  save_checkpoint(in_dir(c, "checkpoint.qsub"), t, cfg.train);
  std::ostringstream os;
  os << "epoch,train_loss\n";
  for (size_t i = 0; i < t.history.train_loss.size(); ++i) {
    os << i + 1 << ',' << fixed(t.history.train_loss[i], 9) << '\n';
  }
  write_text(in_dir(c, "train_history.csv"), os.str());
  std::ostringstream v;
  v << "epoch,val_loss\n";
  for (size_t i = 0; i < t.history.val_loss.size(); ++i) {
    v << t.history.val_epoch[i] << ',' << fixed(t.history.val_loss[i], 9) << '\n';
  }
  write_text(in_dir(c, "val_history.csv"), v.str());
  std::cout << "trained " << t.history.steps << " steps, best epoch " << t.history.best_epoch << ", lambda "
            << t.params.lambda() << "\n";
}

void cmd_infer(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const model = load_model(c);
  auto const y = load_kspace(c);
  auto const t = load_checkpoint(in_dir(c, "checkpoint.qsub"));
  write_array(in_dir(c, "coeffs.qsub"), to_stored(infer(y, model, t), {{"method", "zerodeep"}}));
  std::cout << "inference written\n";
}

void cmd_match(Common const &c, std::string input)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const phantom = load_phantom(in_dir(c, "phantom.qsub"));
  auto const grid = build_grid(grid_spec(cfg.grid));
  auto const dict = build_dictionary(grid, build_schedule(cfg.timing), ie_mode(cfg.grid), cfg.steady);
  if (input.empty()) {
    input = fs::exists(in_dir(c, "coeffs.qsub")) ? "coeffs.qsub" : "contrasts.qsub";
  }
  auto const a = read_array(in_dir(c, input));
  auto const x = image_from_stored(a);
  ParameterMaps maps;
  if (a.meta.value("method", "") == "pics") {
    maps = match_map(x.data, x.dims, phantom.b1, DictionaryMatcher::five_point(dict));
  } else {
    SubspaceBasis b;
    b.phi = load_basis(c);
    maps = match_map(x.data, x.dims, phantom.b1, DictionaryMatcher::subspace(dict, b));
  }
  save_maps(c, maps, input);
  std::cout << "matched " << x.dims.size() << " voxels\n";
}

void cmd_gfactor(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const m = build_modeling(cfg);
  auto const g = gfactor_compare(cfg, m);
  std::ostringstream os;
  os << "kind,channel,R,g_avg,g_max\n";
  auto rows = [&](char const *kind, GFactorReport const &r) {
    for (size_t i = 0; i < r.g_avg.size(); ++i) {
      os << kind << ',' << i + 1 << ',' << fixed(r.ratio[i]) << ',' << fixed(r.g_avg[i]) << ','
         << fixed(r.g_max[i]) << '\n';
      write_pgm(in_dir(c, std::string("gfactor_") + kind + "_" + std::to_string(i + 1) + ".pgm"), r.g[i], r.dims);
    }
  };
  rows("subspace", g.subspace);
  rows("conventional", g.conventional);
  write_text(in_dir(c, "gfactor.csv"), os.str());
  std::cout << "mean G_avg subspace " << fixed(g.subspace_mean, 4) << ", conventional "
            << fixed(g.conventional_mean, 4) << "\n";
}

void cmd_synth(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const maps = load_maps(in_dir(c, "maps.qsub"));
  for (auto const &spec : cfg.synth.contrasts) {
    auto const img = synth_contrast(maps.t1, maps.t2, maps.pd, spec);
    auto const name = "synth_" + to_string(spec.kind);
    write_array(in_dir(c, name + ".qsub"), map_to_stored(img, maps.dims, {{"kind", to_string(spec.kind)}}));
    write_pgm(in_dir(c, name + ".pgm"), img, maps.dims);
  }
  std::cout << "synthesized " << cfg.synth.contrasts.size() << " contrasts\n";
}

void cmd_metrics(Common const &c)
{
  auto const cfg = resolve(c);
  prepare(c, cfg);
  auto const maps = load_maps(in_dir(c, "maps.qsub"));
  auto const p = load_phantom(in_dir(c, "phantom.qsub"));
  std::ostringstream os;
  os << "label,name,param,ref,mean,std,cov_pct,n\n";
  for (auto const &[name, est, ref] :
       {std::tuple{"t1", &maps.t1, &p.t1}, std::tuple{"t2", &maps.t2, &p.t2}, std::tuple{"pd", &maps.pd, &p.pd}}) {
    auto const stats = cov_roi(*est, p.labels);
    for (auto const &s : stats) {
      std::string tname;
      double r = 0.0;
      for (auto const &t : p.tissues) {
        if (t.label == s.label) {
          tname = t.name;
        }
      }
      for (size_t i = 0; i < p.labels.size(); ++i) {
        if (p.labels[i] == s.label) {
          r = (*ref)[i];
          break;
        }
      }
      os << s.label << ',' << tname << ',' << name << ',' << fixed(r) << ',' << fixed(s.mean) << ','
         << fixed(s.std) << ',' << fixed(s.cov_pct) << ',' << s.n << '\n';
    }
  }
  write_text(in_dir(c, "metrics.csv"), os.str());
  std::cout << "metrics written\n";
}

void cmd_pipeline(Common const &c, std::string const &methods, std::string const &r)
{
  auto cfg = resolve(c);
  if (!methods.empty()) {
    cfg.methods = split_list(methods);
  }
  if (!r.empty()) {
    std::tie(cfg.masks.ry, cfg.masks.rz) = parse_r(r);
  }
  auto const out = run_pipeline(cfg, c.dir);
  std::cout << summary_csv(out.summary);
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"qsub: subspace QALAS mapping toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App *s) {
    s->add_option("--config", common.config, "JSON run configuration");
    s->add_option("--dir", common.dir, "run directory for inputs and outputs");
    s->add_option("--seed", common.seed, "override the configuration seed");
    s->add_option("--jobs", common.jobs, "worker threads");
  };

  std::vector<std::pair<CLI::App *, std::function<void()>>> cmds;
  auto simple = [&](char const *name, char const *help, void (*fn)(Common const &)) {
    auto *s = app.add_subcommand(name, help);
    add_common(s);
    cmds.emplace_back(s, [fn, &common] { fn(common); });
  };
  simple("simulate", "simulate one tissue's signal evolution", cmd_simulate);
  simple("dict", "build the signal dictionary", cmd_dict);
  simple("basis", "compute the subspace basis", cmd_basis);
  simple("phantom", "build the digital phantom", cmd_phantom);
  simple("acquire", "simulate undersampled multi-coil k-space", cmd_acquire);
  simple("infer", "reconstruct with a trained checkpoint", cmd_infer);
  simple("gfactor", "Monte-Carlo g-factor comparison", cmd_gfactor);
  simple("synth", "synthesize contrasts from parameter maps", cmd_synth);
  simple("metrics", "ROI statistics of parameter maps", cmd_metrics);

  ReconArgs ra;
  auto *recon = app.add_subcommand("recon", "classical subspace or per-contrast reconstruction");
  add_common(recon);
  recon->add_option("--method", ra.method, "cg | llr | wavelet | pics");
  recon->add_option("--lambda", ra.lambda, "regularization weight");
  recon->add_option("--iters", ra.iters, "maximum iterations");
  recon->add_option("--tol", ra.tol, "stopping tolerance");
  cmds.emplace_back(recon, [&] { cmd_recon(common, ra); });

  TrainOverlay to;
  auto *tr = app.add_subcommand("train", "zero-shot training of the unrolled network");
  add_common(tr);
  add_train_flags(tr, to.values, &app);
  to.sub = tr;
  cmds.emplace_back(tr, [&] { cmd_train(common, to); });

  std::string match_input;
  auto *mt = app.add_subcommand("match", "dictionary matching of reconstructed images");
  add_common(mt);
  mt->add_option("--input", match_input, "image container inside the run directory");
  cmds.emplace_back(mt, [&] { cmd_match(common, match_input); });

  std::string methods;
  std::string rfac;
  auto *pl = app.add_subcommand("pipeline", "phantom to metrics for several methods");
  add_common(pl);
  pl->add_option("--method", methods, "comma-separated methods");
  pl->add_option("--R", rfac, "reduction factors RYxRZ");
  cmds.emplace_back(pl, [&] { cmd_pipeline(common, methods, rfac); });

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    for (auto &[sub, fn] : cmds) {
      if (sub->parsed()) {
        fn();
      }
    }
  } catch (Error const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (fs::filesystem_error const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
