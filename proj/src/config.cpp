#include "qsub/config.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "qsub/error.h"

namespace qsub {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Section
{
public:
  Section(json const &j, std::string path)
      : j_(j)
      , path_(std::move(path))
  {
    if (!j_.is_object()) {
      throw InvalidInput("config: '" + path_ + "' must be an object");
    }
  }

  template <typename T>
  void get(char const *key, T &out)
  {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return;
    }
    try {
      out = j_.at(key).get<T>();
    } catch (json::exception const &) {
      throw InvalidInput("config: bad value for '" + path_ + "." + key + "'");
    }
  }

  json const *child(char const *key)
  {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(char const *key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const
  {
    for (auto const &[k, v] : j_.items()) {
      if (!seen_.count(k)) {
        throw InvalidInput("config: unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
      }
    }
  }

private:
  json const &j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_child(Section &s, char const *key, Fn &&fn)
{
  if (auto const *c = s.child(key)) {
    Section sub(*c, s.path(key));
    fn(sub);
    sub.finish();
  }
}

json contrast_json(ContrastSpec const &c)
{
  return {{"kind", to_string(c.kind)}, {"tr_ms", c.tr_ms}, {"te_ms", c.te_ms}, {"ti_ms", c.ti_ms}};
}

} // namespace

json to_json(RunConfig const &c)
{
  json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["methods"] = c.methods;
  auto const &t = c.timing;
  j["timing"] = {{"tr_ms", t.tr_ms},     {"te_t2prep_ms", t.te_t2prep_ms}, {"esp_ms", t.esp_ms},
                 {"etl", t.etl},         {"flip_deg", t.flip_deg},         {"inv_delay_ms", t.inv_delay_ms}};
  j["steady"] = {{"tol", c.steady.tol}, {"max_blocks", c.steady.max_blocks}};
  j["grid"] = {{"t1_t2", c.grid.t1_t2}, {"b1", c.grid.b1}, {"ie_fixed", c.grid.ie_fixed}};
  j["basis"] = {{"k", c.basis.k}, {"err_pct", c.basis.err_pct}};
  auto const &p = c.phantom;
  j["phantom"] = {{"kind", p.kind},
                  {"ny", p.ny},
                  {"nz", p.nz},
                  {"b1", {{"flat", p.b1.flat}, {"value", p.b1.value}, {"lo", p.b1.lo}, {"hi", p.b1.hi}}},
                  {"snap_b1", p.snap_b1},
                  {"ie", p.ie}};
  j["coils"] = {{"count", c.coils.count}};
  auto const &m = c.masks;
  j["masks"] = {{"pattern", m.pattern}, {"ry", m.ry}, {"rz", m.rz}, {"jitter_pct", m.jitter_pct},
                {"vary_across_contrasts", m.vary_across_contrasts}};
  j["acquire"] = {{"noise_rel", c.acquire.noise_rel}, {"truncated", c.acquire.truncated}};
  auto const &s = c.solver;
  j["solver"] = {{"cg_iters", s.cg_iters},         {"fista_iters", s.fista_iters},
                 {"tol", s.tol},                   {"llr_block", s.llr_block},
                 {"wavelet_levels", s.wavelet_levels}, {"llr_lambdas", s.llr_lambdas},
                 {"wavelet_lambdas", s.wavelet_lambdas}, {"pics_lambdas", s.pics_lambdas}};
  auto const &r = c.train;
  j["train"] = {{"mu", r.mu},
                {"lr", r.lr},
                {"beta1", r.beta1},
                {"beta2", r.beta2},
                {"adam_eps", r.adam_eps},
                {"splits", r.splits},
                {"epochs", r.epochs},
                {"steps_per_epoch", r.steps_per_epoch},
                {"val_every", r.val_every},
                {"patience", r.patience},
                {"unroll", r.unroll},
                {"dc_cg_iters", r.dc_cg_iters},
                {"dc_tol", r.dc_tol},
                {"z_fraction", r.z_fraction},
                {"vw_ratio", r.vw_ratio},
                {"width", r.width},
                {"blocks", r.blocks},
                {"lambda0", r.lambda0},
                {"phase_normalization", r.phase_normalization}};
  j["eval"] = {{"gfactor_iters", c.eval.gfactor_iters}};
  auto const &ts = c.simulate.tissue;
  j["simulate"] = {{"t1_ms", ts.t1_ms}, {"t2_ms", ts.t2_ms}, {"pd", ts.pd}, {"b1", ts.b1}, {"ie", ts.ie}};
  json cs = json::array();
  for (auto const &x : c.synth.contrasts) {
    cs.push_back(contrast_json(x));
  }
  j["synth"] = {{"contrasts", cs}};
  return j;
}

RunConfig config_from_json(json const &j)
{
  RunConfig c;
  Section top(j, "");
  top.get("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion) {
    throw InvalidInput("config: unsupported schema_version " + std::to_string(c.schema_version));
  }
  top.get("seed", c.seed);
  top.get("methods", c.methods);
  with_child(top, "timing", [&](Section &s) {
    s.get("tr_ms", c.timing.tr_ms);
    s.get("te_t2prep_ms", c.timing.te_t2prep_ms);
    s.get("esp_ms", c.timing.esp_ms);
    s.get("etl", c.timing.etl);
    s.get("flip_deg", c.timing.flip_deg);
    s.get("inv_delay_ms", c.timing.inv_delay_ms);
  });
  with_child(top, "steady", [&](Section &s) {
    s.get("tol", c.steady.tol);
    s.get("max_blocks", c.steady.max_blocks);
  });
  with_child(top, "grid", [&](Section &s) {
    s.get("t1_t2", c.grid.t1_t2);
    s.get("b1", c.grid.b1);
    s.get("ie_fixed", c.grid.ie_fixed);
  });
  with_child(top, "basis", [&](Section &s) {
    s.get("k", c.basis.k);
    s.get("err_pct", c.basis.err_pct);
  });
  with_child(top, "phantom", [&](Section &s) {
    s.get("kind", c.phantom.kind);
    s.get("ny", c.phantom.ny);
    s.get("nz", c.phantom.nz);
    with_child(s, "b1", [&](Section &b) {
      b.get("flat", c.phantom.b1.flat);
      b.get("value", c.phantom.b1.value);
      b.get("lo", c.phantom.b1.lo);
      b.get("hi", c.phantom.b1.hi);
    });
    s.get("snap_b1", c.phantom.snap_b1);
    s.get("ie", c.phantom.ie);
  });
  with_child(top, "coils", [&](Section &s) { s.get("count", c.coils.count); });
  with_child(top, "masks", [&](Section &s) {
    s.get("pattern", c.masks.pattern);
    s.get("ry", c.masks.ry);
    s.get("rz", c.masks.rz);
    s.get("jitter_pct", c.masks.jitter_pct);
    s.get("vary_across_contrasts", c.masks.vary_across_contrasts);
  });
  with_child(top, "acquire", [&](Section &s) {
    s.get("noise_rel", c.acquire.noise_rel);
    s.get("truncated", c.acquire.truncated);
  });
  with_child(top, "solver", [&](Section &s) {
    s.get("cg_iters", c.solver.cg_iters);
    s.get("fista_iters", c.solver.fista_iters);
    s.get("tol", c.solver.tol);
    s.get("llr_block", c.solver.llr_block);
    s.get("wavelet_levels", c.solver.wavelet_levels);
    s.get("llr_lambdas", c.solver.llr_lambdas);
    s.get("wavelet_lambdas", c.solver.wavelet_lambdas);
    s.get("pics_lambdas", c.solver.pics_lambdas);
  });
  with_child(top, "train", [&](Section &s) {
    auto &r = c.train;
    s.get("mu", r.mu);
    s.get("lr", r.lr);
    s.get("beta1", r.beta1);
    s.get("beta2", r.beta2);
    s.get("adam_eps", r.adam_eps);
    s.get("splits", r.splits);
    s.get("epochs", r.epochs);
    s.get("steps_per_epoch", r.steps_per_epoch);
    s.get("val_every", r.val_every);
    s.get("patience", r.patience);
    s.get("unroll", r.unroll);
    s.get("dc_cg_iters", r.dc_cg_iters);
    s.get("dc_tol", r.dc_tol);
    s.get("z_fraction", r.z_fraction);
    s.get("vw_ratio", r.vw_ratio);
    s.get("width", r.width);
    s.get("blocks", r.blocks);
    s.get("lambda0", r.lambda0);
    s.get("phase_normalization", r.phase_normalization);
  });
  with_child(top, "eval", [&](Section &s) { s.get("gfactor_iters", c.eval.gfactor_iters); });
  with_child(top, "simulate", [&](Section &s) {
    auto &t = c.simulate.tissue;
    s.get("t1_ms", t.t1_ms);
    s.get("t2_ms", t.t2_ms);
    s.get("pd", t.pd);
    s.get("b1", t.b1);
    s.get("ie", t.ie);
  });
  with_child(top, "synth", [&](Section &s) {
    if (auto const *arr = s.child("contrasts")) {
      if (!arr->is_array()) {
        throw InvalidInput("config: 'synth.contrasts' must be an array");
      }
      c.synth.contrasts.clear();
      for (size_t i = 0; i < arr->size(); ++i) {
        Section e((*arr)[i], "synth.contrasts[" + std::to_string(i) + "]");
        std::string kind = "t1w";
        ContrastSpec cs;
        e.get("kind", kind);
        cs.kind = parse_contrast_kind(kind);
        e.get("tr_ms", cs.tr_ms);
        e.get("te_ms", cs.te_ms);
        e.get("ti_ms", cs.ti_ms);
        e.finish();
        c.synth.contrasts.push_back(cs);
      }
    }
  });
  top.finish();
  c.train.seed = c.seed;
  validate(c);
  return c;
}

void validate(RunConfig const &c)
{
  static std::set<std::string> const known{"cg", "llr", "wavelet", "zerodeep", "pics"};
  require(!c.methods.empty(), "config: methods must not be empty");
  for (auto const &m : c.methods) {
    require(known.count(m) == 1, "config: unknown method '" + m + "'");
  }
  build_schedule(c.timing);
  require(c.steady.tol > 0.0 && c.steady.max_blocks >= 1, "config: invalid steady-state settings");
  grid_spec(c.grid);
  require(c.basis.k >= 1 || c.basis.err_pct > 0.0, "config: basis needs k >= 1 or a positive err_pct");
  require(c.phantom.kind == "nist" || c.phantom.kind == "brain", "config: phantom.kind must be 'nist' or 'brain'");
  require(c.phantom.ny >= 4 && c.phantom.nz >= 4, "config: phantom must be at least 4x4");
  require(c.phantom.ie >= 0.0 && c.phantom.ie <= 1.0, "config: phantom.ie must lie in [0, 1]");
  require(c.coils.count >= 1, "config: coils.count must be positive");
  auto const &m = c.masks;
  require(m.pattern == "poisson" || m.pattern == "uniform", "config: masks.pattern must be 'poisson' or 'uniform'");
  require(m.ry >= 1.0 && m.rz >= 1.0 && m.jitter_pct >= 0.0, "config: invalid mask reduction factors");
  require(c.acquire.noise_rel >= 0.0, "config: acquire.noise_rel must be non-negative");
  auto const &s = c.solver;
  require(s.cg_iters >= 1 && s.fista_iters >= 1 && s.tol > 0.0, "config: solver iterations and tol must be positive");
  require(s.llr_block >= 1 && s.wavelet_levels >= 0, "config: invalid llr_block or wavelet_levels");
  for (auto const *grid : {&s.llr_lambdas, &s.wavelet_lambdas, &s.pics_lambdas}) {
    require(!grid->empty(), "config: lambda grids must not be empty");
    for (double l : *grid) {
      require(l >= 0.0 && std::isfinite(l), "config: lambdas must be finite and non-negative");
    }
  }
  c.train.validate();
  require(c.eval.gfactor_iters >= 2, "config: eval.gfactor_iters must be at least 2");
  qsub::validate(c.simulate.tissue);
  for (auto const &cs : c.synth.contrasts) {
    qsub::validate(cs);
  }
}

RunConfig load_config(std::string const &path)
{
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) {
      throw FormatError("cannot open config: " + path);
    }
    try {
      j = json::parse(in);
    } catch (json::parse_error const &e) {
      throw FormatError("config is not valid JSON: " + std::string(e.what()));
    }
  }
  auto c = config_from_json(j);
  if (char const *env = std::getenv("QSUB_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (std::exception const &) {
      throw InvalidInput("QSUB_SEED must be an unsigned integer");
    }
    c.train.seed = c.seed;
  }
  return c;
}

void write_config(std::string const &path, RunConfig const &c)
{
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot write " + path);
  }
  out << to_json(c).dump(2) << "\n";
}

GridSpec grid_spec(GridSection const &g)
{
  auto pick = [](std::string const &name) {
    if (name == "desk") {
      return desk_grid_spec();
    }
    if (name == "paper") {
      return paper_grid_spec();
    }
    throw InvalidInput("config: grid preset must be 'desk' or 'paper', got '" + name + "'");
  };
  GridSpec s = pick(g.t1_t2);
  s.b1 = pick(g.b1).b1;
  if (g.ie_fixed > 0.0) {
    s.ie = {{g.ie_fixed, g.ie_fixed, 0.0}};
  }
  return s;
}

IeMode ie_mode(GridSection const &g) { return g.ie_fixed > 0.0 ? IeMode::fixed_at(g.ie_fixed) : IeMode::full(); }

} // namespace qsub
