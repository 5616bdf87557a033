#include "marginlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "marginlab/errors.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

Section::Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
  if (!obj_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + " must be a JSON object");
}

bool Section::has(const std::string& key) const { return obj_.contains(key); }

const json* Section::get(const std::string& key, bool required) {
  if (!obj_.contains(key)) {
    if (required) throw ConfigError("missing required key '" + name(key) + "'");
    return nullptr;
  }
  seen_.push_back(key);
  return &obj_.at(key);
}

const json& Section::raw(const std::string& key) { return *get(key, true); }

double Section::num(const std::string& key, std::optional<double> fallback) {
  const json* v = get(key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_number()) throw ConfigError("'" + name(key) + "' must be a number");
  return v->get<double>();
}

std::int64_t Section::integer(const std::string& key, std::optional<std::int64_t> fallback) {
  const json* v = get(key, !fallback.has_value());
  if (!v) return *fallback;
  if (v->is_number_integer()) return v->get<std::int64_t>();
  // accept 1e6-style literals when they are whole numbers
  if (v->is_number_float()) {
    const double d = v->get<double>();
    if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
  }
  throw ConfigError("'" + name(key) + "' must be an integer");
}

std::uint64_t Section::u64(const std::string& key, std::optional<std::uint64_t> fallback) {
  const json* v = get(key, !fallback.has_value());
  if (!v) return *fallback;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
  throw ConfigError("'" + name(key) + "' must be a nonnegative integer");
}

std::string Section::str(const std::string& key, std::optional<std::string> fallback) {
  const json* v = get(key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_string()) throw ConfigError("'" + name(key) + "' must be a string");
  return v->get<std::string>();
}

bool Section::boolean(const std::string& key, std::optional<bool> fallback) {
  const json* v = get(key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_boolean()) throw ConfigError("'" + name(key) + "' must be true or false");
  return v->get<bool>();
}

Section Section::sub(const std::string& key) { return Section(*get(key, true), name(key)); }

void Section::finish() const {
  for (auto it = obj_.begin(); it != obj_.end(); ++it)
    if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
      throw ConfigError("unknown key '" + name(it.key()) + "'");
}

DgpConfig DgpSection::test_config() const {
  if (!test) throw ConfigError("missing required key 'dgp.test' (test distribution rho must be explicit)");
  DgpConfig c = train;
  c.rho = test->rho;
  if (test->n > 0) c.n = test->n;
  c.seed = test->seed ? *test->seed : derive_seed(train.seed, 1);
  return c;
}

namespace {

int to_int(std::int64_t v, const std::string& key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError("'" + key + "' is out of range");
  return static_cast<int>(v);
}

DgpSection parse_dgp(Section s) {
  DgpSection out;
  out.train.rho = s.num("rho");
  out.train.B = s.num("B");
  out.train.d = to_int(s.integer("d"), "dgp.d");
  out.train.n = to_int(s.integer("n"), "dgp.n");
  out.train.seed = s.u64("seed", 0);
  if (s.has("test")) {
    Section t = s.sub("test");
    TestSplit ts;
    ts.rho = t.num("rho");
    ts.n = to_int(t.integer("n", 0), "dgp.test.n");
    if (t.has("seed")) ts.seed = t.u64("seed");
    t.finish();
    if (!(ts.rho > 0.0 && ts.rho < 1.0)) throw ConfigError("dgp.test.rho must lie in (0, 1)");
    if (ts.n < 0) throw ConfigError("dgp.test.n must be nonnegative");
    out.test = ts;
  }
  s.finish();
  out.train.validate();
  return out;
}

ModelSection parse_model(Section s) {
  ModelSection m;
  const std::string kind = s.str("kind", "linear");
  if (kind == "linear") {
    m.kind = ModelKind::Linear;
  } else if (kind == "mlp") {
    m.kind = ModelKind::Mlp;
  } else {
    throw ConfigError("model.kind: unknown value '" + kind + "'");
  }
  m.hidden = to_int(s.integer("hidden", 200), "model.hidden");
  if (m.hidden < 1) throw ConfigError("model.hidden must be positive");
  if (s.has("init_seed")) m.init_seed = s.u64("init_seed");
  s.finish();
  return m;
}

LossSpec parse_loss(Section s) {
  LossSpec l;
  l.kind = loss_kind_from_string(s.str("kind", "log"));
  // "T" is shorthand for T_pos = T_neg
  if (s.has("T")) {
    l.T_pos = l.T_neg = s.num("T");
  }
  l.T_pos = s.num("T_pos", l.T_pos);
  l.T_neg = s.num("T_neg", l.T_neg);
  l.u = s.num("u", l.u);
  l.lambda = s.num("lambda", l.lambda);
  if (s.has("gamma")) l.gamma_pos = l.gamma_neg = s.num("gamma");
  l.gamma_pos = s.num("gamma_pos", l.gamma_pos);
  l.gamma_neg = s.num("gamma_neg", l.gamma_neg);
  l.damp_form = damp_form_from_string(s.str("damp_form", "temperature"));
  s.finish();
  l.validate();
  return l;
}

TrainConfig parse_train(Section s) {
  TrainConfig t;
  t.lr = s.num("lr", t.lr);
  t.momentum = s.num("momentum", t.momentum);
  t.weight_decay = s.num("weight_decay", t.weight_decay);
  t.epochs = s.integer("epochs", t.epochs);
  t.eval_every = s.integer("eval_every", t.eval_every);
  t.seed = s.u64("seed", t.seed);
  s.finish();
  t.validate();
  return t;
}

Side side_from_string(const std::string& s) {
  if (s == "none") return Side::None;
  if (s == "stable") return Side::StableSide;
  if (s == "shortcut") return Side::ShortcutSide;
  throw ConfigError("maxmargin.side: unknown value '" + s + "'");
}

MaxMarginSection parse_maxmargin(Section s) {
  MaxMarginSection m;
  m.side = side_from_string(s.str("side", "none"));
  m.solver.tol = s.num("tol", m.solver.tol);
  m.solver.max_iter = s.integer("max_iter", m.solver.max_iter);
  m.eps = s.num("eps", m.eps);
  if (s.has("M")) {
    const json& v = s.raw("M");
    if (v.is_string() && v.get<std::string>() == "auto") {
      m.M.reset();
    } else if (v.is_number_integer()) {
      m.M = to_int(v.get<std::int64_t>(), "maxmargin.M");
    } else {
      throw ConfigError("'maxmargin.M' must be an integer or \"auto\"");
    }
  }
  m.subset_seed = s.u64("subset_seed", m.subset_seed);
  s.finish();
  if (!(m.solver.tol > 0.0)) throw ConfigError("maxmargin.tol must be positive");
  if (m.solver.max_iter < 1) throw ConfigError("maxmargin.max_iter must be positive");
  if (!(m.eps >= 0.0)) throw ConfigError("maxmargin.eps must be nonnegative");
  return m;
}

SweepSection parse_sweep(Section s) {
  SweepSection sw;
  sw.command = s.str("command", "train");
  if (sw.command != "train" && sw.command != "maxmargin" && sw.command != "verify")
    throw ConfigError("sweep.command must be train, maxmargin or verify");
  const json& g = s.raw("grid");
  if (!g.is_object() || g.empty()) throw ConfigError("sweep.grid must be a non-empty object");
  for (auto it = g.begin(); it != g.end(); ++it) {
    if (!it.value().is_array() || it.value().empty())
      throw ConfigError("sweep.grid." + it.key() + " must be a non-empty array");
    sw.grid.emplace_back(it.key(), std::vector<json>(it.value().begin(), it.value().end()));
  }
  s.finish();
  return sw;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  Section root(doc, "");
  ExperimentConfig cfg;
  cfg.raw = doc;
  cfg.command = root.str("command", "");
  if (root.has("dgp")) cfg.dgp = parse_dgp(root.sub("dgp"));
  if (root.has("model")) cfg.model = parse_model(root.sub("model"));
  if (root.has("loss")) cfg.loss = parse_loss(root.sub("loss"));
  if (root.has("train")) cfg.train = parse_train(root.sub("train"));
  if (root.has("maxmargin")) cfg.maxmargin = parse_maxmargin(root.sub("maxmargin"));
  if (root.has("verify")) {
    cfg.verify = root.raw("verify");
    if (!cfg.verify.is_object()) throw ConfigError("verify must be a JSON object");
  }
  if (root.has("sweep")) cfg.sweep = parse_sweep(root.sub("sweep"));
  cfg.out_dir = root.str("out_dir", cfg.out_dir);
  root.finish();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  if (cfg.dgp) {
    const auto& t = cfg.dgp->train;
    j["dgp"] = {{"rho", t.rho}, {"B", t.B}, {"d", t.d}, {"n", t.n}, {"seed", t.seed}};
    if (cfg.dgp->test) {
      const auto tc = cfg.dgp->test_config();
      j["dgp"]["test"] = {{"rho", tc.rho}, {"n", tc.n}, {"seed", tc.seed}};
    }
  }
  j["model"] = {{"kind", cfg.model.kind == ModelKind::Linear ? "linear" : "mlp"},
                {"hidden", cfg.model.hidden},
                {"init_seed", cfg.model.init_seed ? *cfg.model.init_seed : cfg.train.seed}};
  const auto& l = cfg.loss;
  j["loss"] = {{"kind", to_string(l.kind)}, {"T_pos", l.T_pos},       {"T_neg", l.T_neg},
               {"u", l.u},                  {"lambda", l.lambda},     {"gamma_pos", l.gamma_pos},
               {"gamma_neg", l.gamma_neg},  {"damp_form", to_string(l.damp_form)}};
  const auto& t = cfg.train;
  j["train"] = {{"lr", t.lr},         {"momentum", t.momentum},     {"weight_decay", t.weight_decay},
                {"epochs", t.epochs}, {"eval_every", t.eval_every}, {"seed", t.seed}};
  const auto& m = cfg.maxmargin;
  j["maxmargin"] = {{"side", to_string(m.side)},
                    {"tol", m.solver.tol},
                    {"max_iter", m.solver.max_iter},
                    {"eps", m.eps},
                    {"M", m.M ? json(*m.M) : json("auto")},
                    {"subset_seed", m.subset_seed}};
  if (!cfg.verify.empty()) j["verify"] = cfg.verify;
  if (cfg.sweep) {
    json grid = json::object();
    for (const auto& [k, vals] : cfg.sweep->grid) grid[k] = vals;
    j["sweep"] = {{"command", cfg.sweep->command}, {"grid", grid}};
  }
  j["out_dir"] = cfg.out_dir;
  return j;
}

void set_dotted(json& doc, const std::string& dotted, const json& value) {
  json* cur = &doc;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty sweep key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur->contains(parts[i])) (*cur)[parts[i]] = json::object();
    cur = &(*cur)[parts[i]];
    if (!cur->is_object()) throw ConfigError("sweep key '" + dotted + "' does not name an object path");
  }
  (*cur)[parts.back()] = value;
}

}  // namespace marginlab
