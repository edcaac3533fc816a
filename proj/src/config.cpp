#include "mfdgm/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mfdgm/error.hpp"

namespace mfdgm {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  if (v.empty()) throw UsageError("empty value");
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || !std::isfinite(x)) throw UsageError("'" + v + "' is not a finite number");
  return x;
}

template <class Int>
Int parse_int(const std::string& v) {
  Int x{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size()) throw UsageError("'" + v + "' is not an integer");
  return x;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw UsageError("'" + v + "' is not true/false");
}

std::string problem_kind_name(ProblemKind k) { return k == ProblemKind::analytic ? "analytic" : "traffic"; }

ProblemKind problem_kind_from(const std::string& v) {
  if (v == "analytic") return ProblemKind::analytic;
  if (v == "traffic") return ProblemKind::traffic;
  throw UsageError("unknown problem kind '" + v + "'");
}

std::string join_seeds(const std::vector<std::uint64_t>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

std::vector<std::uint64_t> split_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<std::uint64_t>(trim(item)));
  if (out.empty()) throw UsageError("seed list is empty");
  return out;
}

// One table drives both parsing and formatting so the two cannot drift apart.
struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

void add_net(std::vector<Key>& keys, const std::string& sec, NetworkSpec TrainConfig::*member) {
  auto net = [member](auto& c) -> auto& { return c.train.*member; };
  keys.push_back({sec, "hidden_width", [=](const ExperimentConfig& c) { return std::to_string(net(c).hidden_width); },
                  [=](ExperimentConfig& c, const std::string& v) { net(c).hidden_width = parse_int<int>(v); }});
  keys.push_back({sec, "hidden_layers", [=](const ExperimentConfig& c) { return std::to_string(net(c).hidden_layers); },
                  [=](ExperimentConfig& c, const std::string& v) { net(c).hidden_layers = parse_int<int>(v); }});
  keys.push_back({sec, "activation", [=](const ExperimentConfig& c) { return std::string(to_string(net(c).activation)); },
                  [=](ExperimentConfig& c, const std::string& v) { net(c).activation = activation_from_string(v); }});
  keys.push_back({sec, "skip_weight", [=](const ExperimentConfig& c) { return fmt(net(c).skip_weight); },
                  [=](ExperimentConfig& c, const std::string& v) { net(c).skip_weight = parse_double(v); }});
}

void add_opt(std::vector<Key>& keys, const std::string& sec, OptimizerSettings TrainConfig::*member) {
  auto opt = [member](auto& c) -> auto& { return c.train.*member; };
  keys.push_back({sec, "kind", [=](const ExperimentConfig& c) { return to_string(opt(c).kind); },
                  [=](ExperimentConfig& c, const std::string& v) { opt(c).kind = optimizer_from_string(v); }});
  auto real = [&](const char* name, double OptimizerSettings::*m) {
    keys.push_back({sec, name, [=](const ExperimentConfig& c) { return fmt(opt(c).*m); },
                    [=](ExperimentConfig& c, const std::string& v) { opt(c).*m = parse_double(v); }});
  };
  real("lr", &OptimizerSettings::lr);
  real("weight_decay", &OptimizerSettings::weight_decay);
  real("beta1", &OptimizerSettings::beta1);
  real("beta2", &OptimizerSettings::beta2);
  real("epsilon", &OptimizerSettings::epsilon);
}

template <class T>
Key real_key(const std::string& sec, const std::string& name, T get_ref) {
  return {sec, name, [=](const ExperimentConfig& c) { return fmt(get_ref(const_cast<ExperimentConfig&>(c))); },
          [=](ExperimentConfig& c, const std::string& v) { get_ref(c) = parse_double(v); }};
}

template <class Int, class T>
Key int_key(const std::string& sec, const std::string& name, T get_ref) {
  return {sec, name, [=](const ExperimentConfig& c) { return std::to_string(get_ref(const_cast<ExperimentConfig&>(c))); },
          [=](ExperimentConfig& c, const std::string& v) { get_ref(c) = parse_int<Int>(v); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    using C = ExperimentConfig;
    std::vector<Key> k;
    k.push_back({"experiment", "source", [](const C& c) { return c.source; },
                 [](C& c, const std::string& v) { c.source = v; }});
    k.push_back({"problem", "kind", [](const C& c) { return problem_kind_name(c.problem.kind); },
                 [](C& c, const std::string& v) { c.problem.kind = problem_kind_from(v); }});
    k.push_back(int_key<int>("problem", "d", [](C& c) -> int& { return c.problem.d; }));
    k.push_back(real_key("problem", "nu", [](C& c) -> double& { return c.problem.nu; }));
    k.push_back(real_key("problem", "beta", [](C& c) -> double& { return c.problem.beta; }));
    k.push_back(real_key("problem", "gamma", [](C& c) -> double& { return c.problem.gamma; }));
    k.push_back(real_key("problem", "rho0_amplitude", [](C& c) -> double& { return c.problem.rho0_amplitude; }));
    k.push_back(real_key("problem", "rho0_offset", [](C& c) -> double& { return c.problem.rho0_offset; }));

    k.push_back({"train", "mode", [](const C& c) { return to_string(c.train.mode); },
                 [](C& c, const std::string& v) { c.train.mode = train_mode_from_string(v); }});
    k.push_back(int_key<std::int64_t>("train", "iterations", [](C& c) -> std::int64_t& { return c.train.iterations; }));
    k.push_back(int_key<int>("train", "batch_interior", [](C& c) -> int& { return c.train.batch_interior; }));
    k.push_back(int_key<int>("train", "batch_condition", [](C& c) -> int& { return c.train.batch_condition; }));
    k.push_back(int_key<std::uint64_t>("train", "seed", [](C& c) -> std::uint64_t& { return c.train.seed; }));
    k.push_back(int_key<int>("train", "record_every", [](C& c) -> int& { return c.train.record_every; }));
    k.push_back({"train", "track_error", [](const C& c) { return std::string(c.train.track_error ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.train.track_error = parse_bool(v); }});

    add_net(k, "phi_net", &TrainConfig::phi_net);
    add_net(k, "rho_net", &TrainConfig::rho_net);
    add_opt(k, "phi_opt", &TrainConfig::phi_opt);
    add_opt(k, "rho_opt", &TrainConfig::rho_opt);

    k.push_back(int_key<int>("eval", "grid_t", [](C& c) -> int& { return c.train.probe.grid_t; }));
    k.push_back(int_key<int>("eval", "grid_x", [](C& c) -> int& { return c.train.probe.grid_x; }));
    k.push_back(int_key<int>("eval", "mc_points", [](C& c) -> int& { return c.train.probe.mc_points; }));
    k.push_back(int_key<std::uint64_t>("eval", "mc_seed", [](C& c) -> std::uint64_t& { return c.train.probe.mc_seed; }));

    k.push_back({"output", "dir", [](const C& c) { return c.output.dir; },
                 [](C& c, const std::string& v) { c.output.dir = v; }});
    k.push_back(int_key<std::int64_t>("output", "checkpoint_every",
                                      [](C& c) -> std::int64_t& { return c.output.checkpoint_every; }));

    k.push_back({"compare", "seeds", [](const C& c) { return join_seeds(c.compare.seeds); },
                 [](C& c, const std::string& v) { c.compare.seeds = split_seeds(v); }});
    k.push_back(real_key("compare", "sgd_lr", [](C& c) -> double& { return c.compare.sgd_lr; }));
    k.push_back(real_key("compare", "sgd_weight_decay", [](C& c) -> double& { return c.compare.sgd_weight_decay; }));

    k.push_back(int_key<int>("gradcheck", "points", [](C& c) -> int& { return c.gradcheck.points; }));
    k.push_back(int_key<std::uint64_t>("gradcheck", "seed", [](C& c) -> std::uint64_t& { return c.gradcheck.seed; }));
    k.push_back(real_key("gradcheck", "inject_fault", [](C& c) -> double& { return c.gradcheck.inject_fault; }));

    k.push_back(int_key<int>("traffic", "grid_x", [](C& c) -> int& { return c.traffic.grid_x; }));
    return k;
  }();
  return table;
}

void sync_dims(ExperimentConfig& c) {
  c.train.phi_net.input_dim = c.problem.d + 1;
  c.train.rho_net.input_dim = c.problem.d + 1;
}

NetworkSpec net(int d, int width, int layers, Activation act, double skip) {
  NetworkSpec s;
  s.input_dim = d + 1;
  s.hidden_width = width;
  s.hidden_layers = layers;
  s.activation = act;
  s.skip_weight = skip;
  return s;
}

OptimizerSettings adam(double lr, double wd) {
  OptimizerSettings o;
  o.kind = OptimizerKind::adam;
  o.lr = lr;
  o.weight_decay = wd;
  return o;
}

ExperimentConfig analytic_base(int d, int width, int layers, int batch, std::int64_t iters) {
  ExperimentConfig c;
  c.problem.kind = ProblemKind::analytic;
  c.problem.d = d;
  c.train.phi_net = net(d, width, layers, Activation::softplus, 0.5);
  c.train.rho_net = net(d, width, layers, Activation::tanh, 0.5);
  c.train.phi_opt = adam(1e-4, 1e-3);
  c.train.rho_opt = adam(1e-4, 1e-3);
  c.train.batch_interior = batch;
  c.train.batch_condition = batch;
  c.train.iterations = iters;
  return c;
}

ExperimentConfig traffic_base(double nu) {
  ExperimentConfig c;
  c.problem.kind = ProblemKind::traffic;
  c.problem.d = 1;
  c.problem.nu = nu;
  c.train.phi_net = net(1, 50, 1, Activation::softmax, 0.5);
  c.train.rho_net = net(1, 50, 1, Activation::relu, 0.5);
  c.train.phi_opt = adam(4e-4, 1e-4);
  c.train.rho_opt = adam(5e-4, 1e-4);
  c.train.batch_interior = 100;
  c.train.batch_condition = 100;
  c.train.iterations = 10000;
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    if (problem.d < 1) throw UsageError("problem.d must be >= 1");
    if (problem.kind == ProblemKind::traffic && problem.d != 1) throw UsageError("the traffic problem is one-dimensional");
    if (!(problem.nu >= 0.0)) throw UsageError("problem.nu must be >= 0");
    if (problem.kind == ProblemKind::analytic && !(problem.nu > 0.0))
      throw UsageError("the analytic problem needs nu > 0");
    train.validate();
    if (train.phi_net.input_dim != problem.d + 1 || train.rho_net.input_dim != problem.d + 1)
      throw UsageError("network input dimension does not match problem.d");
    if (train.probe.grid_t < 2 || train.probe.grid_x < 2) throw UsageError("evaluation grid needs >= 2 points per axis");
    if (train.probe.mc_points < 1) throw UsageError("eval.mc_points must be >= 1");
    if (output.checkpoint_every < 0) throw UsageError("output.checkpoint_every must be >= 0");
    if (compare.seeds.empty()) throw UsageError("compare.seeds is empty");
    if (!(compare.sgd_lr > 0.0) || !(compare.sgd_weight_decay >= 0.0)) throw UsageError("bad compare SGD settings");
    if (gradcheck.points < 1) throw UsageError("gradcheck.points must be >= 1");
    if (traffic.grid_x < 2) throw UsageError("traffic.grid_x must be >= 2");
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> preset_names() { return {"test1", "test2", "test3", "test4", "compare", "traffic0", "traffic05"}; }

ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "test1") {
    c = analytic_base(1, 100, 3, 256, 10000);
    c.source = "d=1, 3x100 ResNet (skip 0.5), softplus/tanh, Adam lr 1e-4 wd 1e-3, batch 256, 1e4 iterations";
  } else if (name == "test2") {
    c = analytic_base(1, 50, 1, 256, 10000);
    c.source = "test1 hyperparameters with a single hidden layer; hidden width is the sweep variable";
  } else if (name == "test3") {
    c = analytic_base(50, 100, 3, 512, 50000);
    c.source = "d=50, 3x100 ResNet (skip 0.5), softplus/tanh, Adam lr 1e-4 wd 1e-3, batch 512, 5e4 iterations";
  } else if (name == "test4") {
    c = analytic_base(50, 256, 1, 1024, 50000);
    c.source = "d=50, single hidden layer of 256, Adam lr 1e-4 wd 1e-3, batch 1024, 5e4 iterations";
  } else if (name == "compare") {
    c = analytic_base(1, 100, 3, 50, 5000);
    c.source = "Comparison: d=1, 3x100 ResNet, batch 50, 5e3 iterations; MFDGM Adam lr 1e-4 wd 1e-3, "
               "DGM-MFG SGD lr 1e-3 wd 1e-3";
  } else if (name == "traffic0" || name == "traffic05") {
    c = traffic_base(name == "traffic0" ? 0.0 : 0.5);
    c.source = "Traffic flow: 1x50, softmax/relu, Adam lr 4e-4/5e-4 wd 1e-4, batch 100, 1e4 iterations";
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.preset = name;
  c.output.dir = "out/" + name;
  return c;
}

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig* base) {
  ExperimentConfig c = base ? *base : ExperimentConfig{};
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  bool any_key = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string l = trim(line);
    if (l.empty() || l[0] == '#' || l[0] == ';') continue;
    auto where = [&] { return "line " + std::to_string(lineno) + ": "; };
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError(where() + "malformed section header");
      section = trim(l.substr(1, l.size() - 2));
      bool known = false;
      for (const Key& k : keys()) known = known || k.section == section;
      if (!known) throw ConfigError(where() + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected key = value");
    const std::string key = trim(l.substr(0, eq));
    const std::string value = trim(l.substr(eq + 1));
    if (section.empty()) throw ConfigError(where() + "key outside of a section");
    const std::string full = section + "." + key;
    if (!seen.insert(full).second) throw ConfigError(where() + "duplicate key " + full);
    if (full == "experiment.preset") {
      if (any_key) throw ConfigError(where() + "preset must come before every other key");
      if (!base) c = make_preset(value);
      any_key = true;
      continue;
    }
    any_key = true;
    const Key* match = nullptr;
    for (const Key& k : keys())
      if (k.section == section && k.name == key) match = &k;
    if (!match) throw ConfigError(where() + "unknown key " + full);
    try {
      match->set(c, value);
    } catch (const UsageError& e) {
      throw ConfigError(where() + full + ": " + e.what());
    }
  }
  sync_dims(c);
  c.validate();
  return c;
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string section;
  if (!c.preset.empty()) os << "[experiment]\npreset = " << c.preset << "\n";
  for (const Key& k : keys()) {
    if (k.section != section) {
      if (!(section.empty() && k.section == "experiment" && !c.preset.empty()))
        os << (os.tellp() > 0 ? "\n" : "") << "[" << k.section << "]\n";
      section = k.section;
    }
    os << k.name << " = " << k.get(c) << "\n";
  }
  return os.str();
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

MFGProblem make_problem(const ProblemSettings& s) {
  if (s.kind == ProblemKind::analytic) return make_analytic_gaussian(s.d, s.nu, s.beta, s.gamma);
  return make_traffic_lwr(s.nu, s.rho0_amplitude, s.rho0_offset);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output = OutputSettings{};
  c.train.iterations = 1;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mfdgm
