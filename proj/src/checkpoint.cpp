#include "mfdgm/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mfdgm/error.hpp"
#include "mfdgm/output.hpp"

namespace mfdgm {

namespace {

void put_spec(std::ostringstream& os, const char* tag, const NetworkSpec& s) {
  os << tag << ' ' << s.input_dim << ' ' << s.hidden_width << ' ' << s.hidden_layers << ' ' << to_string(s.activation)
     << ' ' << format_real(s.skip_weight) << ' ' << s.output_dim << '\n';
}

void put_vec(std::ostringstream& os, const char* tag, const std::vector<double>& v) {
  os << tag << ' ' << v.size() << '\n';
  for (double x : v) os << format_real(x) << '\n';
}

void put_opt(std::ostringstream& os, const char* tag, const OptimizerState& o) {
  const OptimizerSettings& s = o.settings;
  os << tag << ' ' << to_string(s.kind) << ' ' << format_real(s.lr) << ' ' << format_real(s.weight_decay) << ' '
     << format_real(s.beta1) << ' ' << format_real(s.beta2) << ' ' << format_real(s.epsilon) << ' ' << o.step_count
     << '\n';
  put_vec(os, "m", o.m);
  put_vec(os, "v", o.v);
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  void expect(const std::string& tag) {
    const std::string t = word();
    if (t != tag) fail("expected '" + tag + "', found '" + t + "'");
  }
  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double x = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) fail("bad number '" + w + "'");
    return x;
  }
  template <class Int>
  Int integer() {
    const std::string w = word();
    std::size_t pos = 0;
    long long x = 0;
    unsigned long long ux = 0;
    try {
      if constexpr (std::is_unsigned_v<Int>)
        ux = std::stoull(w, &pos);
      else
        x = std::stoll(w, &pos);
    } catch (const std::exception&) {
      fail("bad integer '" + w + "'");
    }
    if (pos != w.size()) fail("bad integer '" + w + "'");
    if constexpr (std::is_unsigned_v<Int>)
      return static_cast<Int>(ux);
    else
      return static_cast<Int>(x);
  }
  std::vector<double> vec(const std::string& tag) {
    expect(tag);
    const auto n = integer<std::uint64_t>();
    if (n > (1ULL << 32)) fail("implausible vector length");
    std::vector<double> v(n);
    for (auto& x : v) x = real();
    return v;
  }
  NetworkSpec spec(const std::string& tag) {
    expect(tag);
    NetworkSpec s;
    s.input_dim = integer<int>();
    s.hidden_width = integer<int>();
    s.hidden_layers = integer<int>();
    try {
      s.activation = activation_from_string(word());
      s.skip_weight = real();
      s.output_dim = integer<int>();
      s.validate();
    } catch (const UsageError& e) {
      fail(e.what());
    }
    return s;
  }
  OptimizerState opt(const std::string& tag) {
    expect(tag);
    OptimizerState o;
    try {
      o.settings.kind = optimizer_from_string(word());
    } catch (const UsageError& e) {
      fail(e.what());
    }
    o.settings.lr = real();
    o.settings.weight_decay = real();
    o.settings.beta1 = real();
    o.settings.beta2 = real();
    o.settings.epsilon = real();
    o.step_count = integer<std::int64_t>();
    o.m = vec("m");
    o.v = vec("v");
    return o;
  }
  bool at_end() {
    std::string w;
    return !(in_ >> w);
  }
  [[noreturn]] void fail(const std::string& msg) { throw LoadError("corrupt checkpoint: " + msg); }

 private:
  std::istringstream in_;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream os;
  const TrainingState& s = c.state;
  os << "mfdgm-checkpoint " << c.version << '\n';
  os << "config_hash " << c.config_hash << '\n';
  os << "iteration " << s.iteration << '\n';
  os << "rng " << s.rng.key() << ' ' << s.rng.counter() << '\n';
  put_spec(os, "phi_spec", c.phi_spec);
  put_spec(os, "rho_spec", c.rho_spec);
  put_vec(os, "phi_params", s.phi.flat);
  put_vec(os, "rho_params", s.rho.flat);
  put_opt(os, "phi_opt", s.phi_opt);
  put_opt(os, "rho_opt", s.rho_opt);
  os << "metrics " << s.metrics.size() << '\n';
  for (const MetricsRecord& m : s.metrics) {
    os << m.iteration << ' ' << format_real(m.hjb.residual) << ' ' << format_real(m.hjb.condition) << ' '
       << format_real(m.fp.residual) << ' ' << format_real(m.fp.condition) << ' ' << (m.error ? 1 : 0);
    if (m.error) os << ' ' << format_real(m.error->rho) << ' ' << format_real(m.error->phi);
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  Reader r(text);
  Checkpoint c;
  r.expect("mfdgm-checkpoint");
  c.version = r.integer<int>();
  if (c.version != checkpoint_version)
    throw LoadError("checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                    std::to_string(checkpoint_version) + ")");
  r.expect("config_hash");
  c.config_hash = r.integer<std::uint64_t>();
  r.expect("iteration");
  TrainingState& s = c.state;
  s.iteration = r.integer<std::int64_t>();
  r.expect("rng");
  const auto key = r.integer<std::uint64_t>();
  const auto counter = r.integer<std::uint64_t>();
  s.rng = Rng::from_state(key, counter);
  c.phi_spec = r.spec("phi_spec");
  c.rho_spec = r.spec("rho_spec");
  s.phi.flat = r.vec("phi_params");
  s.rho.flat = r.vec("rho_params");
  if (s.phi.count() != parameter_count(c.phi_spec) || s.rho.count() != parameter_count(c.rho_spec))
    r.fail("parameter count does not match the network spec");
  s.phi_opt = r.opt("phi_opt");
  s.rho_opt = r.opt("rho_opt");
  r.expect("metrics");
  const auto n = r.integer<std::uint64_t>();
  for (std::uint64_t k = 0; k < n; ++k) {
    MetricsRecord m;
    m.iteration = r.integer<std::int64_t>();
    m.hjb.residual = r.real();
    m.hjb.condition = r.real();
    m.fp.residual = r.real();
    m.fp.condition = r.real();
    const int has = r.integer<int>();
    if (has == 1) {
      RelativeErrors e;
      e.rho = r.real();
      e.phi = r.real();
      m.error = e;
    } else if (has != 0) {
      r.fail("bad error flag");
    }
    s.metrics.push_back(m);
  }
  r.expect("end");
  if (!r.at_end()) r.fail("trailing content");
  if (s.iteration < 0) r.fail("negative iteration");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file_atomic(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw LoadError(e.what());
  }
  return parse_checkpoint(text);
}

}  // namespace mfdgm
