#include "mfdgm/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "mfdgm/checkpoint.hpp"
#include "mfdgm/evaluation.hpp"
#include "mfdgm/gradcheck.hpp"
#include "mfdgm/output.hpp"

namespace mfdgm {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

ExperimentConfig resolve_config(const CommandLine& cl) {
  ExperimentConfig c;
  std::optional<ExperimentConfig> base;
  if (!cl.preset.empty()) base = make_preset(cl.preset);
  if (!cl.config_path.empty()) {
    std::string text;
    try {
      text = read_file(cl.config_path);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    c = parse_config(text, base ? &*base : nullptr);
  } else if (base) {
    c = *base;
  } else {
    throw ConfigError("need --config or --preset");
  }
  if (cl.seed) {
    c.train.seed = *cl.seed;
    c.compare.seeds = {*cl.seed};
    c.gradcheck.seed = *cl.seed;
  }
  if (!cl.out_dir.empty()) {
    c.output.dir = cl.out_dir;
  } else if (const char* env = std::getenv(output_dir_env); env && *env) {
    c.output.dir = env;
  }
  c.validate();
  return c;
}

namespace {

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json record_json(const MetricsRecord& m) {
  json j;
  j["iteration"] = m.iteration;
  j["hjb"] = {{"residual", m.hjb.residual}, {"condition", m.hjb.condition}, {"total", m.hjb.total()}};
  j["fp"] = {{"residual", m.fp.residual}, {"condition", m.fp.condition}, {"total", m.fp.total()}};
  if (m.error) j["rel_err"] = {{"rho", m.error->rho}, {"phi", m.error->phi}};
  return j;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["source"] = c.source;
  j["mode"] = to_string(c.train.mode);
  j["seed"] = c.train.seed;
  j["iterations"] = c.train.iterations;
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  j["config_hash"] = hash;
  return j;
}

struct RunResult {
  TrainingState state;
  std::optional<TrainingAborted> abort;
  double wall_seconds = 0.0;
};

Checkpoint make_checkpoint(const ExperimentConfig& c, const TrainingState& s) {
  Checkpoint cp;
  cp.config_hash = config_hash(c);
  cp.phi_spec = c.train.phi_net;
  cp.rho_spec = c.train.rho_net;
  cp.state = s;
  return cp;
}

RunResult run_training(const ExperimentConfig& c, const MFGProblem& pr, const std::string& resume,
                       const std::string& dir, std::ostream& log) {
  RunResult r;
  if (!resume.empty()) {
    Checkpoint cp = load_checkpoint(resume);
    if (cp.config_hash != config_hash(c)) throw LoadError("checkpoint '" + resume + "' was written by a different config");
    if (!(cp.phi_spec == c.train.phi_net) || !(cp.rho_spec == c.train.rho_net))
      throw LoadError("checkpoint network specs do not match the config");
    r.state = std::move(cp.state);
    log << "resuming from iteration " << r.state.iteration << "\n";
  } else {
    r.state = init_training(pr, c.train);
  }

  TrainHooks hooks;
  hooks.on_record = [&](const TrainingState&, const MetricsRecord& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "iter %7lld  hjb %.4e  fp %.4e", static_cast<long long>(m.iteration), m.hjb.total(),
                  m.fp.total());
    log << buf;
    if (m.error) {
      std::snprintf(buf, sizeof buf, "  err rho %.4e phi %.4e", m.error->rho, m.error->phi);
      log << buf;
    }
    log << "\n";
  };
  if (c.output.checkpoint_every > 0) {
    hooks.after_iteration = [&](const TrainingState& s) {
      if (s.iteration % c.output.checkpoint_every == 0)
        save_checkpoint(path_in(dir, "checkpoint_" + std::to_string(s.iteration) + ".txt"), make_checkpoint(c, s));
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    train(pr, c.train, r.state, hooks);
  } catch (const TrainingAborted& e) {
    r.abort = e;
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

void write_metrics(const std::string& dir, const MFGProblem& pr, const ExperimentConfig& c, const RunResult& r) {
  write_file_atomic(path_in(dir, "loss_hjb.csv"), loss_csv(r.state.metrics, true));
  write_file_atomic(path_in(dir, "loss_fp.csv"), loss_csv(r.state.metrics, false));
  if (pr.exact && c.train.track_error) write_file_atomic(path_in(dir, "rel_err.csv"), rel_err_csv(r.state.metrics));
  write_file_atomic(path_in(dir, "config.ini"), format_config(c));
  if (!r.abort) save_checkpoint(path_in(dir, "checkpoint_final.txt"), make_checkpoint(c, r.state));
}

json run_summary(const ExperimentConfig& c, const RunResult& r) {
  json j = config_json(c);
  j["status"] = r.abort ? "aborted" : "completed";
  if (r.abort) {
    j["abort_iteration"] = r.abort->iteration();
    j["abort_message"] = r.abort->what();
  }
  j["completed_iterations"] = r.state.iteration;
  j["wall_seconds"] = r.wall_seconds;
  if (!r.state.metrics.empty()) j["final"] = record_json(r.state.metrics.back());
  return j;
}

int report_abort(const RunResult& r, std::ostream& log) {
  log << "numeric abort: " << r.abort->what() << "\n";
  return exit_code::numeric_abort;
}

int problem_kind_error(const char* cmd, const char* want, std::ostream& log) {
  log << "config error: " << cmd << " needs the " << want << " problem\n";
  return exit_code::config_error;
}

}  // namespace

int cmd_train(const ExperimentConfig& c, const std::string& resume, std::ostream& log) {
  const MFGProblem pr = make_problem(c.problem);
  const std::string& dir = c.output.dir;
  const RunResult r = run_training(c, pr, resume, dir, log);
  write_metrics(dir, pr, c, r);
  write_file_atomic(path_in(dir, "summary.json"), run_summary(c, r).dump(2) + "\n");
  return r.abort ? report_abort(r, log) : exit_code::ok;
}

int cmd_gradcheck(const ExperimentConfig& c, std::ostream& log) {
  GradcheckOptions o;
  o.points = c.gradcheck.points;
  o.seed = c.gradcheck.seed;
  fault::set_first_derivative_offset(c.gradcheck.inject_fault);
  GradcheckReport rep;
  try {
    rep = run_gradcheck(o);
  } catch (...) {
    fault::set_first_derivative_offset(0.0);
    throw;
  }
  fault::set_first_derivative_offset(0.0);
  const CheckResult& worst = rep.worst();
  std::string text = rep.str();
  text += std::string("worst ") + worst.name + " " + format_real(worst.max_error) + "\n";
  text += rep.passed() ? "result PASS\n" : "result FAIL\n";
  write_file_atomic(path_in(c.output.dir, "gradcheck_report.txt"), text);
  log << text;
  return rep.passed() ? exit_code::ok : exit_code::verification_failed;
}

int cmd_compare(const ExperimentConfig& c, std::ostream& log) {
  if (c.problem.kind != ProblemKind::analytic) return problem_kind_error("compare", "analytic", log);
  const MFGProblem pr = make_problem(c.problem);
  const std::string& dir = c.output.dir;
  struct Method {
    TrainMode mode;
    std::vector<RelativeErrors> finals;
  };
  std::vector<Method> methods{{TrainMode::mfdgm, {}}, {TrainMode::dgm_mfg, {}}};
  json runs = json::array();
  for (Method& m : methods)
    for (std::uint64_t seed : c.compare.seeds) {
      ExperimentConfig rc = c;
      rc.train.seed = seed;
      rc.train.mode = m.mode;
      rc.train.track_error = true;
      if (m.mode == TrainMode::dgm_mfg) {
        for (OptimizerSettings* o : {&rc.train.phi_opt, &rc.train.rho_opt}) {
          o->kind = OptimizerKind::sgd;
          o->lr = c.compare.sgd_lr;
          o->weight_decay = c.compare.sgd_weight_decay;
        }
      }
      log << to_string(m.mode) << " seed " << seed << "\n";
      const RunResult r = run_training(rc, pr, "", dir, log);
      const std::string name = "rel_err_" + to_string(m.mode) + "_seed" + std::to_string(seed) + ".csv";
      write_file_atomic(path_in(dir, name), rel_err_csv(r.state.metrics));
      json rj = run_summary(rc, r);
      rj["trajectory"] = name;
      runs.push_back(rj);
      if (r.abort) {
        write_file_atomic(path_in(dir, "summary.json"), json{{"runs", runs}}.dump(2) + "\n");
        return report_abort(r, log);
      }
      if (r.state.metrics.empty() || !r.state.metrics.back().error)
        throw ConfigError("compare needs at least one metrics record (iterations >= record_every)");
      m.finals.push_back(*r.state.metrics.back().error);
    }

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  CsvTable t({"method", "seeds", "median_final_rho", "median_final_phi"});
  json medians;
  for (const Method& m : methods) {
    std::vector<double> rho, phi;
    for (const RelativeErrors& e : m.finals) {
      rho.push_back(e.rho);
      phi.push_back(e.phi);
    }
    const double mr = median(rho), mp = median(phi);
    t.add_row({to_string(m.mode), std::to_string(m.finals.size()), format_real(mr), format_real(mp)});
    medians[to_string(m.mode)] = {{"median_final_rho", mr}, {"median_final_phi", mp}};
  }
  write_file_atomic(path_in(dir, "compare_summary.csv"), t.str());
  json s = config_json(c);
  s["medians"] = medians;
  s["mfdgm_phi_not_worse"] =
      medians["mfdgm"]["median_final_phi"].get<double>() <= medians["dgm_mfg"]["median_final_phi"].get<double>();
  s["runs"] = runs;
  write_file_atomic(path_in(dir, "summary.json"), s.dump(2) + "\n");
  log << t.str();
  return exit_code::ok;
}

int cmd_traffic(const ExperimentConfig& c, const std::string& resume, std::ostream& log) {
  if (c.problem.kind != ProblemKind::traffic) return problem_kind_error("traffic", "traffic", log);
  const MFGProblem pr = make_problem(c.problem);
  const std::string& dir = c.output.dir;
  const RunResult r = run_training(c, pr, resume, dir, log);
  write_metrics(dir, pr, c, r);
  json s = run_summary(c, r);
  if (r.abort) {
    write_file_atomic(path_in(dir, "summary.json"), s.dump(2) + "\n");
    return report_abort(r, log);
  }

  const NetworkSpec& ps = c.train.phi_net;
  const NetworkSpec& rs = c.train.rho_net;
  const Eigen::VectorXd xs = uniform_axis(pr.omega_lo[0], pr.omega_hi[0], c.traffic.grid_x);
  const std::vector<std::pair<double, std::string>> slices{{0.0, "t0"}, {0.5, "t0.5"}, {1.0, "t1"}};
  double max_phi_T = 0.0;
  for (const auto& [t, label] : slices) {
    const Eigen::VectorXd ta = Eigen::VectorXd::Constant(1, t);
    const GridEval rho = evaluate_network_grid(r.state.rho, rs, ta, xs, GridQuantity::value);
    const GridEval phi = evaluate_network_grid(r.state.phi, ps, ta, xs, GridQuantity::value);
    const GridEval vx = evaluate_network_grid(r.state.phi, ps, ta, xs, GridQuantity::x_derivative);
    const GridEval u = speed_field(rho, vx);
    const GridEval q = fundamental_diagram(rho, u);
    CsvTable trho({"x", "rho"}), tphi({"x", "phi"}), tu({"x", "rho", "v_x", "u"}), tq({"x", "rho", "u", "q"});
    for (Eigen::Index j = 0; j < xs.size(); ++j) {
      const std::string x = format_real(xs[j]);
      trho.add_row({x, format_real(rho.values(0, j))});
      tphi.add_row({x, format_real(phi.values(0, j))});
      tu.add_row({x, format_real(rho.values(0, j)), format_real(vx.values(0, j)), format_real(u.values(0, j))});
      tq.add_row({x, format_real(rho.values(0, j)), format_real(u.values(0, j)), format_real(q.values(0, j))});
      if (t == pr.T) max_phi_T = std::max(max_phi_T, std::abs(phi.values(0, j)));
    }
    write_file_atomic(path_in(dir, "rho_" + label + ".csv"), trho.str());
    write_file_atomic(path_in(dir, "phi_" + label + ".csv"), tphi.str());
    write_file_atomic(path_in(dir, "u_" + label + ".csv"), tu.str());
    write_file_atomic(path_in(dir, "q_" + label + ".csv"), tq.str());
  }

  // (rho, q) scatter over the whole space-time grid.
  const Eigen::VectorXd ts = uniform_axis(0.0, pr.T, 11);
  const GridEval rho = evaluate_network_grid(r.state.rho, rs, ts, xs, GridQuantity::value);
  const GridEval vx = evaluate_network_grid(r.state.phi, ps, ts, xs, GridQuantity::x_derivative);
  const GridEval u = speed_field(rho, vx);
  const GridEval q = fundamental_diagram(rho, u);
  CsvTable fd({"t", "x", "rho", "u", "q"});
  for (Eigen::Index i = 0; i < ts.size(); ++i)
    for (Eigen::Index j = 0; j < xs.size(); ++j)
      fd.add_row({format_real(ts[i]), format_real(xs[j]), format_real(rho.values(i, j)), format_real(u.values(i, j)),
                  format_real(q.values(i, j))});
  write_file_atomic(path_in(dir, "fundamental_diagram.csv"), fd.str());
  CsvTable gs({"rho", "q"});
  for (double rv : uniform_axis(0.0, 1.0, 101)) gs.add_row({format_real(rv), format_real(rv * (1.0 - rv))});
  write_file_atomic(path_in(dir, "greenshields_reference.csv"), gs.str());

  s["max_abs_phi_T"] = max_phi_T;
  write_file_atomic(path_in(dir, "summary.json"), s.dump(2) + "\n");
  log << "max |phi(T, x)| = " << format_real(max_phi_T) << "\n";
  return exit_code::ok;
}

int run_command(const CommandLine& cl, std::ostream& log) {
  try {
    const ExperimentConfig c = resolve_config(cl);
    if (cl.command == "train") return cmd_train(c, cl.resume, log);
    if (cl.command == "gradcheck") return cmd_gradcheck(c, log);
    if (cl.command == "compare") return cmd_compare(c, log);
    if (cl.command == "traffic") return cmd_traffic(c, cl.resume, log);
    log << "unknown command '" << cl.command << "'\n";
    return exit_code::config_error;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return exit_code::config_error;
  } catch (const LoadError& e) {
    log << "checkpoint error: " << e.what() << "\n";
    return exit_code::config_error;
  } catch (const NumericError& e) {
    log << "numeric abort: " << e.what() << "\n";
    return exit_code::numeric_abort;
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return exit_code::config_error;
  }
}

}  // namespace mfdgm
