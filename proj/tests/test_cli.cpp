#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfdgm/checkpoint.hpp"
#include "mfdgm/commands.hpp"
#include "mfdgm/config.hpp"
#include "mfdgm/error.hpp"
#include "mfdgm/output.hpp"

using namespace mfdgm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfdgm_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A few seconds' worth of training on either problem.
std::string tiny(const std::string& preset, int iterations = 40, int record_every = 10) {
  return "[experiment]\npreset = " + preset +
         "\n[train]\niterations = " + std::to_string(iterations) +
         "\nbatch_interior = 16\nbatch_condition = 12\nrecord_every = " + std::to_string(record_every) +
         "\n[phi_net]\nhidden_width = 6\n[rho_net]\nhidden_width = 6\n[eval]\ngrid_t = 8\ngrid_x = 9\n"
         "[traffic]\ngrid_x = 11\n";
}

std::string write_config(const fs::path& dir, const std::string& text) {
  const std::string path = (dir / "run.ini").string();
  write_file_atomic(path, text);
  return path;
}

int run(const std::string& command, const std::string& config, const fs::path& out,
        const std::string& resume = "", std::optional<std::uint64_t> seed = std::nullopt) {
  CommandLine cl;
  cl.command = command;
  cl.config_path = config;
  cl.out_dir = out.string();
  cl.resume = resume;
  cl.seed = seed;
  std::ostringstream log;
  return run_command(cl, log);
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* header = nullptr) {
  std::istringstream in(read_file(p.string()));
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

std::size_t count_rows(const fs::path& p) { return read_csv(p).size(); }

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_real(0.1) == "1.0000000000000001e-01");
  CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_real(-2.5e-300) == "-2.5000000000000000e-300");
  CsvTable t({"a", "b"});
  t.add_row({"1", "2"});
  CHECK(t.str() == "a,b\n1,2\n");
  CHECK_THROWS(t.add_row({"1"}));
}

TEST_CASE("every preset round-trips through the config format") {
  for (const std::string& name : preset_names()) {
    CAPTURE(name);
    const ExperimentConfig c = make_preset(name);
    CHECK_NOTHROW(c.validate());
    const ExperimentConfig r = parse_config(format_config(c));
    CHECK(r == c);
    CHECK(format_config(r) == format_config(c));
  }
  CHECK(preset_names().size() == 7);
  CHECK_THROWS_AS(make_preset("test9"), ConfigError);
}

TEST_CASE("round trip with awkward values") {
  ExperimentConfig c = make_preset("test1");
  c.train.phi_opt.lr = 0.1 + 0.2;
  c.train.rho_opt.weight_decay = 1.0 / 3.0;
  c.problem.nu = 0.7;
  c.compare.seeds = {5, 9};
  c.output.dir = "some dir/with space";
  c.gradcheck.inject_fault = 1e-300;
  CHECK(parse_config(format_config(c)) == c);
}

TEST_CASE("preset hyperparameters") {
  const ExperimentConfig t1 = make_preset("test1");
  CHECK(t1.problem.kind == ProblemKind::analytic);
  CHECK(t1.problem.d == 1);
  CHECK(t1.problem.nu == 1.0);
  CHECK(t1.train.iterations == 10000);
  CHECK(t1.train.batch_interior == 256);
  CHECK(t1.train.batch_condition == 256);
  CHECK(t1.train.phi_net.hidden_layers == 3);
  CHECK(t1.train.phi_net.hidden_width == 100);
  CHECK(t1.train.phi_net.skip_weight == 0.5);
  CHECK(t1.train.phi_net.activation == Activation::softplus);
  CHECK(t1.train.rho_net.activation == Activation::tanh);
  CHECK(t1.train.phi_opt.kind == OptimizerKind::adam);
  CHECK(t1.train.phi_opt.lr == 1e-4);
  CHECK(t1.train.phi_opt.weight_decay == 1e-3);
  CHECK(t1.train.record_every == 100);
  CHECK_FALSE(t1.source.empty());

  const ExperimentConfig t2 = make_preset("test2");
  CHECK(t2.train.phi_net.hidden_layers == 1);
  const ExperimentConfig t3 = make_preset("test3");
  CHECK(t3.problem.d == 50);
  CHECK(t3.train.phi_net.input_dim == 51);
  CHECK(t3.train.batch_interior == 512);
  const ExperimentConfig cmp = make_preset("compare");
  CHECK(cmp.train.batch_interior == 50);
  CHECK(cmp.train.iterations == 5000);
  CHECK(cmp.compare.sgd_lr == 1e-3);
  CHECK(cmp.compare.sgd_weight_decay == 1e-3);
  for (const char* n : {"traffic0", "traffic05"}) {
    const ExperimentConfig t = make_preset(n);
    CHECK(t.problem.kind == ProblemKind::traffic);
    CHECK(t.train.phi_net.hidden_layers == 1);
    CHECK(t.train.phi_net.hidden_width == 50);
    CHECK(t.train.phi_net.activation == Activation::softmax);
    CHECK(t.train.rho_net.activation == Activation::relu);
    CHECK(t.train.phi_opt.lr == 4e-4);
    CHECK(t.train.rho_opt.lr == 5e-4);
    CHECK(t.train.phi_opt.weight_decay == 1e-4);
    CHECK(t.train.batch_interior == 100);
    CHECK(t.train.iterations == 10000);
  }
  CHECK(make_preset("traffic0").problem.nu == 0.0);
  CHECK(make_preset("traffic05").problem.nu == 0.5);
}

TEST_CASE("strict parsing") {
  CHECK_THROWS_AS(parse_config("[train]\nlearning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[trian]\niterations = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\niterations = 5\niterations = 6\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\niterations = five\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\niterations = 5x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\niterations\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("iterations = 5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\niterations = 5\n[experiment]\npreset = test1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\npreset = nope\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[phi_net]\nactivation = sigmoid\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\niterations = 0\n"), ConfigError);
  try {
    parse_config("[train]\n\n# comment\nbogus = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  const ExperimentConfig c = parse_config("# comment\n[experiment]\npreset = test1\n\n[train]\niterations = 7\n");
  CHECK(c.train.iterations == 7);
  CHECK(c.train.batch_interior == 256);
  const ExperimentConfig d = parse_config("[problem]\nd = 4\n");
  CHECK(d.train.phi_net.input_dim == 5);
  CHECK(d.train.rho_net.input_dim == 5);
}

TEST_CASE("config hash ignores run-length and output settings") {
  ExperimentConfig a = make_preset("test1");
  ExperimentConfig b = a;
  b.train.iterations = 20000;
  b.output.dir = "elsewhere";
  b.output.checkpoint_every = 50;
  CHECK(config_hash(a) == config_hash(b));
  b.train.phi_opt.lr = 2e-4;
  CHECK_FALSE(config_hash(a) == config_hash(b));
}

TEST_CASE("checkpoint round trip and errors") {
  const fs::path dir = scratch("checkpoint");
  const ExperimentConfig c = parse_config(tiny("test1", 3, 1));
  const MFGProblem p = make_problem(c.problem);
  TrainingState s = init_training(p, c.train);
  train(p, c.train, s);
  Checkpoint ck;
  ck.config_hash = config_hash(c);
  ck.phi_spec = c.train.phi_net;
  ck.rho_spec = c.train.rho_net;
  ck.state = s;
  const std::string path = (dir / "ck.txt").string();
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.version == checkpoint_version);
  CHECK(back.config_hash == ck.config_hash);
  CHECK(back.phi_spec == ck.phi_spec);
  CHECK(back.rho_spec == ck.rho_spec);
  CHECK(back.state.phi == s.phi);
  CHECK(back.state.rho == s.rho);
  CHECK(back.state.phi_opt == s.phi_opt);
  CHECK(back.state.rho_opt == s.rho_opt);
  CHECK(back.state.rng == s.rng);
  CHECK(back.state.iteration == s.iteration);
  REQUIRE(back.state.metrics.size() == s.metrics.size());
  CHECK(back.state.metrics.back().hjb.residual == s.metrics.back().hjb.residual);
  CHECK(back.state.metrics.back().error->phi == s.metrics.back().error->phi);
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(ck));

  std::string text = serialize_checkpoint(ck);
  const std::string wrong = "mfdgm-checkpoint 2" + text.substr(text.find('\n'));
  CHECK_THROWS_AS(parse_checkpoint(wrong), LoadError);
  CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), LoadError);
  CHECK_THROWS_AS(parse_checkpoint(""), LoadError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.txt").string()), LoadError);
  std::string garbled = text;
  garbled[garbled.size() / 2] = '#';
  CHECK_THROWS_AS(parse_checkpoint(garbled), LoadError);
}

TEST_CASE("train writes its outputs deterministically") {
  const fs::path dir = scratch("train");
  const std::string cfg = write_config(dir, tiny("test1", 40, 10));
  REQUIRE(run("train", cfg, dir / "a") == exit_code::ok);
  REQUIRE(run("train", cfg, dir / "b") == exit_code::ok);
  for (const char* f : {"loss_hjb.csv", "loss_fp.csv", "rel_err.csv", "checkpoint_final.txt"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(dir / "a" / f));
    CHECK(read_file((dir / "a" / f).string()) == read_file((dir / "b" / f).string()));
  }
  std::string header;
  const auto rows = read_csv(dir / "a" / "loss_hjb.csv", &header);
  CHECK(header == "iteration,residual,condition,total");
  CHECK(rows.size() == 4);
  CHECK(rows[0][0] == 10);
  CHECK(rows[0][3] == doctest::Approx(rows[0][1] + rows[0][2]).epsilon(1e-15));
  CHECK(read_csv(dir / "a" / "rel_err.csv", &header).size() == 4);
  CHECK(header == "iteration,rho,phi");
  const nlohmann::json s = nlohmann::json::parse(read_file((dir / "a" / "summary.json").string()));
  CHECK(s["status"] == "completed");
  CHECK(s["preset"] == "test1");
  // the written config reproduces the run
  CHECK(parse_config(read_file((dir / "a" / "config.ini").string())).train.iterations == 40);
}

TEST_CASE("resume continues byte-identically") {
  const fs::path dir = scratch("resume");
  std::string text = tiny("traffic05", 30, 5);
  text += "[output]\ncheckpoint_every = 10\n";
  const std::string cfg = write_config(dir, text);
  REQUIRE(run("train", cfg, dir / "straight") == exit_code::ok);
  REQUIRE(fs::exists(dir / "straight" / "checkpoint_10.txt"));
  REQUIRE(fs::exists(dir / "straight" / "checkpoint_20.txt"));
  REQUIRE(run("train", cfg, dir / "resumed", (dir / "straight" / "checkpoint_10.txt").string()) == exit_code::ok);
  for (const char* f : {"loss_hjb.csv", "loss_fp.csv", "checkpoint_final.txt"})
    CHECK(read_file((dir / "straight" / f).string()) == read_file((dir / "resumed" / f).string()));
  // traffic has no exact solution
  CHECK_FALSE(fs::exists(dir / "straight" / "rel_err.csv"));

  // a checkpoint from a different configuration is refused
  const std::string other = write_config(dir, tiny("traffic0", 30, 5));
  CHECK(run("train", other, dir / "bad", (dir / "straight" / "checkpoint_10.txt").string()) ==
        exit_code::config_error);
}

TEST_CASE("seed override and output directory precedence") {
  const fs::path dir = scratch("seed");
  const std::string cfg = write_config(dir, tiny("test1", 10, 10));
  CommandLine cl;
  cl.command = "train";
  cl.config_path = cfg;
  cl.seed = 7;
  ExperimentConfig c = resolve_config(cl);
  CHECK(c.train.seed == 7);
  CHECK(c.compare.seeds == std::vector<std::uint64_t>{7});
  CHECK(c.output.dir == "out/test1");
  ::setenv(output_dir_env, "from_env", 1);
  CHECK(resolve_config(cl).output.dir == "from_env");
  cl.out_dir = "from_flag";
  CHECK(resolve_config(cl).output.dir == "from_flag");
  ::unsetenv(output_dir_env);
  CommandLine p;
  p.command = "train";
  p.preset = "traffic0";
  CHECK(resolve_config(p).problem.kind == ProblemKind::traffic);
  CommandLine none;
  none.command = "train";
  CHECK_THROWS_AS(resolve_config(none), ConfigError);

  REQUIRE(run("train", cfg, dir / "s1", "", 1) == exit_code::ok);
  REQUIRE(run("train", cfg, dir / "s2", "", 2) == exit_code::ok);
  CHECK_FALSE(read_file((dir / "s1" / "loss_hjb.csv").string()) == read_file((dir / "s2" / "loss_hjb.csv").string()));
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(run("train", write_config(dir, "[train]\nbogus = 1\n"), dir / "x") == exit_code::config_error);
  CHECK(run("train", (dir / "nonexistent.ini").string(), dir / "x") == exit_code::config_error);
  CHECK(run("compare", write_config(dir, tiny("traffic0")), dir / "x") == exit_code::config_error);
  CHECK(run("traffic", write_config(dir, tiny("test1")), dir / "x") == exit_code::config_error);
  CHECK(run("launch", write_config(dir, tiny("test1")), dir / "x") == exit_code::config_error);
  // a huge SGD step blows the parameters up within a few iterations
  const std::string diverge = tiny("test1", 200, 10) +
                              "[phi_opt]\nkind = sgd\nlr = 1e6\n[rho_opt]\nkind = sgd\nlr = 1e6\n";
  CHECK(run("train", write_config(dir, diverge), dir / "nan") == exit_code::numeric_abort);
  const nlohmann::json s = nlohmann::json::parse(read_file((dir / "nan" / "summary.json").string()));
  CHECK(s["status"] == "aborted");
}

TEST_CASE("gradcheck command") {
  const fs::path dir = scratch("gradcheck");
  CHECK(run("gradcheck", write_config(dir, "[gradcheck]\npoints = 10\n"), dir / "ok") == exit_code::ok);
  const std::string report = read_file((dir / "ok" / "gradcheck_report.txt").string());
  CHECK(report.find("PASS") != std::string::npos);
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(run("gradcheck", write_config(dir, "[gradcheck]\npoints = 10\ninject_fault = 1e-3\n"), dir / "bad") ==
        exit_code::verification_failed);
  CHECK(read_file((dir / "bad" / "gradcheck_report.txt").string()).find("FAIL") != std::string::npos);
}

TEST_CASE("compare command") {
  const fs::path dir = scratch("compare");
  const std::string cfg = write_config(dir, tiny("compare", 20, 10));
  REQUIRE(run("compare", cfg, dir / "out") == exit_code::ok);
  int trajectories = 0;
  for (const auto& e : fs::directory_iterator(dir / "out"))
    if (e.path().filename().string().rfind("rel_err_", 0) == 0) ++trajectories;
  CHECK(trajectories == 6);
  // medians recomputed from the trajectory files
  std::istringstream in(read_file((dir / "out" / "compare_summary.csv").string()));
  std::string line;
  std::getline(in, line);
  CHECK(line == "method,seeds,median_final_rho,median_final_phi");
  for (const std::string mode : {"mfdgm", "dgm_mfg"}) {
    std::getline(in, line);
    CHECK(line.rfind(mode + ",3,", 0) == 0);
    std::vector<double> rho, phi;
    for (int seed = 0; seed < 3; ++seed) {
      const auto rows = read_csv(dir / "out" / ("rel_err_" + mode + "_seed" + std::to_string(seed) + ".csv"));
      REQUIRE(rows.size() == 2);
      rho.push_back(rows.back()[1]);
      phi.push_back(rows.back()[2]);
    }
    std::sort(rho.begin(), rho.end());
    std::sort(phi.begin(), phi.end());
    const std::string expect = mode + ",3," + format_real(rho[1]) + "," + format_real(phi[1]);
    CHECK(line == expect);
  }
  const nlohmann::json s = nlohmann::json::parse(read_file((dir / "out" / "summary.json").string()));
  CHECK(s.contains("mfdgm_phi_not_worse"));
  CHECK(s["runs"].size() == 6);
}

TEST_CASE("traffic command") {
  const fs::path dir = scratch("traffic");
  for (const char* preset : {"traffic0", "traffic05"}) {
    CAPTURE(preset);
    const fs::path out = dir / preset;
    REQUIRE(run("traffic", write_config(dir, tiny(preset, 20, 10)), out) == exit_code::ok);
    int fields = 0;
    for (const char* f : {"rho", "phi", "u", "q"})
      for (const char* t : {"t0", "t0.5", "t1"}) {
        const fs::path p = out / (std::string(f) + "_" + t + ".csv");
        if (fs::exists(p)) ++fields;
        CHECK(count_rows(p) == 11);
      }
    CHECK(fields == 12);
    CHECK(fs::exists(out / "fundamental_diagram.csv"));
    CHECK(fs::exists(out / "greenshields_reference.csv"));
    std::string header;
    for (const char* t : {"t0", "t0.5", "t1"}) {
      const auto q = read_csv(out / (std::string("q_") + t + ".csv"), &header);
      CHECK(header == "x,rho,u,q");
      for (const auto& r : q) CHECK(r[3] == r[1] * r[2]);
      const auto u = read_csv(out / (std::string("u_") + t + ".csv"), &header);
      CHECK(header == "x,rho,v_x,u");
      for (const auto& r : u) CHECK(r[3] == 1.0 * (1.0 - r[1] / 1.0) - r[2]);
    }
    for (const auto& r : read_csv(out / "fundamental_diagram.csv", &header)) CHECK(r[4] == r[2] * r[3]);
    CHECK(header == "t,x,rho,u,q");
    double max_phi = 0.0;
    for (const auto& r : read_csv(out / "phi_t1.csv")) max_phi = std::max(max_phi, std::abs(r[1]));
    const nlohmann::json s = nlohmann::json::parse(read_file((out / "summary.json").string()));
    CHECK(s["max_abs_phi_T"].get<double>() == max_phi);
  }
}

TEST_CASE("command-line binary") {
  const char* exe = std::getenv("MFDGM_CLI");
  if (!exe) return;
  const fs::path dir = scratch("binary");
  const std::string cfg = write_config(dir, tiny("test1", 10, 10));
  auto sh = [](const std::string& cmd) {
    const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  const std::string e = std::string("\"") + exe + "\"";
  CHECK(sh(e + " train --config " + cfg + " --out " + (dir / "a").string()) == 0);
  CHECK(fs::exists(dir / "a" / "loss_hjb.csv"));
  CHECK(sh("MFDGM_OUT_DIR=" + (dir / "env").string() + " " + e + " train --config " + cfg) == 0);
  CHECK(fs::exists(dir / "env" / "loss_fp.csv"));
  CHECK(sh(e + " train --config " + cfg + " --seed 3 --out " + (dir / "b").string()) == 0);
  CHECK(sh(e + " train --bogus") == 2);
  CHECK(sh(e + " train") == 2);
  CHECK(sh(e) == 2);
}
