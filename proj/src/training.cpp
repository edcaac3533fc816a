#include "mfdgm/training.hpp"

#include <cmath>
#include <memory>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace mfdgm {

std::string to_string(TrainMode mode) { return mode == TrainMode::mfdgm ? "mfdgm" : "dgm_mfg"; }

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "mfdgm") return TrainMode::mfdgm;
  if (name == "dgm_mfg") return TrainMode::dgm_mfg;
  throw UsageError("unknown training mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw UsageError("iterations must be >= 1");
  if (batch_interior < 1 || batch_condition < 1) throw UsageError("batch sizes must be >= 1");
  if (record_every < 1) throw UsageError("record_every must be >= 1");
  phi_opt.validate();
  rho_opt.validate();
  phi_net.validate();
  rho_net.validate();
}

namespace {
constexpr std::uint64_t kSampleStream = 0x73616d706c65ULL;

void require_finite(const LossParts& l, const std::vector<double>& a, const std::vector<double>& b, const char* what,
                    std::int64_t it) {
  bool ok = std::isfinite(l.residual) && std::isfinite(l.condition);
  for (double v : a) ok = ok && std::isfinite(v);
  for (double v : b) ok = ok && std::isfinite(v);
  if (!ok) throw TrainingAborted(std::string("non-finite ") + what + " at iteration " + std::to_string(it), it);
}

// Every iteration allocates and frees the same large jet buffers.  Left to
// the defaults glibc maps and unmaps them each time, which costs ~20% in page
// faults.
void keep_scratch_on_heap() {
#ifdef __GLIBC__
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}
}  // namespace

TrainingState init_training(const MFGProblem& problem, const TrainConfig& config) {
  config.validate();
  problem.validate();
  if (config.phi_net.spatial_dim() != problem.d || config.rho_net.spatial_dim() != problem.d)
    throw ShapeError("network input dimension does not match the problem");
  TrainingState s;
  s.phi = init_network(config.phi_net, config.seed * 2);
  s.rho = init_network(config.rho_net, config.seed * 2 + 1);
  s.phi_opt = make_optimizer(config.phi_opt, s.phi.count());
  s.rho_opt = make_optimizer(config.rho_opt, s.rho.count());
  s.rng = Rng(config.seed, kSampleStream);
  return s;
}

void train(const MFGProblem& problem, const TrainConfig& config, TrainingState& state, const TrainHooks& hooks) {
  config.validate();
  keep_scratch_on_heap();
  std::unique_ptr<ErrorProbe> probe;
  if (config.track_error && problem.exact) probe = std::make_unique<ErrorProbe>(make_error_probe(problem, config.probe));

  const NetworkSpec& ps = config.phi_net;
  const NetworkSpec& rs = config.rho_net;
  while (state.iteration < config.iterations) {
    const std::int64_t n = state.iteration;
    // Work on copies so an abort leaves the state at the last good iteration.
    NetworkParams phi = state.phi;
    NetworkParams rho = state.rho;
    OptimizerState phi_opt = state.phi_opt;
    OptimizerState rho_opt = state.rho_opt;
    Rng rng = state.rng;
    LossParts hjb, fp;
    LossGradients g;
    try {
      if (config.mode == TrainMode::mfdgm) {
        SampleBatch in = sample_interior(rng, problem, config.batch_interior);
        SampleBatch term = sample_spatial(rng, problem, config.batch_condition);
        hjb = hjb_loss(problem, {ps, phi}, {rs, rho}, in, term, &g);
        require_finite(hjb, g.phi, g.rho, "HJB loss", n);
        optimizer_step(phi_opt, phi, g.phi);
        optimizer_step(rho_opt, rho, g.rho);

        in = sample_interior(rng, problem, config.batch_interior);
        SampleBatch init = sample_spatial(rng, problem, config.batch_condition);
        fp = fp_loss(problem, {ps, phi}, {rs, rho}, in, init, &g);
        require_finite(fp, g.phi, g.rho, "Fokker-Planck loss", n);
        optimizer_step(phi_opt, phi, g.phi);
        optimizer_step(rho_opt, rho, g.rho);
      } else {
        const SampleBatch in = sample_interior(rng, problem, config.batch_interior);
        const SampleBatch cond = sample_spatial(rng, problem, config.batch_condition);
        LossGradients g2;
        hjb = hjb_loss(problem, {ps, phi}, {rs, rho}, in, cond, &g);
        fp = fp_loss(problem, {ps, phi}, {rs, rho}, in, cond, &g2);
        for (std::size_t i = 0; i < g.phi.size(); ++i) g.phi[i] += g2.phi[i];
        for (std::size_t i = 0; i < g.rho.size(); ++i) g.rho[i] += g2.rho[i];
        require_finite(hjb, g.phi, g.rho, "HJB loss", n);
        require_finite(fp, g.phi, g.rho, "Fokker-Planck loss", n);
        optimizer_step(phi_opt, phi, g.phi);
        optimizer_step(rho_opt, rho, g.rho);
      }
    } catch (const TrainingAborted&) {
      throw;
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string(e.what()) + " at iteration " + std::to_string(n), n);
    }
    bool params_ok = true;
    for (double v : phi.flat) params_ok = params_ok && std::isfinite(v);
    for (double v : rho.flat) params_ok = params_ok && std::isfinite(v);
    if (!params_ok) throw TrainingAborted("non-finite parameters at iteration " + std::to_string(n), n);

    state.phi = std::move(phi);
    state.rho = std::move(rho);
    state.phi_opt = std::move(phi_opt);
    state.rho_opt = std::move(rho_opt);
    state.rng = rng;
    state.iteration = n + 1;

    if (state.iteration % config.record_every == 0) {
      MetricsRecord rec;
      rec.iteration = state.iteration;
      rec.hjb = hjb;
      rec.fp = fp;
      if (probe) rec.error = probe_errors(*probe, ps, state.phi, rs, state.rho);
      state.metrics.push_back(rec);
      if (hooks.on_record) hooks.on_record(state, state.metrics.back());
    }
    if (hooks.after_iteration) hooks.after_iteration(state);
  }
}

TrainingState train_mfdgm(const MFGProblem& problem, TrainConfig config) {
  config.mode = TrainMode::mfdgm;
  TrainingState s = init_training(problem, config);
  train(problem, config, s);
  return s;
}

TrainingState train_dgm_mfg(const MFGProblem& problem, TrainConfig config) {
  config.mode = TrainMode::dgm_mfg;
  TrainingState s = init_training(problem, config);
  train(problem, config, s);
  return s;
}

}  // namespace mfdgm
