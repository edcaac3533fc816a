#include "mfdgm/sampling.hpp"

#include "mfdgm/error.hpp"
#include "mfdgm/problem.hpp"

namespace mfdgm {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed + kGolden) ^ (stream * kGolden + 0x632BE59BD9B4E019ULL))), counter_(0) {}

Rng Rng::from_state(std::uint64_t key, std::uint64_t counter) {
  Rng r;
  r.key_ = key;
  r.counter_ = counter;
  return r;
}

std::uint64_t Rng::next_u64() { return splitmix64(key_ + (counter_++) * kGolden); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

SampleBatch sample_interior(Rng& rng, const MFGProblem& problem, Eigen::Index count) {
  if (count < 1) throw UsageError("sample_interior: batch size must be >= 1");
  SampleBatch b;
  b.times.resize(count);
  b.points.resize(problem.d, count);
  for (Eigen::Index s = 0; s < count; ++s) {
    b.times[s] = rng.uniform(0.0, problem.T);
    for (int i = 0; i < problem.d; ++i) b.points(i, s) = rng.uniform(problem.omega_lo[i], problem.omega_hi[i]);
  }
  return b;
}

SampleBatch sample_spatial(Rng& rng, const MFGProblem& problem, Eigen::Index count) {
  if (count < 1) throw UsageError("sample_spatial: batch size must be >= 1");
  SampleBatch b;
  b.points.resize(problem.d, count);
  for (Eigen::Index s = 0; s < count; ++s)
    for (int i = 0; i < problem.d; ++i) b.points(i, s) = rng.uniform(problem.omega_lo[i], problem.omega_hi[i]);
  return b;
}

SampleBatch at_time(const SampleBatch& spatial, double t) {
  SampleBatch b;
  b.points = spatial.points;
  b.times = Eigen::VectorXd::Constant(spatial.size(), t);
  return b;
}

}  // namespace mfdgm
