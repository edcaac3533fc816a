#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace mfdgm {

struct MFGProblem;

/// Counter-based generator: output n is a SplitMix64 finalization of
/// key + n * golden.  The whole state is (key, counter), so it serializes
/// trivially and gives identical streams on every platform.
class Rng {
 public:
  Rng() = default;
  Rng(std::uint64_t seed, std::uint64_t stream = 0);
  static Rng from_state(std::uint64_t key, std::uint64_t counter);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t z);

/// Points are stored one sample per column (d x B).  `times` is empty for
/// purely spatial batches.
struct SampleBatch {
  Eigen::VectorXd times;
  Eigen::MatrixXd points;

  Eigen::Index size() const { return points.cols(); }
  Eigen::Index dim() const { return points.rows(); }
  bool has_times() const { return times.size() > 0; }
};

/// B independent uniform draws on [0,T] x Omega.  For each sample the time is
/// drawn first, then the coordinates in order.
SampleBatch sample_interior(Rng& rng, const MFGProblem& problem, Eigen::Index count);

/// S independent uniform draws on Omega.
SampleBatch sample_spatial(Rng& rng, const MFGProblem& problem, Eigen::Index count);

/// The same points with every time set to `t`.
SampleBatch at_time(const SampleBatch& spatial, double t);

}  // namespace mfdgm
