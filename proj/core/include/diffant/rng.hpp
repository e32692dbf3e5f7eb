#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>

namespace diffant {

// Deterministic pseudo-random stream. Sub-streams are derived from the root
// seed plus caller-chosen ids (video index, sample index, ...) so that results
// do not depend on the order in which independent streams are consumed.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed);

  // Child stream keyed by up to three ids; derivation uses the stream's own
  // seed, not its current engine state.
  RngStream derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

  std::uint64_t seed() const { return seed_; }

  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  int uniform_int(int lo, int hi);     // inclusive bounds
  double gaussian();                   // standard normal
  bool bernoulli(double p);

  // index i with probability probs[i] / sum(probs)
  int categorical(std::span<const double> probs);

  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd gaussian_vector(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// splitmix64-style avalanche; used for seed derivation and stable id hashing.
std::uint64_t mix_u64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

}  // namespace diffant
