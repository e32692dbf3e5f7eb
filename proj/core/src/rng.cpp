#include "diffant/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace diffant {

std::uint64_t mix_u64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix_u64(a ^ (mix_u64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(mix_u64(seed)) {}

RngStream RngStream::derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  std::uint64_t s = hash_combine(seed_, a);
  s = hash_combine(s, b);
  s = hash_combine(s, c);
  return RngStream(s);
}

double RngStream::uniform() {
  // 53 random bits -> double in [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int RngStream::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(engine_);
}

double RngStream::gaussian() {
  // Box-Muller without state between calls; one pair per draw keeps streams
  // insensitive to copy/derive order.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

int RngStream::categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("categorical: negative weight");
    total += p;
  }
  if (total <= 0.0) throw std::invalid_argument("categorical: weights sum to zero");
  double r = uniform() * total;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    r -= probs[i];
    if (r < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

Eigen::MatrixXd RngStream::gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gaussian();
  return m;
}

Eigen::VectorXd RngStream::gaussian_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gaussian();
  return v;
}

}  // namespace diffant
