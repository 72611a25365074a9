#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dpmlds {

/// Seedable random stream. Two streams built from the same (seed, stream id)
/// produce the same draws; different stream ids are seeded through a
/// std::seed_seq so they behave as independent generators.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// A child stream with the same seed and a stream id mixed from this
  /// stream's id and `key`.
  RngStream derive(std::uint64_t key) const;

  double uniform();  // [0, 1)
  double normal();   // N(0, 1)
  double gamma(double shape, double scale);
  double beta(double a, double b);
  double chi_squared(double dof);
  bool bernoulli(double p);

  /// Index drawn proportionally to nonnegative `weights` (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// splitmix64 finalizer, used to decorrelate derived stream ids.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace dpmlds
