#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace posedyn {

/// Seeded deterministic RNG. The full state (engine plus the normal
/// distribution's cached spare value) serializes to text so checkpoints can
/// resume a run bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next_u64() { return gen_(); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(gen_);
  }

  /// Derive an independent stream from the base seed; gives every episode its
  /// own RNG so collection results do not depend on worker count.
  Rng spawn(std::uint64_t stream) const {
    std::seed_seq seq{seed_, stream, std::uint64_t{0x9e3779b97f4a7c15ULL}};
    Rng r;
    r.gen_.seed(seq);
    return r;
  }

  void reseed(std::uint64_t seed) {
    seed_ = seed;
    gen_.seed(seed);
    normal_.reset();
  }

  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << gen_ << ' ' << normal_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> seed_ >> gen_ >> normal_;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::uint64_t seed_ = 0;
};

}  // namespace posedyn
