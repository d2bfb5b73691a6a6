#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace decpi {

inline constexpr const char* kVersion = "0.1.0";

/// Tolerance knobs shared across the library. All distribution rows are
/// validated against `distribution`; dominance LPs accept a merge when the
/// optimum is at least -`lp_accept` (absorbing solver round-off).
struct Tolerances {
  double distribution = 1e-9;
  double lp_accept = 1e-9;
  double value_preserve = 1e-7;
  double improve_stop = 1e-7;
};

struct SolveConfig {
  Tolerances tol;
  double eval_residual_target = 1e-10;  // max-norm Bellman residual
  int dense_threshold = 512;            // unknown count solved by direct LU
  bool dominance_screen = true;         // single-node dominance pre-check
  int max_local_nodes = 4000;           // capacity guard per local controller
  double wallclock_limit_s = 4.0 * 3600.0;
  std::string lp_dump_dir;  // when set, dump each LP in CPLEX LP format
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnreachableObservationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for conditions the algorithms rule out (singular evaluation
/// systems, infeasible dominance LPs): always a bug, never user error.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit generator with explicit draw mappings so results do
/// not depend on the standard library's distribution implementations.
/// The constructor scrambles the seed so that nearby seeds (seed, seed+1,
/// seed + k*increment) start at unrelated positions of the splitmix orbit
/// instead of shifted windows of one stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    state_ = z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return n <= 1 ? 0 : static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  /// Sample from a probability vector by cumulative scan.
  int sample(std::span<const double> probs) {
    double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  std::uint64_t state_;
};

inline bool is_distribution(std::span<const double> row, double tol) {
  double sum = 0.0;
  for (double p : row) {
    if (p < -tol) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

inline void normalize_in_place(std::span<double> row) {
  double sum = std::accumulate(row.begin(), row.end(), 0.0);
  if (sum <= 0.0) throw InternalError("cannot normalize a zero vector");
  for (double& p : row) p /= sum;
}

/// Mixed-radix index space used for joint actions, observations and nodes.
/// Component 0 is the most significant digit.
struct MixedRadix {
  std::vector<int> radix;
  std::vector<long long> stride;
  long long total = 1;

  MixedRadix() = default;
  explicit MixedRadix(std::vector<int> sizes) : radix(std::move(sizes)) {
    stride.assign(radix.size(), 1);
    total = 1;
    for (int i = static_cast<int>(radix.size()) - 1; i >= 0; --i) {
      stride[i] = total;
      total *= radix[i];
    }
  }

  long long encode(std::span<const int> digits) const {
    long long idx = 0;
    for (std::size_t i = 0; i < radix.size(); ++i) idx += digits[i] * stride[i];
    return idx;
  }

  void decode(long long idx, std::span<int> digits) const {
    for (std::size_t i = 0; i < radix.size(); ++i) {
      digits[i] = static_cast<int>(idx / stride[i]);
      idx %= stride[i];
    }
  }

  /// Odometer step; returns false after wrapping past the last tuple.
  bool advance(std::span<int> digits) const {
    for (int i = static_cast<int>(radix.size()) - 1; i >= 0; --i) {
      if (++digits[i] < radix[i]) return true;
      digits[i] = 0;
    }
    return false;
  }
};

}  // namespace decpi
