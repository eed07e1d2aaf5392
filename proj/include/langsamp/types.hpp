#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace langsamp {

// All dense math runs on row-major Eigen matrices so that tensor payloads
// serialize as plain row-major scans. Vectors are 1 x n matrices.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matf = Mat<float>;
using Matd = Mat<double>;

// Error taxonomy. The CLI maps ConfigError/DataError/IoError/ShapeError/
// ValueError to exit code 2 and NumericError to exit code 3.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mixes a textual tag into a base seed so that independent random streams
// (model init, batch sampling, masking, ...) never overlap.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t x = base ^ h;
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG with explicit state serialization. Sampling helpers are
// hand-rolled on top of mt19937_64 so that sequences never depend on the
// standard library's distribution implementations, which are unspecified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) without modulo bias.
  long uniform_int(long n) {
    if (n <= 0) throw ValueError("Rng::uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / un * un;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<long>(x % un);
  }

  // Standard normal via Box-Muller; the second draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Draws an index from a nonnegative weight vector by inverse CDF.
  int categorical(std::span<const double> weights) {
    if (weights.empty()) throw ValueError("Rng::categorical: empty weight vector");
    double total = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] >= 0.0)) throw ValueError("Rng::categorical: negative or NaN weight");
      total += weights[i];
      if (weights[i] > 0.0) last_positive = static_cast<int>(i);
    }
    if (!(total > 0.0)) throw ValueError("Rng::categorical: weights sum to zero");
    const double u = uniform01() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (u < cum && weights[i] > 0.0) return static_cast<int>(i);
    }
    return last_positive;  // float round-off pushed u past the last bucket
  }

  // Textual state round-trip, used for bit-exact training resume.
  std::string save_state() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << double_bits(spare_);
    return os.str();
  }

  void load_state(const std::string& blob) {
    std::istringstream is(blob);
    int spare_flag = 0;
    std::uint64_t bits = 0;
    is >> engine_ >> spare_flag >> bits;
    if (is.fail()) throw IoError("Rng::load_state: malformed state blob");
    has_spare_ = spare_flag != 0;
    spare_ = bits_to_double(bits);
  }

 private:
  static std::uint64_t double_bits(double d) {
    std::uint64_t u = 0;
    std::memcpy(&u, &d, sizeof u);
    return u;
  }
  static double bits_to_double(std::uint64_t u) {
    double d = 0;
    std::memcpy(&d, &u, sizeof d);
    return d;
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Worker count for embed/eval loops: LANGSAMP_THREADS caps it, default 1 so
// builds are single-threaded and deterministic unless explicitly widened.
int worker_count();

// Static-partition parallel map. Results must be written to disjoint slots so
// the output is independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n == 0 ? 1 : n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed) std::rethrow_exception(first_error);
}

}  // namespace langsamp
