#ifndef CELLHOM_COMMON_HPP
#define CELLHOM_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cellhom {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Errors that correspond to violated preconditions / assumptions carry the
// message verbatim so the CLI can map them to exit codes.
struct AssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Per-path generator derived from (master seed, path index); paths are
// independent of how the ensemble is chunked over threads.
inline std::mt19937_64 path_rng(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = splitmix64(master ^ splitmix64(index + 1));
  return std::mt19937_64(s);
}

int thread_count_hint();
void set_thread_count_hint(int n);

// Chunked parallel map; f(i) must only write to slots owned by i.
// With the hint at 1 this degenerates to a plain loop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

// Wrap a scalar to [0,1); returns the integer part removed.
inline double wrap01(double x, long long& shift) {
  double f = std::floor(x);
  shift = static_cast<long long>(f);
  return x - f;
}

inline double wrap01(double x) {
  return x - std::floor(x);
}

// Signed representative of x in [-1/2, 1/2).
inline double wrap_half(double x) {
  return x - std::floor(x + 0.5);
}

struct MeanVar {
  long long n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double stderr_mean() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

// Batch-means stderr for a correlated stationary series.
double batch_means_stderr(const std::vector<double>& series, int n_batches = 20);

}  // namespace cellhom

#endif
