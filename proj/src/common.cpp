#include "cellhom/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>

namespace cellhom {

namespace {
std::atomic<int> g_threads{0};

int env_threads() {
  const char* env = std::getenv("CELLHOM_THREADS");
  if (env) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}
}  // namespace

int thread_count_hint() {
  int n = g_threads.load();
  return n > 0 ? n : env_threads();
}

void set_thread_count_hint(int n) { g_threads.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  int threads = thread_count_hint();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      f(i);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

double batch_means_stderr(const std::vector<double>& series, int n_batches) {
  if (series.size() < static_cast<std::size_t>(2 * n_batches)) n_batches = 2;
  std::size_t len = series.size() / n_batches;
  if (len == 0) return 0.0;
  MeanVar batches;
  for (int b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += series[i];
    batches.add(s / static_cast<double>(len));
  }
  return batches.stderr_mean();
}

}  // namespace cellhom
