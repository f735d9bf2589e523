#include "svecchia/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace svecchia {
namespace {

std::atomic<int> g_threads{0};

int env_threads() {
  if (const char* s = std::getenv("EMU_THREADS")) {
    try {
      int v = std::stoi(s);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace

int num_threads() {
  int t = g_threads.load();
  return t > 0 ? t : env_threads();
}

void set_num_threads(int threads) { g_threads.store(threads > 0 ? threads : 0); }

void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  const std::size_t chunks = chunk_count(n, chunk_size);
  const int workers = std::min<int>(num_threads(), static_cast<int>(chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c)
      body(c * chunk_size, std::min(n, (c + 1) * chunk_size), c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::size_t error_chunk = chunks;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(c * chunk_size, std::min(n, (c + 1) * chunk_size), c);
      } catch (...) {
        // Report the failure from the earliest chunk so errors are reproducible.
        std::lock_guard lock(error_mutex);
        if (c < error_chunk) {
          error = std::current_exception();
          error_chunk = c;
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace svecchia
