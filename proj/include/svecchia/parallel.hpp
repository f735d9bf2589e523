#pragma once

#include <cstddef>
#include <functional>

namespace svecchia {

/// Worker count used by block loops. Resolution order: explicit
/// set_num_threads(), then the EMU_THREADS environment variable, then 1.
int num_threads();
void set_num_threads(int threads);

/// Runs body(chunk_begin, chunk_end, chunk_id) over [0, n) split into
/// fixed-size chunks. Chunk boundaries depend only on n and chunk_size, so
/// callers that reduce per-chunk partials in chunk_id order get results that
/// are identical for every thread count.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  return (n + chunk_size - 1) / chunk_size;
}

}  // namespace svecchia
