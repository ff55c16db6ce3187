#pragma once

// Deterministic chunked parallelism. Work is split into a fixed number of
// chunks that does not depend on the thread count; each chunk produces its
// own partial result and partials are merged in chunk order. Output is
// therefore bit-identical for any `threads` value.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace surfconv {

struct ChunkRange {
  std::size_t index;
  std::size_t begin;
  std::size_t end;
};

/// Half-open range [begin, end) of chunk `c` when `n` items are split into `chunks`.
inline ChunkRange chunk_range(std::size_t n, std::size_t chunks, std::size_t c) {
  const std::size_t base = n / chunks, extra = n % chunks;
  const std::size_t begin = c * base + std::min(c, extra);
  return {c, begin, begin + base + (c < extra ? 1 : 0)};
}

/// Evaluates `fn(ChunkRange) -> T` for every chunk on up to `threads` workers
/// and returns the per-chunk results in chunk order.
template <typename Fn>
auto map_chunks(std::size_t n, std::size_t chunks, unsigned threads, Fn&& fn) {
  using T = decltype(fn(ChunkRange{}));
  chunks = std::max<std::size_t>(1, std::min(chunks, std::max<std::size_t>(n, 1)));
  std::vector<T> out(chunks);
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), chunks));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) out[c] = fn(chunk_range(n, chunks, c));
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = next++; c < chunks; c = next++) out[c] = fn(chunk_range(n, chunks, c));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline unsigned hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

}  // namespace surfconv
