#include "windgen/sequence.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

#include "windgen/error.hpp"

namespace windgen {

std::vector<double> SequenceLayout::mask() const {
  std::vector<double> m(length, 0.0);
  std::fill_n(m.begin(), std::min(valid_length, length), 1.0);
  return m;
}

void SequenceLayout::replicate_pad(nn::Tensor& x) const {
  const std::size_t rows = x.size() / length;
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = x.data() + r * length;
    std::fill(p + valid_length, p + length, p[valid_length - 1]);
  }
}

void SequenceLayout::validate() const {
  if (channels == 0 || valid_length == 0 || valid_length > length)
    throw InputError("sequence layout needs 0 < valid_length <= length and channels > 0");
}

void parallel_chunks(std::size_t n, std::size_t chunk, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(chunks, 1));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t c;
      {
        std::lock_guard lock(mu);
        if (next >= chunks || failure) return;
        c = next++;
      }
      try {
        fn(c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

void fill_normal_row(nn::Tensor& x, std::size_t row, const SequenceLayout& layout, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double* base = x.data() + row * layout.row_size();
  for (std::size_t c = 0; c < layout.channels; ++c) {
    double* p = base + c * layout.length;
    for (std::size_t l = 0; l < layout.valid_length; ++l) p[l] = normal(rng);
    std::fill(p + layout.valid_length, p + layout.length, p[layout.valid_length - 1]);
  }
}

}  // namespace windgen
