#pragma once

#include <cstddef>
#include <memory>

namespace ciqn::detail {

// Per-thread accounting of interface-vector storage, in doubles. Each
// simulated rank runs on its own thread, so these are per-rank figures.
struct StorageMeter {
  std::size_t live = 0;
  std::size_t peak = 0;
};

inline StorageMeter& storage_meter() {
  thread_local StorageMeter meter;
  return meter;
}

template <class T>
struct MeteredAllocator {
  using value_type = T;

  MeteredAllocator() = default;
  template <class U>
  MeteredAllocator(const MeteredAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto& m = storage_meter();
    m.live += n;
    if (m.live > m.peak) m.peak = m.live;
    return std::allocator<T>{}.allocate(n);
  }

  void deallocate(T* p, std::size_t n) noexcept {
    // Storage may be released on a different thread than it was allocated on
    // (results handed back from rank threads); clamp instead of wrapping.
    auto& m = storage_meter();
    m.live = m.live > n ? m.live - n : 0;
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  friend bool operator==(const MeteredAllocator&, const MeteredAllocator<U>&) noexcept {
    return true;
  }
};

}  // namespace ciqn::detail

namespace ciqn {

/// Resets the calling thread's peak to its current live interface storage.
inline void reset_storage_peak() {
  auto& m = detail::storage_meter();
  m.peak = m.live;
}

/// Peak number of doubles held by interface vectors on the calling thread.
inline std::size_t storage_peak() { return detail::storage_meter().peak; }

inline std::size_t storage_live() { return detail::storage_meter().live; }

}  // namespace ciqn
