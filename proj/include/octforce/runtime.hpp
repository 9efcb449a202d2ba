#pragma once

// Process-level allocator tuning. Training allocates and frees many
// multi-megabyte activation buffers per step; with glibc defaults each one is
// an mmap/munmap pair plus page faults, which dominates small-network runtime.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace octforce {

/// Keeps large blocks on the heap and stops trimming it back to the OS.
/// Idempotent; a no-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace octforce
