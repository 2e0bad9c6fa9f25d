#include "hcbm/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hcbm {

void tune_allocator() {
#if defined(__GLIBC__)
  // mallopt caps M_MMAP_THRESHOLD at 32 MiB, below our largest activations,
  // so mmap-backed allocation is switched off altogether.
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace hcbm
