#pragma once

namespace hcbm {

/// Keeps freed tensor buffers inside the heap instead of returning them to
/// the OS. Large activations are otherwise mmapped and page-faulted afresh on
/// every batch, which roughly doubles training time. Call once at startup.
void tune_allocator();

}  // namespace hcbm
