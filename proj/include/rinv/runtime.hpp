// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace rinv {

/// Keeps freed heap blocks mapped so the per-step network buffers are reused
/// instead of being faulted in again on every allocation. Call once at startup.
void configure_allocator();

}  // namespace rinv
