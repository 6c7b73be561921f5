#pragma once

namespace tdoa_assoc {

/// Worker count for OpenMP regions: omp_get_max_threads() capped by the
/// TDOA_ASSOC_THREADS environment variable (read once). Returns 1 when
/// built without OpenMP.
int max_threads();

}  // namespace tdoa_assoc
