#include "tdoa_assoc/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tdoa_assoc {

namespace {

int read_thread_cap() {
#ifdef _OPENMP
  int threads = omp_get_max_threads();
#else
  int threads = 1;
#endif
  if (const char* env = std::getenv("TDOA_ASSOC_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1 && cap < threads) threads = cap;
    } catch (const std::exception&) {
      // ignore unparsable values, keep the OpenMP default
    }
  }
  return threads;
}

}  // namespace

int max_threads() {
  static const int cached = read_thread_cap();
  return cached;
}

}  // namespace tdoa_assoc
