#include "fqln/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "fqln/error.hpp"

namespace fqln {

int set_thread_count(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("FQLN_THREADS")) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("FQLN_THREADS is not an integer: ") + env);
      }
      if (n <= 0) throw UsageError("FQLN_THREADS must be positive");
    }
  }
  if (n > 0) omp_set_num_threads(n);
  return current_thread_count();
}

int current_thread_count() { return omp_get_max_threads(); }

}  // namespace fqln
