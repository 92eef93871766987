#pragma once

namespace fqln {

// Resolves the worker thread count: explicit argument > FQLN_THREADS env
// > OpenMP default. Returns the count actually applied.
// Results never depend on this value; only wall time does.
int set_thread_count(int requested = 0);

int current_thread_count();

}  // namespace fqln
