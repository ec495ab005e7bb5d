#include "mmpoe/parallel.hpp"

namespace mmpoe {

std::string_view to_string(Exec exec) {
  return exec == Exec::kSerial ? "serial" : "parallel";
}

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int threads) {
  if (threads >= 1) omp_set_num_threads(threads);
}

}  // namespace mmpoe
