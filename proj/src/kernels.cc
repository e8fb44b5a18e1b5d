#include <cstdlib>
#include <string_view>

#include "statefuzz/kernels.h"

namespace statefuzz::kernels {

const KernelTable& Active() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* forced = std::getenv("STATEFUZZ_KERNELS");
    if (forced != nullptr && std::string_view(forced) == "scalar") return Scalar();
    if (const KernelTable* avx2 = Avx2()) return *avx2;
    return Scalar();
  }();
  return table;
}

}  // namespace statefuzz::kernels
