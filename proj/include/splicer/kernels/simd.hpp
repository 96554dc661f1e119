// simd.hpp — runtime selection of the kernel lane (scalar reference vs AVX2).
#pragma once

#include <string>

namespace splicer::kernels {

enum class SimdLevel {
  scalar,  // portable reference lane
  avx2,    // AVX2 + FMA lane (x86-64)
};

// Highest lane this binary can run on the current CPU.
SimdLevel detect_simd();

// Lane used by all kernel entry points. Defaults to detect_simd().
SimdLevel active_simd();

// Override the active lane (tests, --simd flag). Throws ConfigError if the
// requested lane is not available on this CPU/build.
void set_simd(SimdLevel level);

SimdLevel parse_simd(const std::string& name);  // "auto" | "scalar" | "avx2"
std::string simd_name(SimdLevel level);

}  // namespace splicer::kernels
