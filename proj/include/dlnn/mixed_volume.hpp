#pragma once

#include <cstdint>
#include <vector>

#include <gmpxx.h>

namespace dlnn {

struct MixedVolumeOptions {
    std::uint64_t lifting_seed = 0x6d766f6c;
    int max_retries = 5;
    // Mixed-cell enumeration cost grows quickly with the dimension; refuse
    // above the cap unless the caller insists.
    std::size_t dimension_cap = 12;
    bool ignore_cap = false;
};

// Normalized mixed volume (n! times the euclidean one) of n integer point
// configurations in Z^n, computed by mixed-cell enumeration under a random
// integer lifting. Cell certificates are verified in exact integer
// arithmetic; a tie in the lifting triggers a retry with a fresh one.
// For polynomial systems this equals the BKK bound on toric solutions.
mpz_class mixed_volume(const std::vector<std::vector<std::vector<int>>>& supports,
                       const MixedVolumeOptions& opts = {});

} // namespace dlnn
