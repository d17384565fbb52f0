#pragma once

#include <cstdint>

#include "revlab/numerics.hpp"

namespace revlab {

// Counter-seeded xoshiro256++. A (seed, stream_id) pair fully determines the
// draw sequence; parallel work partitions by stream_id and never shares a
// stream across threads.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream_id = 0);

    uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double uniform();

    // Uniform integer in [0, n).
    int uniform_int(int n);

    // Box-Muller. Each call consumes exactly two uniforms.
    double normal();

    // n i.i.d. N(0, sigma^2) draws, pairwise Box-Muller.
    Vec gauss(int n, double sigma);

    uint64_t seed() const { return seed_; }
    uint64_t stream_id() const { return stream_id_; }

private:
    uint64_t s_[4];
    uint64_t seed_ = 0;
    uint64_t stream_id_ = 0;
};

}  // namespace revlab
