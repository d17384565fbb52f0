#include "revlab/rng.hpp"

#include <cmath>

namespace revlab {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
    uint64_t x = seed ^ (0xda3e39cb94b95bdbULL * (stream_id + 1));
    s_[0] = splitmix64(x);
    s_[1] = splitmix64(x);
    s_[2] = splitmix64(x);
    s_[3] = splitmix64(x);
}

uint64_t RngStream::next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int RngStream::uniform_int(int n) {
    require(n > 0, "domain-error", "uniform_int: n must be positive");
    // 64-bit multiply-shift; bias is negligible for the small n used here.
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
}

double RngStream::normal() {
    // Box-Muller, cosine branch; the sine mate is discarded so every call
    // consumes exactly two uniforms.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vec RngStream::gauss(int n, double sigma) {
    require(sigma > 0.0, "domain-error", "gauss: sigma must be positive");
    Vec out(static_cast<size_t>(n));
    int i = 0;
    while (i < n) {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        out[i++] = sigma * r * std::cos(2.0 * M_PI * u2);
        if (i < n) {
            out[i++] = sigma * r * std::sin(2.0 * M_PI * u2);
        }
    }
    return out;
}

}  // namespace revlab
