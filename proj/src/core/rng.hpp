#pragma once

#include <cstdint>

namespace groupreg {

// SplitMix64 (Steele, Lea, Vigna). Chosen as the project-wide generator
// because the update is pure 64-bit integer arithmetic and therefore
// reproduces bit-identically on any platform. Test vectors from the
// reference implementation are pinned in the unit tests:
//   seed 0          -> 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F
//   seed 0x12345678 -> 0x38F1DC39D1906B6F, 0xDFE4142236DD9517
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64()
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_uniform()
    {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Approximately standard normal: sum of 12 uniforms minus 6
    // (Irwin-Hall). Uses only additions, so it stays exactly
    // reproducible under IEEE-754; adequate for synthesizing smooth
    // random fields and phantom noise.
    double next_gaussian()
    {
        double s = 0.0;
        for (int i = 0; i < 12; ++i)
            s += next_uniform();
        return s - 6.0;
    }

    // Derives an independent stream deterministically, for per-member or
    // per-purpose substreams.
    SplitMix64 fork(std::uint64_t tag)
    {
        return SplitMix64(next_u64() ^ (0x9E3779B97F4A7C15ULL * (tag + 1)));
    }

private:
    std::uint64_t state_;
};

} // namespace groupreg
