#pragma once

#include <cmath>
#include <cstdint>

namespace metainv {

/// Deterministic stream keyed by (seed, index). Each sinogram bin / sample
/// gets its own stream so parallel simulation stays reproducible. The index
/// is hashed through the full mixer before seeding: consecutive indices must
/// not land on nearby points of the underlying Weyl orbit, or neighboring
/// bins would see shifted copies of the same sequence.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t h = seed ^ (0xD1342543DE82EF95ull * (index + 1));
        h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
        h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
        state_ = h ^ (h >> 31);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe under log().
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Poisson sample. Exact product method below mean 60, split into
    /// exact partial sums up to 1000, normal approximation above.
    double poisson(double mean);

  private:
    std::uint64_t state_;
};

} // namespace metainv
