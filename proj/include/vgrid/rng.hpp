#ifndef VGRID_RNG_HPP
#define VGRID_RNG_HPP

#include <cmath>
#include <cstdint>

namespace vgrid {

// SplitMix64. Small, fast, and the output sequence is pinned by our own
// stability tests, so golden traces never depend on a library's
// distribution internals.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n). n must be nonzero.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    bool next_bool() { return (next_u64() >> 63) != 0; }

    // Uniform in (0, 1].
    double next_unit() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Exponential holding time rounded to integer ticks, clamped to >= 1.
    std::int64_t next_exponential(std::int64_t mean) {
        double draw = -std::log(next_unit()) * static_cast<double>(mean);
        auto ticks = static_cast<std::int64_t>(std::llround(draw));
        return ticks < 1 ? 1 : ticks;
    }

  private:
    std::uint64_t state_;
};

// Purpose constants for namespaced streams: adding a consumer never
// perturbs existing streams.
namespace rng_purpose {
inline constexpr std::uint64_t kChurn = 0x636875726e000001ull;
inline constexpr std::uint64_t kBranch = 0x6272616e63680001ull;
inline constexpr std::uint64_t kCompromise = 0x636f6d70726f0001ull;
inline constexpr std::uint64_t kCoordinatorKey = 0x636f6f72646b0001ull;
}  // namespace rng_purpose

// Derives an independent stream for (seed, purpose, salt).
inline Rng substream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t salt = 0) {
    Rng mixer(seed ^ purpose);
    std::uint64_t base = mixer.next_u64();
    Rng salter(base + salt * 0x9e3779b97f4a7c15ull);
    return Rng(salter.next_u64());
}

}  // namespace vgrid

#endif
