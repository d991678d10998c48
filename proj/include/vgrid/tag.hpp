#ifndef VGRID_TAG_HPP
#define VGRID_TAG_HPP

#include <array>
#include <compare>
#include <cstdint>
#include <span>

#include "vgrid/bytes.hpp"
#include "vgrid/rng.hpp"

namespace vgrid {

// 16-byte authentication tag. Produced by a SipHash-2-4 style keyed hash
// with 128-bit output under the single coordinator key. This is the
// simulated stand-in for real certificate signatures: it gives stable,
// bit-exact tags and single-byte tamper detection without a crypto
// dependency.
struct Tag16 {
    std::array<std::uint8_t, 16> bytes{};

    friend constexpr auto operator<=>(const Tag16&, const Tag16&) = default;
};

struct TagKey {
    std::uint64_t k0{0};
    std::uint64_t k1{0};

    static TagKey from_seed(std::uint64_t seed) {
        Rng r = substream(seed, rng_purpose::kCoordinatorKey);
        return TagKey{r.next_u64(), r.next_u64()};
    }
};

namespace detail {

inline std::uint64_t rotl64(std::uint64_t x, int b) {
    return (x << b) | (x >> (64 - b));
}

struct SipState {
    std::uint64_t v0, v1, v2, v3;

    void round() {
        v0 += v1;
        v1 = rotl64(v1, 13);
        v1 ^= v0;
        v0 = rotl64(v0, 32);
        v2 += v3;
        v3 = rotl64(v3, 16);
        v3 ^= v2;
        v0 += v3;
        v3 = rotl64(v3, 21);
        v3 ^= v0;
        v2 += v1;
        v1 = rotl64(v1, 17);
        v1 ^= v2;
        v2 = rotl64(v2, 32);
    }
};

}  // namespace detail

inline Tag16 keyed_tag(const TagKey& key, std::span<const std::uint8_t> msg) {
    detail::SipState s{
        0x736f6d6570736575ull ^ key.k0,
        0x646f72616e646f6dull ^ key.k1,
        0x6c7967656e657261ull ^ key.k0,
        0x7465646279746573ull ^ key.k1,
    };
    s.v1 ^= 0xee;  // 128-bit output domain

    const std::size_t blocks = msg.size() / 8;
    for (std::size_t i = 0; i < blocks; ++i) {
        std::uint64_t m = 0;
        for (int j = 7; j >= 0; --j) m = (m << 8) | msg[i * 8 + j];
        s.v3 ^= m;
        s.round();
        s.round();
        s.v0 ^= m;
    }

    std::uint64_t last = static_cast<std::uint64_t>(msg.size() & 0xff) << 56;
    for (std::size_t i = blocks * 8; i < msg.size(); ++i)
        last |= static_cast<std::uint64_t>(msg[i]) << (8 * (i - blocks * 8));
    s.v3 ^= last;
    s.round();
    s.round();
    s.v0 ^= last;

    s.v2 ^= 0xee;
    for (int i = 0; i < 4; ++i) s.round();
    std::uint64_t b0 = s.v0 ^ s.v1 ^ s.v2 ^ s.v3;

    s.v1 ^= 0xdd;
    for (int i = 0; i < 4; ++i) s.round();
    std::uint64_t b1 = s.v0 ^ s.v1 ^ s.v2 ^ s.v3;

    Tag16 tag;
    for (int i = 0; i < 8; ++i) tag.bytes[i] = static_cast<std::uint8_t>(b0 >> (8 * i));
    for (int i = 0; i < 8; ++i) tag.bytes[8 + i] = static_cast<std::uint8_t>(b1 >> (8 * i));
    return tag;
}

inline Tag16 keyed_tag(const TagKey& key, const Bytes& msg) {
    return keyed_tag(key, std::span<const std::uint8_t>(msg.data(), msg.size()));
}

// 64-bit convenience digest with a fixed key; used for result digests in
// traces, where the value must not change when the scenario seed does.
inline std::uint64_t digest64(std::span<const std::uint8_t> msg) {
    static constexpr TagKey kDigestKey{0x7667726964646967ull, 0x6573743634000001ull};
    Tag16 t = keyed_tag(kDigestKey, msg);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | t.bytes[i];
    return v;
}

}  // namespace vgrid

#endif
