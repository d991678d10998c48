#include <catch2/catch_amalgamated.hpp>

#include <vgrid/bytes.hpp>
#include <vgrid/caps.hpp>
#include <vgrid/ids.hpp>
#include <vgrid/rng.hpp>
#include <vgrid/tag.hpp>

using namespace vgrid;

TEST_CASE("byte writer layout is big-endian with length-prefixed strings", "[core]") {
    ByteWriter w;
    w.u8(0xab);
    w.u32(0x01020304u);
    w.u64(0x1122334455667788ull);
    w.str("hi");
    Bytes b = w.take();
    Bytes expect{0xab, 0x01, 0x02, 0x03, 0x04, 0x11, 0x22, 0x33,
                 0x44, 0x55, 0x66, 0x77, 0x88, 0x00, 0x00, 0x00,
                 0x02, 'h',  'i'};
    REQUIRE(b == expect);

    ByteReader r(b);
    REQUIRE(r.u8() == 0xab);
    REQUIRE(r.u32() == 0x01020304u);
    REQUIRE(r.u64() == 0x1122334455667788ull);
    REQUIRE(r.str() == "hi");
    REQUIRE(r.exhausted());
}

TEST_CASE("byte reader rejects truncated input", "[core]") {
    Bytes b{0x00, 0x01};
    ByteReader r(b);
    REQUIRE_NOTHROW(r.u8());
    REQUIRE_THROWS_AS(r.u32(), ByteError);
}

TEST_CASE("rng produces the canonical splitmix64 sequence", "[core]") {
    Rng r(0);
    REQUIRE(r.next_u64() == 0xe220a8397b1dcdafull);
    REQUIRE(r.next_u64() == 0x6e789e6aa1b965f4ull);
    REQUIRE(r.next_u64() == 0x06c45d188009454full);
    REQUIRE(r.next_u64() == 0xf88bb8a8724c81ecull);
}

TEST_CASE("rng helpers stay in range and are deterministic", "[core]") {
    Rng a(1234);
    Rng b(1234);
    for (int i = 0; i < 200; ++i) {
        REQUIRE(a.next_below(7) == b.next_below(7));
    }
    Rng c(7);
    for (int i = 0; i < 200; ++i) {
        REQUIRE(c.next_below(13) < 13);
        double u = c.next_unit();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
        REQUIRE(c.next_exponential(30) >= 1);
    }
}

TEST_CASE("substreams are reproducible and distinct per purpose and salt", "[core]") {
    Rng a = substream(99, rng_purpose::kChurn, 1);
    Rng b = substream(99, rng_purpose::kChurn, 1);
    REQUIRE(a.next_u64() == b.next_u64());

    std::uint64_t churn = substream(99, rng_purpose::kChurn, 1).next_u64();
    std::uint64_t branch = substream(99, rng_purpose::kBranch, 1).next_u64();
    std::uint64_t other_salt = substream(99, rng_purpose::kChurn, 2).next_u64();
    std::uint64_t other_seed = substream(98, rng_purpose::kChurn, 1).next_u64();
    REQUIRE(churn != branch);
    REQUIRE(churn != other_salt);
    REQUIRE(churn != other_seed);
}

namespace {

// Plain reference SipHash-2-4 with 128-bit output, written directly from
// the published algorithm so it shares no code with the library.
struct RefSip {
    std::uint64_t v0, v1, v2, v3;

    static std::uint64_t rotl(std::uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

    void round() {
        v0 += v1;
        v1 = rotl(v1, 13);
        v1 ^= v0;
        v0 = rotl(v0, 32);
        v2 += v3;
        v3 = rotl(v3, 16);
        v3 ^= v2;
        v2 += v1;
        v1 = rotl(v1, 17);
        v1 ^= v2;
        v2 = rotl(v2, 32);
        v0 += v3;
        v3 = rotl(v3, 21);
        v3 ^= v0;
    }
};

std::array<std::uint8_t, 16> ref_siphash128(std::uint64_t k0, std::uint64_t k1,
                                            const std::vector<std::uint8_t>& data) {
    RefSip s{0x736f6d6570736575ull ^ k0, 0x646f72616e646f6dull ^ k1,
             0x6c7967656e657261ull ^ k0, 0x7465646279746573ull ^ k1};
    s.v1 ^= 0xee;
    std::size_t i = 0;
    while (data.size() - i >= 8) {
        std::uint64_t m = 0;
        for (int j = 0; j < 8; ++j) m |= static_cast<std::uint64_t>(data[i + j]) << (8 * j);
        s.v3 ^= m;
        s.round();
        s.round();
        s.v0 ^= m;
        i += 8;
    }
    std::uint64_t b = static_cast<std::uint64_t>(data.size() & 0xff) << 56;
    for (std::size_t j = i; j < data.size(); ++j)
        b |= static_cast<std::uint64_t>(data[j]) << (8 * (j - i));
    s.v3 ^= b;
    s.round();
    s.round();
    s.v0 ^= b;
    s.v2 ^= 0xee;
    for (int r = 0; r < 4; ++r) s.round();
    std::uint64_t lo = s.v0 ^ s.v1 ^ s.v2 ^ s.v3;
    s.v1 ^= 0xdd;
    for (int r = 0; r < 4; ++r) s.round();
    std::uint64_t hi = s.v0 ^ s.v1 ^ s.v2 ^ s.v3;
    std::array<std::uint8_t, 16> out{};
    for (int j = 0; j < 8; ++j) out[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(lo >> (8 * j));
    for (int j = 0; j < 8; ++j) out[static_cast<std::size_t>(8 + j)] = static_cast<std::uint8_t>(hi >> (8 * j));
    return out;
}

std::string hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (std::uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

}  // namespace

TEST_CASE("keyed tag matches the published siphash-2-4-128 vectors", "[core]") {
    // Key 000102...0f, message 00 01 02 ... (n-1), from the reference
    // implementation's vectors_128 table.
    TagKey key{0x0706050403020100ull, 0x0f0e0d0c0b0a0908ull};
    auto tag_hex = [&](int n) {
        std::vector<std::uint8_t> msg;
        for (int i = 0; i < n; ++i) msg.push_back(static_cast<std::uint8_t>(i));
        return hex(keyed_tag(key, std::span<const std::uint8_t>(msg.data(), msg.size())).bytes);
    };
    REQUIRE(tag_hex(0) == "a3817f04ba25a8e66df67214c7550293");
    REQUIRE(tag_hex(1) == "da87c1d86b99af44347659119b22fc45");
    REQUIRE(tag_hex(2) == "8177228da4a45dc7fca38bdef60affe4");
    REQUIRE(tag_hex(7) == "a1f1ebbed8dbc153c0b84aa61ff08239");
    REQUIRE(tag_hex(8) == "3b62a9ba6258f5610f83e264f31497b4");
    REQUIRE(tag_hex(15) == "5493e99933b0a8117e08ec0f97cfc3d9");
}

TEST_CASE("keyed tag agrees with an independent implementation", "[core]") {
    Rng rng(20260819);
    for (int trial = 0; trial < 300; ++trial) {
        TagKey key{rng.next_u64(), rng.next_u64()};
        std::vector<std::uint8_t> msg(rng.next_below(70));
        for (auto& b : msg) b = static_cast<std::uint8_t>(rng.next_below(256));
        Tag16 got = keyed_tag(key, std::span<const std::uint8_t>(msg.data(), msg.size()));
        auto want = ref_siphash128(key.k0, key.k1, msg);
        REQUIRE(hex(got.bytes) == hex(want));
    }
}

TEST_CASE("tag equality is byte equality and keys matter", "[core]") {
    std::vector<std::uint8_t> msg{1, 2, 3};
    auto span = std::span<const std::uint8_t>(msg.data(), msg.size());
    Tag16 a = keyed_tag(TagKey{1, 2}, span);
    Tag16 b = keyed_tag(TagKey{1, 2}, span);
    Tag16 c = keyed_tag(TagKey{1, 3}, span);
    REQUIRE(a == b);
    REQUIRE_FALSE(a == c);
}

TEST_CASE("key derivation from a seed is stable", "[core]") {
    TagKey a = TagKey::from_seed(42);
    TagKey b = TagKey::from_seed(42);
    REQUIRE(a.k0 == b.k0);
    REQUIRE(a.k1 == b.k1);
    REQUIRE(a.k0 == 0x7a548ae9a0b3bd9dull);
    REQUIRE(a.k1 == 0x2a4cab7908fb2634ull);
    TagKey other = TagKey::from_seed(43);
    REQUIRE((other.k0 != a.k0 || other.k1 != a.k1));
}

TEST_CASE("digest64 is the low half of the fixed-key tag", "[core]") {
    std::vector<std::uint8_t> msg{'h', 'e', 'l', 'l', 'o', ' ', 'w', 'o', 'r', 'l', 'd'};
    REQUIRE(digest64(std::span<const std::uint8_t>(msg.data(), msg.size())) ==
            0x4a133afd9cb10543ull);
}

TEST_CASE("capability sets behave as ordered bitmasks", "[core]") {
    CapSet s;
    REQUIRE(s.raw() == 0);
    REQUIRE(cap_set_names(s) == "-");
    s.insert(Capability::SendMessage);
    s.insert(Capability::Compute);
    REQUIRE(s.contains(Capability::Compute));
    REQUIRE_FALSE(s.contains(Capability::ReadHostData));
    REQUIRE(s.sorted() == std::vector<Capability>{Capability::Compute, Capability::SendMessage});
    REQUIRE(cap_set_names(s) == "compute,send_message");

    CapSet all = CapSet::all();
    REQUIRE(s.subset_of(all));
    REQUIRE_FALSE(all.subset_of(s));
    REQUIRE(cap_set_names(all) ==
            "compute,read_host_data,send_message,spawn_delegate,write_host_data");

    CapSet t;
    t.insert(Capability::Compute);
    t.insert(Capability::WriteHostData);
    CapSet inter = s.intersect(t);
    REQUIRE(inter.sorted() == std::vector<Capability>{Capability::Compute});
    CapSet uni = s.unite(t);
    REQUIRE(uni.sorted() == std::vector<Capability>{Capability::WriteHostData,
                                                    Capability::Compute,
                                                    Capability::SendMessage});
    REQUIRE(CapSet::from_raw(uni.raw()).sorted() == uni.sorted());
}

TEST_CASE("typed ids compare and print by value", "[core]") {
    NodeId a{7};
    NodeId b{7};
    NodeId c{8};
    REQUIRE(a == b);
    REQUIRE(a < c);
    REQUIRE(to_string(a) == "7");
}
