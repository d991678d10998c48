#ifndef VGRID_CAPS_HPP
#define VGRID_CAPS_HPP

#include <algorithm>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace vgrid {

// Closed set of grid functionality a token can carry. Delegation may only
// ever shrink this set.
enum class Capability : std::uint8_t {
    ReadHostData = 0,
    WriteHostData = 1,
    Compute = 2,
    SendMessage = 3,
    SpawnDelegate = 4,
};

inline constexpr int kCapabilityCount = 5;

inline const char* capability_name(Capability c) {
    switch (c) {
        case Capability::ReadHostData: return "read_host_data";
        case Capability::WriteHostData: return "write_host_data";
        case Capability::Compute: return "compute";
        case Capability::SendMessage: return "send_message";
        case Capability::SpawnDelegate: return "spawn_delegate";
    }
    return "?";
}

inline std::optional<Capability> capability_from_name(const std::string& s) {
    for (int i = 0; i < kCapabilityCount; ++i) {
        auto c = static_cast<Capability>(i);
        if (s == capability_name(c)) return c;
    }
    return std::nullopt;
}

class CapSet {
  public:
    constexpr CapSet() = default;
    constexpr CapSet(std::initializer_list<Capability> caps) {
        for (auto c : caps) insert(c);
    }

    static constexpr CapSet all() {
        CapSet s;
        s.bits_ = (1u << kCapabilityCount) - 1;
        return s;
    }

    constexpr void insert(Capability c) { bits_ |= bit(c); }
    constexpr bool contains(Capability c) const { return (bits_ & bit(c)) != 0; }
    constexpr bool subset_of(CapSet other) const { return (bits_ & ~other.bits_) == 0; }
    constexpr CapSet intersect(CapSet other) const {
        CapSet s;
        s.bits_ = bits_ & other.bits_;
        return s;
    }
    constexpr CapSet unite(CapSet other) const {
        CapSet s;
        s.bits_ = bits_ | other.bits_;
        return s;
    }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t raw() const { return bits_; }

    static constexpr CapSet from_raw(std::uint8_t bits) {
        CapSet s;
        s.bits_ = bits & ((1u << kCapabilityCount) - 1);
        return s;
    }

    std::vector<Capability> sorted() const {
        std::vector<Capability> v;
        for (int i = 0; i < kCapabilityCount; ++i)
            if (bits_ & (1u << i)) v.push_back(static_cast<Capability>(i));
        return v;
    }

    friend constexpr auto operator<=>(CapSet, CapSet) = default;

  private:
    static constexpr std::uint8_t bit(Capability c) {
        return static_cast<std::uint8_t>(1u << static_cast<std::uint8_t>(c));
    }

    std::uint8_t bits_{0};
};

// Comma-joined names in alphabetical order; "-" for the empty set. Used in
// trace files, so the rendering must stay byte-stable.
inline std::string cap_set_names(CapSet caps) {
    std::vector<std::string> names;
    for (auto c : caps.sorted()) names.push_back(capability_name(c));
    std::sort(names.begin(), names.end());
    if (names.empty()) return "-";
    std::string out = names.front();
    for (std::size_t i = 1; i < names.size(); ++i) {
        out += ',';
        out += names[i];
    }
    return out;
}

}  // namespace vgrid

#endif
