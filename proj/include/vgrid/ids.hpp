#ifndef VGRID_IDS_HPP
#define VGRID_IDS_HPP

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace vgrid {

// Opaque 64-bit identifier with a phantom tag so node ids, token ids and
// mission ids cannot be mixed up. Total order is part of the contract:
// deterministic tie-breaking keys on it.
template <class Tag>
struct Id {
    std::uint64_t value{0};

    constexpr Id() = default;
    constexpr explicit Id(std::uint64_t v) : value(v) {}

    friend constexpr auto operator<=>(Id, Id) = default;
};

using NodeId = Id<struct NodeIdTag>;
using TokenId = Id<struct TokenIdTag>;
using MissionId = Id<struct MissionIdTag>;
using JobId = Id<struct JobIdTag>;
using TaskId = Id<struct TaskIdTag>;

using PolicyId = std::string;

// Simulation time in integer ticks.
using SimTime = std::int64_t;

template <class Tag>
inline std::string to_string(Id<Tag> id) {
    return std::to_string(id.value);
}

}  // namespace vgrid

template <class Tag>
struct std::hash<vgrid::Id<Tag>> {
    std::size_t operator()(vgrid::Id<Tag> id) const noexcept {
        return std::hash<std::uint64_t>{}(id.value);
    }
};

#endif
