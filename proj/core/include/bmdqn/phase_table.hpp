#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bmdqn {

/// The eight turning movements at a four-way intersection. Through and left
/// turns only; right turns are assumed unsignalized. The enum order fixes the
/// movement indexing used by queue vectors and network inputs.
enum class Movement : int { NT = 0, ST, ET, WT, NL, SL, EL, WL };

/// The eight standard signal phases. Each phase serves exactly two
/// non-conflicting movements.
enum class Phase : int { A = 0, B, C, D, E, F, G, H };

inline constexpr int kNumMovements = 8;
inline constexpr int kNumPhases = 8;

/// Movements served by each phase:
///   A: WT+ET   B: NT+ST   C: WL+EL   D: NL+SL
///   E: WT+WL   F: ET+EL   G: NT+NL   H: ST+SL
constexpr std::array<Movement, 2> movements_of(Phase p) {
    constexpr std::array<std::array<Movement, 2>, kNumPhases> table = {{
        {Movement::WT, Movement::ET},
        {Movement::NT, Movement::ST},
        {Movement::WL, Movement::EL},
        {Movement::NL, Movement::SL},
        {Movement::WT, Movement::WL},
        {Movement::ET, Movement::EL},
        {Movement::NT, Movement::NL},
        {Movement::ST, Movement::SL},
    }};
    return table[static_cast<int>(p)];
}

constexpr std::string_view movement_name(Movement m) {
    constexpr std::array<std::string_view, kNumMovements> names = {
        "NT", "ST", "ET", "WT", "NL", "SL", "EL", "WL"};
    return names[static_cast<int>(m)];
}

constexpr char phase_name(Phase p) {
    return static_cast<char>('A' + static_cast<int>(p));
}

inline Phase parse_phase(std::string_view name) {
    if (name.size() == 1 && name[0] >= 'A' && name[0] <= 'H')
        return static_cast<Phase>(name[0] - 'A');
    throw std::invalid_argument("unknown phase name: " + std::string(name));
}

} // namespace bmdqn
