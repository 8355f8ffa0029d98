#pragma once

#include <array>
#include <string_view>

#include "gait/errors.hpp"

namespace gait {

/// The five crutch gait phases. Codes 1-5 are stable and used in all file
/// formats; names are for humans only.
enum class GaitPhase : int {
    Stance = 1,    // crutch grounded, load bearing
    TakeOff = 2,   // tip leaves the ground
    Swing = 3,     // airborne, moving forward
    Strike = 4,    // tip contacts the ground
    Auxiliary = 5, // non-locomotor activity, gait halted
};

inline constexpr int kNumPhases = 5;

inline constexpr std::array<GaitPhase, kNumPhases> kAllPhases = {
    GaitPhase::Stance, GaitPhase::TakeOff, GaitPhase::Swing,
    GaitPhase::Strike, GaitPhase::Auxiliary};

constexpr int phase_code(GaitPhase p) { return static_cast<int>(p); }

/// Zero-based index for array addressing (Stance -> 0 ... Auxiliary -> 4).
constexpr int phase_index(GaitPhase p) { return static_cast<int>(p) - 1; }

inline GaitPhase phase_from_code(int code) {
    if (code < 1 || code > kNumPhases) throw InvalidPhaseCode(code);
    return static_cast<GaitPhase>(code);
}

constexpr GaitPhase phase_from_index(int idx) {
    return static_cast<GaitPhase>(idx + 1);
}

constexpr std::string_view phase_name(GaitPhase p) {
    switch (p) {
    case GaitPhase::Stance: return "stance";
    case GaitPhase::TakeOff: return "takeoff";
    case GaitPhase::Swing: return "swing";
    case GaitPhase::Strike: return "strike";
    case GaitPhase::Auxiliary: return "auxiliary";
    }
    return "?";
}

} // namespace gait
