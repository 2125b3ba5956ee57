#pragma once

#include <array>
#include <string>
#include <string_view>

#include "lanemap/error.hpp"

namespace lanemap {

/// Road-marking classes: lane lines by type, stop lines, everything else.
enum class MarkType { dashed, solid, stop, other };

inline constexpr std::array<MarkType, 4> kMarkTypes{MarkType::dashed, MarkType::solid, MarkType::stop,
                                                    MarkType::other};

inline constexpr std::size_t index_of(MarkType t) { return static_cast<std::size_t>(t); }

inline const char* to_string(MarkType t) {
  switch (t) {
    case MarkType::dashed: return "dashed";
    case MarkType::solid: return "solid";
    case MarkType::stop: return "stop";
    case MarkType::other: return "other";
  }
  return "other";
}

inline MarkType parse_mark_type(std::string_view s) {
  if (s == "dashed") return MarkType::dashed;
  if (s == "solid") return MarkType::solid;
  if (s == "stop") return MarkType::stop;
  if (s == "other") return MarkType::other;
  throw Error(ErrorCode::parse_error, "unknown marking type '" + std::string(s) + "'");
}

}  // namespace lanemap
