#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "stance/error.hpp"

namespace stance {

// Canonical order is part of the serialized format and of every tie-break rule.
enum class StanceLabel : int { Support = 0, Deny = 1, Query = 2, Comment = 3 };

inline constexpr std::size_t kNumLabels = 4;

inline constexpr std::array<StanceLabel, kNumLabels> kAllLabels = {
    StanceLabel::Support, StanceLabel::Deny, StanceLabel::Query, StanceLabel::Comment};

inline constexpr std::size_t index_of(StanceLabel label) { return static_cast<std::size_t>(label); }

inline constexpr StanceLabel label_at(std::size_t index) { return static_cast<StanceLabel>(index); }

inline constexpr std::string_view to_string(StanceLabel label) {
  switch (label) {
    case StanceLabel::Support: return "support";
    case StanceLabel::Deny: return "deny";
    case StanceLabel::Query: return "query";
    case StanceLabel::Comment: return "comment";
  }
  return "comment";
}

inline std::optional<StanceLabel> try_parse_label(std::string_view text) {
  for (auto label : kAllLabels) {
    if (text == to_string(label)) return label;
  }
  return std::nullopt;
}

inline StanceLabel parse_label(std::string_view text) {
  if (auto label = try_parse_label(text)) return *label;
  throw Error(ErrorCode::MalformedInput, "unknown stance label '" + std::string(text) + "'");
}

}  // namespace stance
