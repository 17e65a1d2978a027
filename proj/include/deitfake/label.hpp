#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace deitfake {

// Class ids used by the classifier head. Fake is the positive class for all
// detection metrics.
enum class Label : std::uint8_t { Fake = 0, Real = 1 };

inline constexpr std::size_t kNumLabels = 2;

inline std::size_t label_index(Label l) noexcept { return static_cast<std::size_t>(l); }
inline std::string_view label_name(Label l) noexcept { return l == Label::Fake ? "fake" : "real"; }
// Accepts "fake" / "real" in any letter case.
std::optional<Label> parse_label(std::string_view text);

}  // namespace deitfake
