#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace cogscreen {

// Case = cognitively impaired, Control = cognitively healthy. Case is the
// positive class everywhere and occupies logit index 0.
enum class Label { Case, Control };

enum class Split { Train, Validation, Test };

inline constexpr int label_index(Label label) { return label == Label::Case ? 0 : 1; }

std::string_view to_string(Label label);
std::string_view to_string(Split split);
std::optional<Label> parse_label_name(std::string_view text);
std::optional<Split> parse_split_name(std::string_view text);

}  // namespace cogscreen
