#include "cogscreen/types.hpp"

#include "cogscreen/util.hpp"

namespace cogscreen {

std::string_view to_string(Label label) {
  return label == Label::Case ? "case" : "control";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Label> parse_label_name(std::string_view text) {
  const auto lower = to_lower(trim(text));
  if (lower == "case") return Label::Case;
  if (lower == "control") return Label::Control;
  return std::nullopt;
}

std::optional<Split> parse_split_name(std::string_view text) {
  const auto lower = to_lower(trim(text));
  if (lower == "train") return Split::Train;
  if (lower == "validation") return Split::Validation;
  if (lower == "test") return Split::Test;
  return std::nullopt;
}

}  // namespace cogscreen
