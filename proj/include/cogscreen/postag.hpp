#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cogscreen/tokenizer.hpp"

namespace cogscreen::lingfeat {

enum class PosTag { NOUN, VERB, ADJ, ADV, PRON, DET, ADP, CONJ, NUM, PART, INTJ, PUNCT, X };

inline constexpr std::size_t kPosTagCount = 13;
inline constexpr std::array<PosTag, kPosTagCount> kAllPosTags{
    PosTag::NOUN, PosTag::VERB, PosTag::ADJ, PosTag::ADV,  PosTag::PRON, PosTag::DET, PosTag::ADP,
    PosTag::CONJ, PosTag::NUM,  PosTag::PART, PosTag::INTJ, PosTag::PUNCT, PosTag::X};

std::string_view to_string(PosTag tag);
std::optional<PosTag> parse_pos_tag(std::string_view name);

using PosTags = std::vector<PosTag>;

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  // One tag per token; PUNCT for every non-word token.
  virtual PosTags tag(const TokenStream& tokens) const = 0;
  virtual std::string model_id() const = 0;
};

// Lexicon lookup, then suffix rules, then left-to-right contextual rewrites
// applied to ambiguous and unknown words. Loaded from a versioned JSON model
// ("format": "cogscreen-postagger").
class RuleTagger final : public PosTagger {
 public:
  struct ContextRule {
    std::optional<PosTag> prev;
    std::optional<std::string> prev_word;
    std::optional<PosTag> next;
    std::optional<std::string> suffix;
    PosTag from;
    PosTag to;
  };

  static RuleTagger load(const std::filesystem::path& path);
  static RuleTagger from_json_text(std::string_view text);

  PosTags tag(const TokenStream& tokens) const override;
  std::string model_id() const override { return model_id_; }

 private:
  std::map<std::string, std::vector<PosTag>, std::less<>> lexicon_;
  std::vector<std::pair<std::string, PosTag>> suffix_rules_;
  std::vector<ContextRule> context_rules_;
  PosTag default_tag_ = PosTag::NOUN;
  std::string model_id_;
};

}  // namespace cogscreen::lingfeat
