#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cogscreen/tokenizer.hpp"

namespace cogscreen::lingfeat {

inline constexpr std::size_t kCategoryCount = 11;
inline constexpr std::array<std::string_view, kCategoryCount> kCategoryNames{
    "affective", "social",   "cognition", "perception", "biological", "drives",
    "temporal",  "relativity", "informal", "function",  "personal_concerns"};

// Eleven word/stem sets. Entries ending in '*' are prefix stems.
class CategoryLexicon {
 public:
  struct Category {
    std::set<std::string, std::less<>> words;
    std::vector<std::string> stems;

    bool matches(std::string_view lower_word) const;
  };

  CategoryLexicon() = default;

  // JSON object category -> [entries]. Missing categories are empty; unknown
  // category names are an error.
  static CategoryLexicon load(const std::filesystem::path& path);
  static CategoryLexicon from_json_text(std::string_view text);

  void add(std::size_t category, std::string_view entry);
  const Category& category(std::size_t index) const { return categories_.at(index); }

 private:
  std::array<Category, kCategoryCount> categories_;
};

struct CategoryCounts {
  std::array<double, kCategoryCount> proportions{};  // hits / word tokens
  std::array<std::size_t, kCategoryCount> hits{};
};

CategoryCounts liwc_counts(const TokenStream& tokens, const CategoryLexicon& lexicon);

}  // namespace cogscreen::lingfeat
