#include "cogscreen/lexicon.hpp"

#include <algorithm>
#include <json.hpp>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::lingfeat {

bool CategoryLexicon::Category::matches(std::string_view lower_word) const {
  if (words.find(lower_word) != words.end()) return true;
  return std::any_of(stems.begin(), stems.end(),
                     [&](const std::string& stem) { return lower_word.starts_with(stem); });
}

void CategoryLexicon::add(std::size_t category, std::string_view entry) {
  auto& cat = categories_.at(category);
  const auto lower = to_lower(trim(entry));
  if (lower.empty()) return;
  if (lower.back() == '*') {
    cat.stems.push_back(lower.substr(0, lower.size() - 1));
  } else {
    cat.words.insert(lower);
  }
}

CategoryLexicon CategoryLexicon::load(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

CategoryLexicon CategoryLexicon::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("lexicon is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::MalformedInput, "lexicon must be a JSON object");
  CategoryLexicon lex;
  for (const auto& [name, entries] : doc.items()) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    const auto it = std::find(kCategoryNames.begin(), kCategoryNames.end(), key);
    if (it == kCategoryNames.end()) {
      throw Error(ErrorKind::MalformedInput, "lexicon: unknown category \"" + name + "\"");
    }
    if (!entries.is_array()) {
      throw Error(ErrorKind::MalformedInput, "lexicon: category \"" + name + "\" must be a list");
    }
    const auto index = static_cast<std::size_t>(it - kCategoryNames.begin());
    for (const auto& entry : entries) lex.add(index, entry.get<std::string>());
  }
  return lex;
}

CategoryCounts liwc_counts(const TokenStream& tokens, const CategoryLexicon& lexicon) {
  CategoryCounts out;
  std::size_t words = 0;
  for (const auto& tok : tokens.tokens) {
    if (!tok.is_word) continue;
    ++words;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (lexicon.category(c).matches(tok.lower)) ++out.hits[c];
    }
  }
  if (words > 0) {
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      out.proportions[c] = static_cast<double>(out.hits[c]) / static_cast<double>(words);
    }
  }
  return out;
}

}  // namespace cogscreen::lingfeat
