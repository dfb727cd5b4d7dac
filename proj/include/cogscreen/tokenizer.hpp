#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cogscreen::lingfeat {

struct Token {
  std::string surface;
  std::string lower;
  bool is_word = false;
  bool is_filler = false;
};

struct TokenStream {
  std::vector<Token> tokens;
  // End-exclusive token index of each sentence, strictly increasing. The last
  // entry equals tokens.size().
  std::vector<std::size_t> sentence_ends;

  std::size_t size() const { return tokens.size(); }
  std::size_t word_count() const;
  std::size_t sentence_count() const { return sentence_ends.size(); }
};

// Fillers are matched on lowercase tokens. Multi-word phrases flag every
// token they cover. "like" and "well" are counted in every position, which
// over-counts their non-filler uses.
struct FillerList {
  std::vector<std::string> words{"um", "uh", "er", "ah", "hm", "mhm", "like", "well"};
  std::vector<std::vector<std::string>> phrases{{"you", "know"}};

  static const FillerList& defaults();
};

// Splits on whitespace, separates punctuation (runs of one punctuation
// character form one token) and peels English clitics: n't, 's, 're, 've,
// 'll, 'd, 'm. Sentences end at tokens containing '.', '?' or '!'.
// Throws EmptyTranscript when the text holds no tokens.
TokenStream tokenize(std::string_view text, const FillerList& fillers = FillerList::defaults());

// Word tokens of tokenize(text); 0 for blank text.
std::size_t count_words(std::string_view text);

}  // namespace cogscreen::lingfeat
