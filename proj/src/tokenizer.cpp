#include "cogscreen/tokenizer.hpp"

#include <algorithm>
#include <array>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::lingfeat {
namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

bool is_joiner(char c) { return c == '\'' || c == '-'; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

void push_token(TokenStream& out, std::string surface) {
  Token t;
  t.lower = to_lower(surface);
  t.is_word = std::any_of(surface.begin(), surface.end(),
                          [](char c) { return is_word_char(static_cast<unsigned char>(c)); });
  t.surface = std::move(surface);
  out.tokens.push_back(std::move(t));
}

void push_word(TokenStream& out, const std::string& word) {
  const std::string lower = to_lower(word);
  if (lower.size() > 3 && ends_with(lower, "n't")) {
    push_token(out, word.substr(0, word.size() - 3));
    push_token(out, word.substr(word.size() - 3));
    return;
  }
  static constexpr std::array<std::string_view, 6> kClitics{"'s", "'re", "'ve", "'ll", "'d", "'m"};
  for (auto clitic : kClitics) {
    if (lower.size() > clitic.size() && ends_with(lower, clitic)) {
      push_token(out, word.substr(0, word.size() - clitic.size()));
      push_token(out, word.substr(word.size() - clitic.size()));
      return;
    }
  }
  push_token(out, word);
}

bool is_terminator(const Token& t) {
  return !t.is_word && t.surface.find_first_of(".?!") != std::string::npos;
}

void flag_fillers(TokenStream& stream, const FillerList& fillers) {
  auto& toks = stream.tokens;
  for (auto& t : toks) {
    if (t.is_word &&
        std::find(fillers.words.begin(), fillers.words.end(), t.lower) != fillers.words.end()) {
      t.is_filler = true;
    }
  }
  for (const auto& phrase : fillers.phrases) {
    if (phrase.empty() || phrase.size() > toks.size()) continue;
    for (std::size_t i = 0; i + phrase.size() <= toks.size(); ++i) {
      bool match = true;
      for (std::size_t k = 0; k < phrase.size() && match; ++k) {
        match = toks[i + k].is_word && toks[i + k].lower == phrase[k];
      }
      if (match) {
        for (std::size_t k = 0; k < phrase.size(); ++k) toks[i + k].is_filler = true;
      }
    }
  }
}

}  // namespace

std::size_t TokenStream::word_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return t.is_word; }));
}

const FillerList& FillerList::defaults() {
  static const FillerList kDefaults;
  return kDefaults;
}

TokenStream tokenize(std::string_view text, const FillerList& fillers) {
  TokenStream out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < n) {
        const auto cj = static_cast<unsigned char>(text[j]);
        if (is_word_char(cj)) {
          ++j;
        } else if (is_joiner(text[j]) && j + 1 < n &&
                   is_word_char(static_cast<unsigned char>(text[j + 1]))) {
          ++j;
        } else {
          break;
        }
      }
      push_word(out, std::string(text.substr(i, j - i)));
      i = j;
      continue;
    }
    if (c == '\'' && i + 1 < n) {
      // Leading clitic such as a detached "'s".
      std::size_t j = i + 1;
      while (j < n && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i + 1) {
        push_token(out, std::string(text.substr(i, j - i)));
        i = j;
        continue;
      }
    }
    std::size_t j = i + 1;
    while (j < n && text[j] == text[i]) ++j;
    push_token(out, std::string(text.substr(i, j - i)));
    i = j;
  }
  if (out.tokens.empty()) {
    throw Error(ErrorKind::EmptyTranscript, "text contains no tokens");
  }
  for (std::size_t k = 0; k < out.tokens.size(); ++k) {
    if (is_terminator(out.tokens[k])) out.sentence_ends.push_back(k + 1);
  }
  if (out.sentence_ends.empty() || out.sentence_ends.back() != out.tokens.size()) {
    out.sentence_ends.push_back(out.tokens.size());
  }
  flag_fillers(out, fillers);
  return out;
}

std::size_t count_words(std::string_view text) {
  if (trim(text).empty()) return 0;
  return tokenize(text).word_count();
}

}  // namespace cogscreen::lingfeat
