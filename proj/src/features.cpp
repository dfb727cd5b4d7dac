#include "cogscreen/features.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "cogscreen/util.hpp"

namespace cogscreen::lingfeat {
namespace {

using D = Dimension;
using K = FeatureKind;
using Dup = Duplication;

// Bundled frequency bands: the 100 most frequent spoken-English surface forms,
// then the next 100. Anything else is "rare".
const std::set<std::string, std::less<>>& band_top100() {
  static const std::set<std::string, std::less<>> kWords{
      "the",  "and",  "a",     "to",    "of",   "i",     "it",    "in",    "that", "is",
      "was",  "you",  "he",    "she",   "they", "we",    "on",    "for",   "with", "his",
      "her",  "but",  "not",   "n't",   "'s",   "at",    "be",    "have",  "has",  "had",
      "this", "there", "so",   "are",   "were", "do",    "did",   "as",    "by",   "from",
      "or",   "an",   "my",    "me",    "him",  "them",  "what",  "all",   "one",  "up",
      "out",  "if",   "about", "who",   "get",  "go",    "going", "when",  "can",  "like",
      "just", "know", "no",    "would", "will", "could", "their", "your",  "some", "then",
      "now",  "see",  "look",  "into",  "over", "its",   "our",   "us",    "which", "been",
      "more", "time", "well",  "back",  "also", "here",  "how",   "because", "very", "down",
      "um",   "uh",   "yeah",  "oh",    "okay", "right", "think", "said",  "say",  "don"};
  return kWords;
}

const std::set<std::string, std::less<>>& band_101_200() {
  static const std::set<std::string, std::less<>> kWords{
      "make",   "other",  "people", "take",  "good",   "two",    "first", "way",    "even",   "new",
      "want",   "any",    "these",  "give",  "day",    "most",   "thing", "things", "man",    "woman",
      "little", "big",    "off",    "got",   "get",    "come",   "came",  "went",   "saw",    "looks",
      "looking", "where", "why",    "mean",  "something", "really", "still", "too",   "much",   "many",
      "only",   "those",  "than",   "again", "around", "after",  "before", "while", "through", "put",
      "tell",   "told",   "let",    "need",  "doing",  "does",   "being", "made",   "keep",   "try",
      "trying", "seems",  "seem",   "maybe", "guess",  "boy",    "girl",  "mother", "kid",    "kids",
      "water",  "home",   "house",  "hand",  "work",   "old",    "long",  "another", "same",  "every",
      "should", "might",  "must",   "may",   "never",  "always", "nothing", "anything", "everything", "someone",
      "'re",    "'m",     "'ll",    "'ve",   "'d",     "ca",     "wo",    "gonna",  "kind",   "lot"};
  return kWords;
}

const std::set<std::string, std::less<>>& discourse_markers() {
  static const std::set<std::string, std::less<>> kWords{"so",   "okay", "ok",     "oh",
                                                         "then", "anyway", "alright"};
  return kWords;
}

// Short words that legitimately prefix the next word ("a apple", "in inside").
const std::set<std::string, std::less<>>& short_function_words() {
  static const std::set<std::string, std::less<>> kWords{
      "a",  "i",  "an", "in", "on", "at", "to", "of", "is", "it", "he", "we", "me", "my", "so",
      "no", "do", "be", "by", "or", "up", "us", "as", "go", "the", "and", "she", "her", "his",
      "for", "but", "not", "out", "can", "all", "one", "our", "you", "was", "are", "has", "had"};
  return kWords;
}

const std::vector<std::string> kSingleFillers{"um", "uh", "er", "ah", "hm", "mhm", "like", "well"};

struct Bigram {
  PosTag first;
  PosTag second;
};

const std::vector<Bigram> kTagBigrams{
    {PosTag::DET, PosTag::NOUN},  {PosTag::ADJ, PosTag::NOUN},  {PosTag::DET, PosTag::ADJ},
    {PosTag::PRON, PosTag::VERB}, {PosTag::NOUN, PosTag::VERB}, {PosTag::VERB, PosTag::DET},
    {PosTag::VERB, PosTag::ADP},  {PosTag::VERB, PosTag::PRON}, {PosTag::VERB, PosTag::ADV},
    {PosTag::VERB, PosTag::VERB}, {PosTag::ADP, PosTag::DET},   {PosTag::NOUN, PosTag::ADP},
    {PosTag::NOUN, PosTag::CONJ}, {PosTag::CONJ, PosTag::PRON}, {PosTag::NOUN, PosTag::NOUN},
    {PosTag::INTJ, PosTag::PRON}};

std::string lowercase_tag(PosTag tag) { return to_lower(to_string(tag)); }

std::vector<FeatureSpec> build_registry() {
  std::vector<FeatureSpec> r;
  auto add = [&](std::string name, D dim, K kind, Dup dup, std::string def, bool nominal = false) {
    r.push_back(FeatureSpec{std::move(name), dim, kind, dup, std::move(def), nominal});
  };
  // Lexical richness (24). N = word tokens, V = distinct word types,
  // V1 / V2 = types occurring once / twice.
  add("type_token_ratio", D::LexicalRichness, K::Ratio, Dup::NonIncreasing,
      "distinct word types / word tokens");
  add("root_ttr", D::LexicalRichness, K::Scalar, Dup::NonIncreasing, "V / sqrt(N)");
  add("corrected_ttr", D::LexicalRichness, K::Scalar, Dup::NonIncreasing, "V / sqrt(2N)");
  add("log_ttr", D::LexicalRichness, K::Scalar, Dup::NonIncreasing, "log V / log N; 0 when N <= 1");
  for (int w : {10, 20, 30, 50}) {
    add("mattr_" + std::to_string(w), D::LexicalRichness, K::Ratio, Dup::Unconstrained,
        "mean TTR over sliding windows of " + std::to_string(w) + " words; TTR when N < " +
            std::to_string(w));
  }
  add("msttr_20", D::LexicalRichness, K::Ratio, Dup::Unconstrained,
      "mean TTR over consecutive 20-word segments, remainder dropped; TTR when N < 20");
  add("brunet_index", D::LexicalRichness, K::Scalar, Dup::Unconstrained, "N ^ (V ^ -0.165)");
  add("honore_statistic", D::LexicalRichness, K::Scalar, Dup::Unconstrained,
      "100 ln N / (1 - V1/V); 0 when V1 = V");
  add("hapax_token_ratio", D::LexicalRichness, K::Ratio, Dup::NonIncreasing, "V1 / N");
  add("hapax_type_ratio", D::LexicalRichness, K::Ratio, Dup::NonIncreasing, "V1 / V");
  add("dis_legomena_ratio", D::LexicalRichness, K::Ratio, Dup::Unconstrained, "V2 / V");
  add("yule_k", D::LexicalRichness, K::Scalar, Dup::Unconstrained,
      "10^4 (sum_i i^2 V_i - N) / N^2");
  add("simpson_diversity", D::LexicalRichness, K::Ratio, Dup::Unconstrained,
      "sum_w f_w (f_w - 1) / (N (N - 1)); 0 when N < 2");
  add("word_count", D::LexicalRichness, K::Count, Dup::Doubles, "N");
  add("type_count", D::LexicalRichness, K::Count, Dup::Invariant, "V");
  add("mean_word_length", D::LexicalRichness, K::Scalar, Dup::Invariant,
      "mean byte length of word tokens");
  add("sd_word_length", D::LexicalRichness, K::Scalar, Dup::Invariant,
      "population standard deviation of word-token byte lengths");
  add("long_word_ratio", D::LexicalRichness, K::Ratio, Dup::Invariant,
      "word tokens of 7+ bytes / N");
  add("freq_band_top100", D::LexicalRichness, K::Ratio, Dup::Invariant,
      "word tokens in the bundled top-100 frequency band / N");
  add("freq_band_101_200", D::LexicalRichness, K::Ratio, Dup::Invariant,
      "word tokens in the bundled 101-200 frequency band / N");
  add("freq_band_rare", D::LexicalRichness, K::Ratio, Dup::Invariant,
      "word tokens outside both bundled bands / N");

  // Syntactic complexity (39).
  for (auto tag : kAllPosTags) {
    add("pos_" + lowercase_tag(tag), D::SyntacticComplexity, K::Ratio, Dup::Invariant,
        "tokens tagged " + std::string(to_string(tag)) + " / all tokens");
  }
  for (const auto& bg : kTagBigrams) {
    add("tag_bigram_" + lowercase_tag(bg.first) + "_" + lowercase_tag(bg.second),
        D::SyntacticComplexity, K::Ratio, Dup::Invariant,
        "adjacent " + std::string(to_string(bg.first)) + " " + std::string(to_string(bg.second)) +
            " tag pairs / adjacent token pairs, both counted within sentences");
  }
  add("mean_sentence_length", D::SyntacticComplexity, K::Scalar, Dup::Invariant,
      "mean word tokens per sentence (sentences with at least one word)");
  add("sd_sentence_length", D::SyntacticComplexity, K::Scalar, Dup::Invariant,
      "population standard deviation of words per sentence");
  add("max_sentence_length", D::SyntacticComplexity, K::Count, Dup::Invariant,
      "largest word count of any sentence");
  add("sentence_count", D::SyntacticComplexity, K::Count, Dup::Doubles,
      "sentences containing at least one word");
  add("pronoun_noun_ratio", D::SyntacticComplexity, K::Scalar, Dup::Invariant, "PRON / NOUN");
  add("noun_verb_ratio", D::SyntacticComplexity, K::Scalar, Dup::Invariant, "NOUN / VERB");
  add("determiner_noun_ratio", D::SyntacticComplexity, K::Scalar, Dup::Invariant, "DET / NOUN");
  add("verbs_per_sentence", D::SyntacticComplexity, K::Scalar, Dup::Invariant,
      "VERB / sentence_count");
  add("content_density", D::SyntacticComplexity, K::Ratio, Dup::Invariant,
      "(NOUN + VERB + ADJ + ADV) / N");
  add("function_word_density", D::SyntacticComplexity, K::Ratio, Dup::Invariant,
      "(DET + ADP + PRON + CONJ + PART) / N");

  // Semantic coherence and fluency (25). Repetition features operate on the
  // word tokens of each sentence.
  add("filler_count", D::Fluency, K::Count, Dup::Doubles, "word tokens flagged as fillers");
  add("filler_ratio", D::Fluency, K::Ratio, Dup::Invariant, "filler_count / N");
  for (const auto& f : kSingleFillers) {
    add("filler_" + f + "_count", D::Fluency, K::Count, Dup::Doubles,
        "occurrences of the filler \"" + f + "\"");
  }
  add("you_know_count", D::Fluency, K::Count, Dup::Doubles,
      "occurrences of the filler phrase \"you know\"");
  add("immediate_repetition_count", D::Fluency, K::Count, Dup::Doubles,
      "word tokens equal to the preceding word token", true);
  add("immediate_repetition_ratio", D::Fluency, K::Ratio, Dup::Invariant,
      "immediate_repetition_count / N", true);
  add("immediate_bigram_repetition_count", D::Fluency, K::Count, Dup::Doubles,
      "positions i where (w[i-3], w[i-2]) = (w[i-1], w[i])");
  add("gapped_repetition_count", D::Fluency, K::Count, Dup::Doubles,
      "word tokens differing from the previous word but equal to one 2-5 words back");
  add("gapped_bigram_repetition_count", D::Fluency, K::Count, Dup::Doubles,
      "word bigrams repeating a bigram that started 3-10 words earlier");
  add("repeated_bigram_type_ratio", D::Fluency, K::Ratio, Dup::Unconstrained,
      "distinct word bigrams occurring more than once / distinct word bigrams");
  add("incomplete_sentence_count", D::Fluency, K::Count, Dup::Doubles,
      "sentences with words but no VERB tag, plus an unterminated final sentence");
  add("incomplete_sentence_ratio", D::Fluency, K::Ratio, Dup::Invariant,
      "incomplete_sentence_count / sentence_count");
  add("mean_utterance_length", D::Fluency, K::Scalar, Dup::Invariant,
      "mean word tokens per segment delimited by . ? ! , ; :");
  add("false_start_count", D::Fluency, K::Count, Dup::Doubles,
      "non-function words of <= 3 bytes that are a proper prefix of the next word (4+ bytes)");
  add("discourse_marker_count", D::Fluency, K::Count, Dup::Doubles,
      "tokens in {so, okay, ok, oh, then, anyway, alright}");
  add("fillers_per_sentence", D::Fluency, K::Scalar, Dup::Invariant,
      "filler_count / sentence_count");
  add("repetitions_per_sentence", D::Fluency, K::Scalar, Dup::Invariant,
      "immediate_repetition_count / sentence_count");
  add("filler_type_count", D::Fluency, K::Count, Dup::Invariant,
      "distinct filler types used (\"you know\" is one type)");

  // Psycholinguistic categories (22).
  for (auto name : kCategoryNames) {
    add("lex_" + std::string(name), D::Psycholinguistic, K::Ratio, Dup::Invariant,
        "word tokens matching the " + std::string(name) + " category / N");
  }
  for (auto name : kCategoryNames) {
    add("lex_" + std::string(name) + "_hits", D::Psycholinguistic, K::Count, Dup::Doubles,
        "word tokens matching the " + std::string(name) + " category");
  }
  if (r.size() != kFeatureCount) throw std::logic_error("feature registry size mismatch");
  return r;
}

class Sink {
 public:
  explicit Sink(std::string_view context) : context_(context) { filled_.fill(false); }

  void set(std::string_view name, double value) {
    const auto idx = feature_index(name);
    if (!idx) throw std::logic_error("unknown feature " + std::string(name));
    values_[*idx] = value;
    filled_[*idx] = true;
  }

  void ratio(std::string_view name, double num, double den) {
    if (den == 0.0) {
      spdlog::warn("feature {}: zero denominator{}, value set to 0", name, context_);
      set(name, 0.0);
      return;
    }
    set(name, num / den);
  }

  FeatureVector finish() const {
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (!filled_[i]) throw std::logic_error("feature not computed: " + feature_registry()[i].name);
      if (!std::isfinite(values_[i])) throw std::logic_error("non-finite feature " + feature_registry()[i].name);
    }
    return values_;
  }

 private:
  std::string context_;
  FeatureVector values_{};
  std::array<bool, kFeatureCount> filled_{};
};

double ttr_of(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
  std::set<std::string_view> types;
  for (std::size_t i = begin; i < end; ++i) types.insert(words[i]);
  return static_cast<double>(types.size()) / static_cast<double>(end - begin);
}

double population_sd(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

FeatureVector compute(const TokenStream& ts, const PosTags& tags, const CategoryLexicon& lexicon,
                      std::string_view context) {
  Sink out(context);
  const auto& toks = ts.tokens;

  std::vector<std::string> words;
  for (const auto& t : toks) {
    if (t.is_word) words.push_back(t.lower);
  }
  const double n = static_cast<double>(words.size());
  std::map<std::string_view, std::size_t> freq;
  for (const auto& w : words) ++freq[w];
  const double v = static_cast<double>(freq.size());
  std::map<std::size_t, std::size_t> freq_of_freq;
  for (const auto& [w, f] : freq) ++freq_of_freq[f];
  const double v1 = static_cast<double>(freq_of_freq[1]);
  const double v2 = static_cast<double>(freq_of_freq[2]);

  // Lexical richness.
  out.ratio("type_token_ratio", v, n);
  out.ratio("root_ttr", v, std::sqrt(n));
  out.ratio("corrected_ttr", v, std::sqrt(2.0 * n));
  if (words.size() <= 1) {
    out.ratio("log_ttr", 0.0, 0.0);
  } else {
    out.set("log_ttr", std::log(v) / std::log(n));
  }
  for (std::size_t w : {10u, 20u, 30u, 50u}) {
    const std::string name = "mattr_" + std::to_string(w);
    if (words.empty()) {
      out.ratio(name, 0.0, 0.0);
    } else if (words.size() < w) {
      out.set(name, ttr_of(words, 0, words.size()));
    } else {
      double sum = 0.0;
      const std::size_t windows = words.size() - w + 1;
      for (std::size_t i = 0; i < windows; ++i) sum += ttr_of(words, i, i + w);
      out.set(name, sum / static_cast<double>(windows));
    }
  }
  if (words.empty()) {
    out.ratio("msttr_20", 0.0, 0.0);
  } else if (words.size() < 20) {
    out.set("msttr_20", ttr_of(words, 0, words.size()));
  } else {
    double sum = 0.0;
    const std::size_t segments = words.size() / 20;
    for (std::size_t s = 0; s < segments; ++s) sum += ttr_of(words, s * 20, s * 20 + 20);
    out.set("msttr_20", sum / static_cast<double>(segments));
  }
  out.set("brunet_index", words.empty() ? 0.0 : std::pow(n, std::pow(v, -0.165)));
  if (words.empty() || v1 == v) {
    spdlog::warn("feature honore_statistic: all words are hapax{}, value set to 0", context);
    out.set("honore_statistic", 0.0);
  } else {
    out.set("honore_statistic", 100.0 * std::log(n) / (1.0 - v1 / v));
  }
  out.ratio("hapax_token_ratio", v1, n);
  out.ratio("hapax_type_ratio", v1, v);
  out.ratio("dis_legomena_ratio", v2, v);
  {
    double s2 = 0.0;
    for (const auto& [f, count] : freq_of_freq) {
      s2 += static_cast<double>(f) * static_cast<double>(f) * static_cast<double>(count);
    }
    out.ratio("yule_k", 1e4 * (s2 - n), n * n);
    double pairs = 0.0;
    for (const auto& [w, f] : freq) pairs += static_cast<double>(f) * static_cast<double>(f - 1);
    out.ratio("simpson_diversity", pairs, n * (n - 1.0));
  }
  out.set("word_count", n);
  out.set("type_count", v);
  {
    std::vector<double> lengths;
    double long_words = 0.0, top = 0.0, mid = 0.0, rare = 0.0;
    for (const auto& w : words) {
      lengths.push_back(static_cast<double>(w.size()));
      if (w.size() >= 7) long_words += 1.0;
      if (band_top100().contains(w)) {
        top += 1.0;
      } else if (band_101_200().contains(w)) {
        mid += 1.0;
      } else {
        rare += 1.0;
      }
    }
    out.ratio("mean_word_length", mean(lengths) * n, n);
    out.set("sd_word_length", population_sd(lengths));
    out.ratio("long_word_ratio", long_words, n);
    out.ratio("freq_band_top100", top, n);
    out.ratio("freq_band_101_200", mid, n);
    out.ratio("freq_band_rare", rare, n);
  }

  // Syntactic complexity.
  std::array<double, kPosTagCount> tag_counts{};
  for (auto t : tags) tag_counts[static_cast<std::size_t>(t)] += 1.0;
  const auto count_of = [&](PosTag t) { return tag_counts[static_cast<std::size_t>(t)]; };
  const double total_tokens = static_cast<double>(toks.size());
  for (auto tag : kAllPosTags) out.ratio("pos_" + lowercase_tag(tag), count_of(tag), total_tokens);

  // Sentence structure: token ranges and their word tokens.
  std::vector<std::vector<std::size_t>> sentence_words;
  double pair_total = 0.0;
  std::vector<double> bigram_counts(kTagBigrams.size(), 0.0);
  {
    std::size_t begin = 0;
    for (auto end : ts.sentence_ends) {
      std::vector<std::size_t> sw;
      for (std::size_t i = begin; i < end; ++i) {
        if (toks[i].is_word) sw.push_back(i);
        if (i + 1 < end) {
          pair_total += 1.0;
          for (std::size_t b = 0; b < kTagBigrams.size(); ++b) {
            if (tags[i] == kTagBigrams[b].first && tags[i + 1] == kTagBigrams[b].second) {
              bigram_counts[b] += 1.0;
            }
          }
        }
      }
      sentence_words.push_back(std::move(sw));
      begin = end;
    }
  }
  for (std::size_t b = 0; b < kTagBigrams.size(); ++b) {
    out.ratio("tag_bigram_" + lowercase_tag(kTagBigrams[b].first) + "_" +
                  lowercase_tag(kTagBigrams[b].second),
              bigram_counts[b], pair_total);
  }
  std::vector<double> sentence_lengths;
  for (const auto& sw : sentence_words) {
    if (!sw.empty()) sentence_lengths.push_back(static_cast<double>(sw.size()));
  }
  const double sentences = static_cast<double>(sentence_lengths.size());
  out.ratio("mean_sentence_length", mean(sentence_lengths) * sentences, sentences);
  out.set("sd_sentence_length", population_sd(sentence_lengths));
  out.set("max_sentence_length",
          sentence_lengths.empty() ? 0.0
                                   : *std::max_element(sentence_lengths.begin(), sentence_lengths.end()));
  out.set("sentence_count", sentences);
  out.ratio("pronoun_noun_ratio", count_of(PosTag::PRON), count_of(PosTag::NOUN));
  out.ratio("noun_verb_ratio", count_of(PosTag::NOUN), count_of(PosTag::VERB));
  out.ratio("determiner_noun_ratio", count_of(PosTag::DET), count_of(PosTag::NOUN));
  out.ratio("verbs_per_sentence", count_of(PosTag::VERB), sentences);
  out.ratio("content_density",
            count_of(PosTag::NOUN) + count_of(PosTag::VERB) + count_of(PosTag::ADJ) +
                count_of(PosTag::ADV),
            n);
  out.ratio("function_word_density",
            count_of(PosTag::DET) + count_of(PosTag::ADP) + count_of(PosTag::PRON) +
                count_of(PosTag::CONJ) + count_of(PosTag::PART),
            n);

  // Fluency.
  double filler_tokens = 0.0;
  std::set<std::string> filler_types;
  std::map<std::string, double> single_filler_counts;
  double you_know = 0.0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (!t.is_filler) continue;
    filler_tokens += 1.0;
    if (std::find(kSingleFillers.begin(), kSingleFillers.end(), t.lower) != kSingleFillers.end()) {
      single_filler_counts[t.lower] += 1.0;
      filler_types.insert(t.lower);
    }
    if (t.lower == "you" && i + 1 < toks.size() && toks[i + 1].lower == "know" &&
        toks[i + 1].is_filler) {
      you_know += 1.0;
      filler_types.insert("you know");
    }
  }
  out.set("filler_count", filler_tokens);
  out.ratio("filler_ratio", filler_tokens, n);
  for (const auto& f : kSingleFillers) out.set("filler_" + f + "_count", single_filler_counts[f]);
  out.set("you_know_count", you_know);

  double immediate = 0.0, bigram_rep = 0.0, gapped = 0.0, gapped_bigram = 0.0;
  double false_starts = 0.0, incomplete = 0.0;
  std::map<std::pair<std::string, std::string>, std::size_t> bigram_types;
  for (std::size_t s = 0; s < sentence_words.size(); ++s) {
    std::vector<std::string_view> w;
    for (auto idx : sentence_words[s]) w.push_back(toks[idx].lower);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (i >= 1 && w[i] == w[i - 1]) immediate += 1.0;
      if (i >= 3 && w[i - 3] == w[i - 1] && w[i - 2] == w[i]) bigram_rep += 1.0;
      if (i >= 1 && w[i] != w[i - 1]) {
        for (std::size_t back = 2; back <= 5 && back <= i; ++back) {
          if (w[i - back] == w[i]) {
            gapped += 1.0;
            break;
          }
        }
      }
      if (i >= 1) {
        ++bigram_types[{std::string(w[i - 1]), std::string(w[i])}];
        // Earlier bigram (w[j-1], w[j]) starting 3..10 words before this one.
        for (std::size_t back = 3; back <= 10 && back <= i - 1; ++back) {
          const std::size_t j = i - back;
          if (w[j - 1] == w[i - 1] && w[j] == w[i]) {
            gapped_bigram += 1.0;
            break;
          }
        }
      }
      if (i + 1 < w.size()) {
        const auto cur = w[i];
        const auto next = w[i + 1];
        if (cur.size() <= 3 && next.size() >= 4 && next.starts_with(cur) &&
            !short_function_words().contains(cur)) {
          false_starts += 1.0;
        }
      }
    }
    if (!w.empty()) {
      const std::size_t begin = s == 0 ? 0 : ts.sentence_ends[s - 1];
      const std::size_t end = ts.sentence_ends[s];
      bool has_verb = false;
      for (std::size_t i = begin; i < end; ++i) has_verb = has_verb || tags[i] == PosTag::VERB;
      const bool terminated =
          !toks[end - 1].is_word && toks[end - 1].surface.find_first_of(".?!") != std::string::npos;
      if (!has_verb || !terminated) incomplete += 1.0;
    }
  }
  out.set("immediate_repetition_count", immediate);
  out.ratio("immediate_repetition_ratio", immediate, n);
  out.set("immediate_bigram_repetition_count", bigram_rep);
  out.set("gapped_repetition_count", gapped);
  out.set("gapped_bigram_repetition_count", gapped_bigram);
  {
    double repeated = 0.0;
    for (const auto& [bg, c] : bigram_types) {
      if (c > 1) repeated += 1.0;
    }
    out.ratio("repeated_bigram_type_ratio", repeated, static_cast<double>(bigram_types.size()));
  }
  out.set("incomplete_sentence_count", incomplete);
  out.ratio("incomplete_sentence_ratio", incomplete, sentences);
  {
    std::vector<double> segment_lengths;
    double current = 0.0;
    for (const auto& t : toks) {
      if (t.is_word) {
        current += 1.0;
      } else if (t.surface.find_first_of(".?!,;:") != std::string::npos) {
        if (current > 0.0) segment_lengths.push_back(current);
        current = 0.0;
      }
    }
    if (current > 0.0) segment_lengths.push_back(current);
    const double segments = static_cast<double>(segment_lengths.size());
    out.ratio("mean_utterance_length", mean(segment_lengths) * segments, segments);
  }
  out.set("false_start_count", false_starts);
  {
    double markers = 0.0;
    for (const auto& w : words) {
      if (discourse_markers().contains(w)) markers += 1.0;
    }
    out.set("discourse_marker_count", markers);
  }
  out.ratio("fillers_per_sentence", filler_tokens, sentences);
  out.ratio("repetitions_per_sentence", immediate, sentences);
  out.set("filler_type_count", static_cast<double>(filler_types.size()));

  // Psycholinguistic categories.
  const auto cats = liwc_counts(ts, lexicon);
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const std::string base = "lex_" + std::string(kCategoryNames[c]);
    out.ratio(base, static_cast<double>(cats.hits[c]), n);
    out.set(base + "_hits", static_cast<double>(cats.hits[c]));
  }
  return out.finish();
}

}  // namespace

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::LexicalRichness: return "lexical_richness";
    case Dimension::SyntacticComplexity: return "syntactic_complexity";
    case Dimension::Fluency: return "fluency";
    case Dimension::Psycholinguistic: return "psycholinguistic";
  }
  return "";
}

std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::Ratio: return "ratio";
    case FeatureKind::Count: return "count";
    case FeatureKind::Scalar: return "scalar";
  }
  return "";
}

std::string_view to_string(Duplication d) {
  switch (d) {
    case Duplication::Invariant: return "invariant";
    case Duplication::Doubles: return "doubles";
    case Duplication::NonIncreasing: return "non_increasing";
    case Duplication::Unconstrained: return "unconstrained";
  }
  return "";
}

const std::vector<FeatureSpec>& feature_registry() {
  static const std::vector<FeatureSpec> kRegistry = build_registry();
  return kRegistry;
}

std::optional<std::size_t> feature_index(std::string_view name) {
  static const auto kIndex = [] {
    std::unordered_map<std::string, std::size_t> index;
    const auto& reg = feature_registry();
    for (std::size_t i = 0; i < reg.size(); ++i) index.emplace(reg[i].name, i);
    return index;
  }();
  const auto it = kIndex.find(std::string(name));
  if (it == kIndex.end()) return std::nullopt;
  return it->second;
}

FeatureVector extract_features(std::string_view text, const CategoryLexicon& lexicon,
                               const PosTagger& tagger) {
  const auto ts = tokenize(text);
  return compute(ts, tagger.tag(ts), lexicon, "");
}

FeatureVector extract_features(const corpus::Transcript& transcript, const CategoryLexicon& lexicon,
                               const PosTagger& tagger) {
  const auto ts = tokenize(transcript.text);
  return compute(ts, tagger.tag(ts), lexicon, " in transcript " + transcript.id);
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  std::vector<double> out(row.size(), 0.0);
  for (std::size_t j = 0; j < row.size(); ++j) {
    out[j] = scale[j] == 0.0 ? 0.0 : (row[j] - mean[j]) / scale[j];
  }
  return out;
}

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows) {
  Standardizer s;
  if (rows.empty()) return s;
  const std::size_t cols = rows.front().size();
  s.mean.assign(cols, 0.0);
  s.scale.assign(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    std::vector<double> column;
    column.reserve(rows.size());
    for (const auto& r : rows) column.push_back(r.at(j));
    s.mean[j] = mean(column);
    s.scale[j] = population_sd(column);
  }
  return s;
}

FeatureMatrix feature_matrix(const std::vector<corpus::Transcript>& view,
                             const CategoryLexicon& lexicon, const PosTagger& tagger,
                             const std::optional<Standardizer>& params) {
  FeatureMatrix m;
  for (const auto& t : view) {
    const auto fv = extract_features(t, lexicon, tagger);
    m.ids.push_back(t.id);
    m.raw.emplace_back(fv.begin(), fv.end());
  }
  m.params = params ? *params : fit_standardizer(m.raw);
  for (const auto& r : m.raw) m.standardized.push_back(m.params.apply(r));
  return m;
}

std::string features_to_csv(const std::vector<std::string>& ids,
                            const std::vector<std::vector<double>>& rows) {
  std::string out = "id";
  for (const auto& spec : feature_registry()) out += "," + spec.name;
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += csv_escape(ids.at(i));
    for (double v : rows[i]) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

}  // namespace cogscreen::lingfeat
