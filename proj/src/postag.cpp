#include "cogscreen/postag.hpp"

#include <algorithm>
#include <json.hpp>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::lingfeat {
namespace {

constexpr std::array<std::string_view, kPosTagCount> kNames{
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "CONJ", "NUM", "PART", "INTJ", "PUNCT", "X"};

PosTag require_tag(const nlohmann::json& value, std::string_view where) {
  if (!value.is_string()) {
    throw Error(ErrorKind::MalformedInput, "tagger model: expected tag string at " + std::string(where));
  }
  auto tag = parse_pos_tag(value.get<std::string>());
  if (!tag) {
    throw Error(ErrorKind::MalformedInput,
                "tagger model: unknown tag \"" + value.get<std::string>() + "\" at " + std::string(where));
  }
  return *tag;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == ',';
  }) && std::isdigit(static_cast<unsigned char>(s.front()));
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string_view to_string(PosTag tag) { return kNames[static_cast<std::size_t>(tag)]; }

std::optional<PosTag> parse_pos_tag(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<PosTag>(i);
  }
  return std::nullopt;
}

RuleTagger RuleTagger::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::UnreadableFile, "tagger model file not found: " + path.string());
  }
  return from_json_text(read_file(path));
}

RuleTagger RuleTagger::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("tagger model is not valid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "cogscreen-postagger") {
    throw Error(ErrorKind::MalformedInput, "tagger model: unsupported format tag");
  }
  const int version = doc.value("version", 0);
  if (version != 1) {
    throw Error(ErrorKind::MalformedInput, "tagger model: unsupported version " + std::to_string(version));
  }
  RuleTagger tagger;
  tagger.default_tag_ = require_tag(doc.at("default_tag"), "default_tag");
  for (const auto& [word, entry] : doc.at("lexicon").items()) {
    std::vector<PosTag> tags;
    if (entry.is_array()) {
      for (const auto& t : entry) tags.push_back(require_tag(t, "lexicon/" + word));
    } else {
      tags.push_back(require_tag(entry, "lexicon/" + word));
    }
    tagger.lexicon_.emplace(word, std::move(tags));
  }
  for (const auto& rule : doc.at("suffix_rules")) {
    tagger.suffix_rules_.emplace_back(rule.at(0).get<std::string>(), require_tag(rule.at(1), "suffix_rules"));
  }
  for (const auto& rule : doc.value("context_rules", nlohmann::json::array())) {
    ContextRule r{};
    r.from = require_tag(rule.at("from"), "context_rules/from");
    r.to = require_tag(rule.at("to"), "context_rules/to");
    if (rule.contains("prev")) r.prev = require_tag(rule["prev"], "context_rules/prev");
    if (rule.contains("next")) r.next = require_tag(rule["next"], "context_rules/next");
    if (rule.contains("prev_word")) r.prev_word = rule["prev_word"].get<std::string>();
    if (rule.contains("suffix")) r.suffix = rule["suffix"].get<std::string>();
    tagger.context_rules_.push_back(std::move(r));
  }
  tagger.model_id_ = "cogscreen-postagger/v1/" + sha256_hex(text).substr(0, 12);
  return tagger;
}

PosTags RuleTagger::tag(const TokenStream& stream) const {
  const auto& toks = stream.tokens;
  PosTags tags(toks.size(), default_tag_);
  // Candidate sets for words the contextual rules may rewrite; empty = fixed.
  std::vector<std::vector<PosTag>> open(toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& tok = toks[i];
    if (!tok.is_word) {
      tags[i] = PosTag::PUNCT;
      continue;
    }
    if (auto it = lexicon_.find(tok.lower); it != lexicon_.end()) {
      tags[i] = it->second.front();
      if (it->second.size() > 1) open[i] = it->second;
      continue;
    }
    if (all_digits(tok.lower)) {
      tags[i] = PosTag::NUM;
      continue;
    }
    tags[i] = default_tag_;
    for (const auto& [suffix, t] : suffix_rules_) {
      if (ends_with(tok.lower, suffix)) {
        tags[i] = t;
        break;
      }
    }
    open[i] = {kAllPosTags.begin(), kAllPosTags.end()};
  }
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (open[i].empty()) continue;
    for (const auto& rule : context_rules_) {
      if (tags[i] != rule.from) continue;
      if (std::find(open[i].begin(), open[i].end(), rule.to) == open[i].end()) continue;
      if (rule.prev && (i == 0 || tags[i - 1] != *rule.prev)) continue;
      if (rule.prev_word && (i == 0 || toks[i - 1].lower != *rule.prev_word)) continue;
      if (rule.next && (i + 1 >= toks.size() || tags[i + 1] != *rule.next)) continue;
      if (rule.suffix && !ends_with(toks[i].lower, *rule.suffix)) continue;
      tags[i] = rule.to;
      break;
    }
  }
  return tags;
}

}  // namespace cogscreen::lingfeat
