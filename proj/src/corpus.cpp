#include "cogscreen/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>
#include <sstream>

#include "cogscreen/error.hpp"
#include "cogscreen/tokenizer.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::corpus {
namespace {

bool looks_like_chat(std::string_view raw) {
  static const std::regex kTier(R"(^\*[A-Za-z0-9]+:)");
  static const std::regex kHeader(R"(^@(UTF8|Begin|End|Languages|Participants|ID|Media))");
  for (const auto& line : split(raw, '\n')) {
    if (std::regex_search(line, kTier) || std::regex_search(line, kHeader)) return true;
  }
  return false;
}

std::string strip_delimited(std::string_view s, char open, char close) {
  std::string out;
  int depth = 0;
  for (char c : s) {
    if (c == open && (open != close || depth == 0)) {
      ++depth;
      continue;
    }
    if (c == close && depth > 0) {
      --depth;
      out.push_back(' ');
      continue;
    }
    if (depth == 0) out.push_back(c);
  }
  return out;
}

std::string clean_word(std::string word) {
  if (auto at = word.find('@'); at != std::string::npos) word.erase(at);
  std::string out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    const char c = word[i];
    if (c == '(' || c == ')' || c == '^') continue;
    if (c == ':' && i > 0 && i + 1 < word.size()) continue;
    out.push_back(c);
  }
  return out;
}

std::string clean_token(const std::string& tok) {
  if (tok.empty()) return {};
  if (tok == "xxx" || tok == "yyy" || tok == "www" || tok == "xx") return {};
  if (tok == "\xE2\x80\xA1" || tok == "\xE2\x80\x9E") return {};  // ‡ „
  if (tok.front() == '(' && tok.find_first_not_of("(.)") == std::string::npos) return {};
  if (tok.front() == '*') return {};
  if (tok.front() == '&') {
    if (tok.size() > 1 && tok[1] == '=') return {};
    std::size_t start = 1;
    if (tok.size() > 1 && (tok[1] == '-' || tok[1] == '+')) start = 2;
    return clean_word(tok.substr(start));
  }
  if (tok.front() == '+') {
    const auto pos = tok.find_last_of(".?!");
    return pos == std::string::npos ? std::string{} : std::string(1, tok[pos]);
  }
  if (tok.size() > 1 && tok.front() == '0' && std::isalpha(static_cast<unsigned char>(tok[1]))) {
    return {};
  }
  return clean_word(tok);
}

std::string clean_utterance(std::string_view content) {
  std::string s = strip_delimited(content, '\x15', '\x15');
  s = strip_delimited(s, '[', ']');
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '<' || c == '>'; }),
          s.end());
  std::istringstream in(s);
  std::string tok;
  std::string out;
  while (in >> tok) {
    auto cleaned = clean_token(tok);
    if (cleaned.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += cleaned;
  }
  return out;
}

std::string manifest_error(std::size_t line, const std::string& what) {
  return "manifest row " + std::to_string(line) + ": " + what;
}

}  // namespace

Transcript make_transcript(std::string id, Label label, Split split, std::string text) {
  Transcript t;
  t.id = std::move(id);
  t.label = label;
  t.split = split;
  t.word_count = lingfeat::count_words(text);
  t.text = std::move(text);
  return t;
}

Corpus::Corpus(std::vector<Transcript> transcripts) : transcripts_(std::move(transcripts)) {
  std::set<std::string> seen;
  for (const auto& t : transcripts_) {
    if (!seen.insert(t.id).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate transcript id: " + t.id);
    }
  }
}

std::size_t Corpus::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      transcripts_.begin(), transcripts_.end(), [&](const Transcript& t) { return t.split == split; }));
}

std::size_t Corpus::count(Split split, Label label) const {
  return static_cast<std::size_t>(
      std::count_if(transcripts_.begin(), transcripts_.end(), [&](const Transcript& t) {
        return t.split == split && t.label == label;
      }));
}

std::string parse_chat(std::string_view raw) {
  if (!looks_like_chat(raw)) {
    if (trim(raw).empty()) throw Error(ErrorKind::EmptyTranscript, "transcript is empty");
    return std::string(raw);
  }
  std::vector<std::pair<std::string, std::string>> tiers;
  for (auto line : split(raw, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '\t' || line.front() == ' ') {
      if (!tiers.empty()) tiers.back().second += " " + line;
      continue;
    }
    if (line.front() == '*' || line.front() == '%' || line.front() == '@') {
      const auto colon = line.find(':');
      const auto name = colon == std::string::npos ? line : line.substr(0, colon);
      const auto body = colon == std::string::npos ? std::string{} : line.substr(colon + 1);
      tiers.emplace_back(name, body);
      continue;
    }
    if (!tiers.empty()) tiers.back().second += " " + line;
  }
  std::string out;
  for (const auto& [name, body] : tiers) {
    if (name != "*PAR") continue;
    auto cleaned = clean_utterance(body);
    if (cleaned.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += cleaned;
  }
  if (out.empty()) {
    throw Error(ErrorKind::EmptyTranscript, "no participant speech after CHAT stripping");
  }
  return out;
}

Corpus load_manifest(const std::filesystem::path& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw Error(ErrorKind::MalformedInput, "manifest is empty: " + path.string());
  const auto& header = rows.front();
  static const std::vector<std::string> kRequired{"id", "label", "split", "transcript_path"};
  if (header.size() < kRequired.size() ||
      !std::equal(kRequired.begin(), kRequired.end(), header.begin(),
                  [](const std::string& want, const std::string& got) { return want == trim(got); })) {
    throw Error(ErrorKind::MalformedInput,
                "manifest header must start with id,label,split,transcript_path");
  }
  const auto base = path.parent_path();
  std::vector<Transcript> transcripts;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = r + 1;
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() != header.size()) {
      throw Error(ErrorKind::MalformedInput,
                  manifest_error(line, "expected " + std::to_string(header.size()) +
                                           " columns, found " + std::to_string(row.size())));
    }
    const auto id = trim(row[0]);
    if (id.empty()) throw Error(ErrorKind::MalformedInput, manifest_error(line, "empty id"));
    if (!seen.insert(id).second) {
      throw Error(ErrorKind::DuplicateId, manifest_error(line, "duplicate id \"" + id + "\""));
    }
    const auto label = parse_label_name(row[1]);
    if (!label) {
      throw Error(ErrorKind::UnknownLabel, manifest_error(line, "unknown label \"" + row[1] + "\""));
    }
    const auto split_value = parse_split_name(row[2]);
    if (!split_value) {
      throw Error(ErrorKind::UnknownSplit, manifest_error(line, "unknown split \"" + row[2] + "\""));
    }
    std::filesystem::path tpath = trim(row[3]);
    if (tpath.is_relative()) tpath = base / tpath;
    std::string raw;
    try {
      raw = read_file(tpath);
    } catch (const Error&) {
      throw Error(ErrorKind::UnreadableFile,
                  manifest_error(line, "cannot read transcript " + tpath.string()));
    }
    std::string text;
    try {
      text = parse_chat(raw);
    } catch (const Error& e) {
      throw Error(e.kind(), manifest_error(line, e.what()));
    }
    auto t = make_transcript(id, *label, *split_value, std::move(text));
    for (std::size_t c = kRequired.size(); c < header.size(); ++c) {
      t.metadata[trim(header[c])] = trim(row[c]);
    }
    transcripts.push_back(std::move(t));
  }
  return Corpus(std::move(transcripts));
}

std::vector<Transcript> split_view(const Corpus& corpus, Split split) {
  std::vector<Transcript> out;
  for (const auto& t : corpus.transcripts()) {
    if (t.split == split) out.push_back(t);
  }
  std::sort(out.begin(), out.end(),
            [](const Transcript& a, const Transcript& b) { return a.id < b.id; });
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = mean(values);
  s.std = sample_std(values);
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

std::vector<GroupStats> corpus_stats(const Corpus& corpus) {
  std::vector<GroupStats> out;
  for (auto split_value : {Split::Train, Split::Validation, Split::Test}) {
    for (auto label : {Label::Case, Label::Control}) {
      GroupStats g{split_value, label, 0, {}};
      std::vector<double> words;
      std::map<std::string, std::vector<double>> numeric;
      std::set<std::string> unparsable;
      for (const auto& t : corpus.transcripts()) {
        if (t.split != split_value || t.label != label) continue;
        words.push_back(static_cast<double>(t.word_count));
        for (const auto& [key, value] : t.metadata) {
          double v = 0.0;
          const auto* first = value.data();
          const auto* last = value.data() + value.size();
          auto [ptr, ec] = std::from_chars(first, last, v);
          if (ec == std::errc{} && ptr == last && !value.empty()) {
            numeric[key].push_back(v);
          } else {
            unparsable.insert(key);
          }
        }
      }
      g.n = words.size();
      g.attributes["word_count"] = summarize(words);
      for (const auto& [key, values] : numeric) {
        if (!unparsable.contains(key) && values.size() == g.n) g.attributes[key] = summarize(values);
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace cogscreen::corpus
