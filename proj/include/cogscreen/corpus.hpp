#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cogscreen/types.hpp"

namespace cogscreen::corpus {

struct Transcript {
  std::string id;
  Label label = Label::Control;
  Split split = Split::Train;
  std::string text;  // participant speech only
  std::size_t word_count = 0;
  // Optional manifest columns (age, sex, mmse, recording_len, ...) kept verbatim.
  std::map<std::string, std::string> metadata;
};

// Builds a transcript whose word_count is taken from the lingfeat tokenizer.
Transcript make_transcript(std::string id, Label label, Split split, std::string text);

// Immutable after construction. Ids are unique across all splits.
class Corpus {
 public:
  Corpus() = default;
  // Throws DuplicateId.
  explicit Corpus(std::vector<Transcript> transcripts);

  const std::vector<Transcript>& transcripts() const { return transcripts_; }
  std::size_t size() const { return transcripts_.size(); }
  std::size_t count(Split split) const;
  std::size_t count(Split split, Label label) const;

 private:
  std::vector<Transcript> transcripts_;
};

// Strips a CHAT transcript down to participant (*PAR) speech:
//   @ headers, % dependent tiers, other speakers     dropped
//   timing bullets (\x15...\x15), [bracketed codes]  dropped
//   < > retrace grouping marks                       dropped, words kept
//   &-um / &+fragment / &um                          um / fragment / um
//   &=event, (.) pauses, xxx/yyy/www, 0word          dropped
//   +... +/. and other + terminators                 final . ? or !
//   word@o, (be)cause, wa:ter                        word, because, water
// Text without tier markers is returned unchanged. Throws EmptyTranscript
// when nothing remains.
std::string parse_chat(std::string_view raw);

// CSV manifest: id,label,split,transcript_path[,extra columns...]. Relative
// transcript paths resolve against the manifest's directory.
Corpus load_manifest(const std::filesystem::path& path);

// Transcripts of one split sorted by id.
std::vector<Transcript> split_view(const Corpus& corpus, Split split);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // n-1 denominator, 0 when n < 2
  double min = 0.0;
  double max = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct GroupStats {
  Split split;
  Label label;
  std::size_t n = 0;
  // "word_count" always; numeric metadata columns (age, mmse, ...) when every
  // transcript in the group carries a parsable value.
  std::map<std::string, Summary> attributes;
};

// One row per split x label, in Train/Validation/Test, Case/Control order.
std::vector<GroupStats> corpus_stats(const Corpus& corpus);

}  // namespace cogscreen::corpus
