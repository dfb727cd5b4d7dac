#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cogscreen/chat.hpp"
#include "cogscreen/corpus.hpp"
#include "cogscreen/types.hpp"

namespace cogscreen::augment {

inline constexpr std::size_t kRoleCount = 10;

const std::array<std::string_view, kRoleCount>& personas();
std::string_view task_text();
std::string_view cue_block(Label label);
// Phrases that reveal a target label; inference prompts must avoid all of them.
const std::vector<std::string>& cue_lexicon();
// The subset describing speech characteristics, without label names such as
// "healthy"; classification prompts must avoid these.
const std::vector<std::string>& linguistic_cue_lexicon();
// Case-insensitive whole-word matches of lexicon phrases in text ('*' ends a
// prefix entry).
std::vector<std::string> cue_hits(std::string_view text);
std::vector<std::string> cue_hits(std::string_view text, const std::vector<std::string>& lexicon);

// Persona + constant task + the label's cue block. Throws InvalidArgument for
// role_index >= 10.
std::string build_finetune_prompt(Label label, std::size_t role_index);
// User turn paired with the fine-tune system prompt.
std::string_view generation_request();
// Neutral persona and picture-description request with no label cues.
std::string build_inference_prompt();

struct FinetuneRecord {
  std::string id;
  Label label = Label::Control;
  std::size_t role_index = 0;
  std::string system;
  std::string user;
  std::string assistant;
};

// Train split in id order, roles assigned round-robin.
std::vector<FinetuneRecord> finetune_records(const corpus::Corpus& corpus);
std::string finetune_jsonl(const std::vector<FinetuneRecord>& records);
// Throws EmptySplit when there are no training transcripts.
void export_finetune_dataset(const corpus::Corpus& corpus, const std::filesystem::path& path);

// QLoRA settings of an external fine-tuning run; recorded, never executed here.
struct FinetuneRecipe {
  std::optional<int> rank;
  std::optional<int> alpha;
  std::optional<double> dropout;
  int effective_batch = 8;
  int epochs = 1;
};

struct GeneratorConfig {
  std::string name;      // preset key
  std::string provider;  // adapter name
  std::string model;
  chat::Sampling sampling;
  std::optional<FinetuneRecipe> finetune;

  void validate() const;
};

// llama-3.1-8b, medalpaca-7b, ministral-8b, llama-3.3-70b, gpt-4o.
const std::map<std::string, GeneratorConfig>& generator_presets();
const GeneratorConfig& generator_preset(const std::string& name);

nlohmann::ordered_json to_json(const GeneratorConfig& cfg);
// Starts from the preset named by "preset" when given, then applies overrides.
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

struct Verdict {
  bool accepted = false;
  std::string reason;  // empty | too_short | too_long | duplicate | near_duplicate
};

struct ValidatorConfig {
  std::size_t min_words = 10;
  std::size_t max_words = 600;
  double near_duplicate_jaccard = 0.8;
};

// Keeps the accepted set; validate() records a sample when it accepts it.
class SampleValidator {
 public:
  explicit SampleValidator(ValidatorConfig cfg = {}) : cfg_(cfg) {}
  Verdict validate(std::string_view text);
  const ValidatorConfig& config() const { return cfg_; }

 private:
  ValidatorConfig cfg_;
  std::set<std::string> hashes_;
  std::vector<std::set<std::string>> shingles_;
};

double fourgram_jaccard(std::string_view a, std::string_view b);

// How the target label reaches the generator.
enum class ConditioningMode {
  Neutral,      // fine-tuned endpoint; neutral prompt plus a label channel
  CuePrompted,  // label cue block in the prompt, standing in for a fine-tuned model
};

// For Neutral mode: either a system line naming the label or one fine-tuned
// model per label.
enum class LabelChannel { SystemTag, PerLabelModel };

std::string_view to_string(ConditioningMode mode);
std::string_view to_string(LabelChannel channel);

struct GenerationPlan {
  GeneratorConfig generator;
  std::size_t n = 0;
  double case_fraction = 0.5;
  ConditioningMode mode = ConditioningMode::CuePrompted;
  LabelChannel channel = LabelChannel::SystemTag;
  std::map<Label, std::string> per_label_model;  // for PerLabelModel
  std::size_t retry_budget = 20;  // extra requests allowed across the whole run
  ValidatorConfig validator;
  std::string id_prefix = "syn";
};

struct SyntheticSample {
  std::string id;
  std::string text;
  Label target_label = Label::Control;
  std::optional<std::size_t> role_index;  // absent for neutral prompts
  bool accepted = false;
  std::string reason;
  std::string content_hash;
  std::size_t attempt = 0;  // request number within the run, 1-based
  std::string model;        // model actually addressed
  std::string prompt_kind;  // finetune-role-N | neutral
};

struct SyntheticCorpus {
  GeneratorConfig generator;
  ConditioningMode mode = ConditioningMode::CuePrompted;
  LabelChannel channel = LabelChannel::SystemTag;
  std::vector<SyntheticSample> samples;  // every attempt, accepted or not
  std::map<std::string, std::string> timestamps;  // sample id -> UTC ISO-8601

  std::vector<const SyntheticSample*> accepted() const;
  std::size_t count(Label label) const;  // accepted only
};

// Label schedule with round(n * case_fraction) Case entries spread evenly.
std::vector<Label> label_schedule(std::size_t n, double case_fraction);

// Throws RetryBudgetExhausted when rejected samples use up the budget.
SyntheticCorpus generate_synthetic(chat::ChatClient& client, const GenerationPlan& plan);

// JSONL of {id, text, label, status, reason, content_hash, provenance}; no
// timestamps, so equal runs give equal files.
std::string synthetic_jsonl(const SyntheticCorpus& corpus);
SyntheticCorpus synthetic_from_jsonl(std::string_view text);
std::string timestamps_json(const SyntheticCorpus& corpus);

// Real train split plus the first multiplier * |train| accepted samples in
// provenance order; validation and test are copied unchanged. Throws
// InvalidArgument for multipliers outside 1..5 and InsufficientSamples.
corpus::Corpus augment_training_set(const corpus::Corpus& real, const SyntheticCorpus& synth, int multiplier);

}  // namespace cogscreen::augment
