#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cogscreen/chat.hpp"
#include "cogscreen/corpus.hpp"
#include "cogscreen/metrics.hpp"
#include "cogscreen/types.hpp"

namespace cogscreen::llmjudge {

// The classification instruction, reproduced word for word.
std::string_view instruction_text();
std::string_view format_reminder();

// Instruction, a blank line, then the transcript. Throws EmptyTranscript.
std::string build_classification_prompt(std::string_view transcript_text);

// nullopt means Unparseable. Accepts the first JSON object (single quotes and
// code fences tolerated), a `label: X` pattern, or a bare AD/Healthy word
// when exactly one of the two appears and is not negated. Never throws.
std::optional<Label> parse_label(std::string_view raw);

struct JudgeConfig {
  std::string provider;  // adapter name; "openai" selects the GPT temperature
  std::string model;
  std::optional<double> temperature;  // overrides the policy when set
  int max_retries = 2;                // re-asks after an unparseable reply
  int max_tokens = 32;
  std::size_t max_in_flight = 4;  // concurrent transcripts in evaluate_judge

  double effective_temperature() const;
  void validate() const;
};

// 0.7 for GPT-family models, 0 for open-weight ones.
double policy_temperature(std::string_view provider, std::string_view model);

JudgeConfig judge_config_from_json(const nlohmann::json& j);

struct JudgeVerdict {
  std::string id;
  std::string raw_response;  // last reply
  std::optional<Label> parsed;
  double latency_s = 0.0;  // summed over attempts
  int attempts = 0;
};

JudgeVerdict judge(chat::ChatClient& client, const JudgeConfig& cfg, const corpus::Transcript& transcript);

struct JudgeEvaluation {
  std::vector<JudgeVerdict> verdicts;
  metrics::EvalReport report;
};

// Unparseable replies count as misclassified; their rate is reported as
// "unparseable_rate". Transcripts are judged concurrently (the client must be
// thread-safe); verdicts keep input order. Throws EmptySplit.
JudgeEvaluation evaluate_judge(chat::ChatClient& client, const JudgeConfig& cfg,
                               const std::vector<corpus::Transcript>& transcripts, const std::string& dataset = "");

// Hard predictions with unparseable replies mapped to the wrong class.
std::vector<metrics::ScoredPrediction> judge_predictions(const std::vector<JudgeVerdict>& verdicts,
                                                         const std::vector<corpus::Transcript>& transcripts);

// Audit log without latencies, so equal replies give equal files.
std::string verdicts_jsonl(const std::vector<JudgeVerdict>& verdicts, const std::vector<corpus::Transcript>& transcripts);
std::string latencies_json(const std::vector<JudgeVerdict>& verdicts);

}  // namespace cogscreen::llmjudge
