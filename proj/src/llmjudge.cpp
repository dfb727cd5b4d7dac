#include "cogscreen/llmjudge.hpp"

#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::llmjudge {
namespace {

constexpr std::string_view kInstruction =
    "You are an expert in cognitive health and language analysis. You will analyze a spoken language transcript "
    "from a person describing the 'cookie theft' picture. This is not written text but a transcription of "
    "spontaneous speech. Analyze the provided transcript and classify it into one of two categories: 'Healthy' "
    "for a healthy cognitive state or 'AD' for Alzheimer's disease. Provide only the label ('Healthy' or 'AD') as "
    "the output. Do not include explanations or additional text. The output should be in JSON format, like "
    "{'label': 'predicted label'}.";

constexpr std::string_view kReminder =
    "Reply with a single JSON object and nothing else: {\"label\": \"Healthy\"} or {\"label\": \"AD\"}.";

std::optional<Label> map_label(std::string_view value) {
  std::string v;
  for (char c : value) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '\'') {
      v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  v = trim(v);
  if (v == "ad" || v == "adrd" || v == "alzheimer's disease" || v == "alzheimers disease") return Label::Case;
  if (v == "healthy") return Label::Control;
  return std::nullopt;
}

// First balanced {...} span, ignoring braces inside quoted strings.
std::optional<std::string> first_object(std::string_view s) {
  const auto start = s.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  char quote = 0;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return std::string(s.substr(start, i - start + 1));
  }
  return std::nullopt;
}

std::optional<Label> from_json_object(const std::string& obj) {
  for (const auto& candidate : {obj, [&] {
         std::string swapped = obj;
         for (auto& c : swapped) {
           if (c == '\'') c = '"';
         }
         return swapped;
       }()}) {
    const auto j = nlohmann::json::parse(candidate, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    for (const auto& [key, value] : j.items()) {
      if (to_lower(key) == "label" && value.is_string()) return map_label(value.get<std::string>());
    }
  }
  return std::nullopt;
}

bool negated_before(const std::string& lower, std::size_t pos) {
  static const std::regex neg(R"((\bnot|\bno|n't)\s+(an?\s+)?(\w+\s+)?$)");
  const auto window = lower.substr(pos >= 24 ? pos - 24 : 0, pos >= 24 ? 24 : pos);
  return std::regex_search(window, neg);
}

}  // namespace

std::string_view instruction_text() { return kInstruction; }
std::string_view format_reminder() { return kReminder; }

std::string build_classification_prompt(std::string_view transcript_text) {
  if (trim(transcript_text).empty()) throw Error(ErrorKind::EmptyTranscript, "cannot classify an empty transcript");
  return std::string(kInstruction) + "\n\n" + std::string(transcript_text);
}

std::optional<Label> parse_label(std::string_view raw) {
  try {
    if (const auto obj = first_object(raw)) {
      if (const auto l = from_json_object(*obj)) return l;
    }
    const std::string text(raw);
    static const std::regex keyed(R"(["']?label["']?\s*[:=]\s*["']?([A-Za-z' ]+?)["'}\s,.]*(?:$|[}\n,]))",
                                  std::regex::icase);
    std::smatch m;
    if (std::regex_search(text, m, keyed)) {
      if (const auto l = map_label(m[1].str())) return l;
    }
    const auto lower = to_lower(text);
    static const std::regex word(R"(\b(adrd|ad|healthy)\b)");
    bool saw_case = false, saw_control = false, negated = false;
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), word); it != std::sregex_iterator(); ++it) {
      const auto w = (*it)[1].str();
      if (w == "healthy") saw_control = true;
      else saw_case = true;
      if (negated_before(lower, static_cast<std::size_t>(it->position(0)))) negated = true;
    }
    if (saw_case != saw_control && !negated) return saw_case ? Label::Case : Label::Control;
  } catch (...) {
    // Unparseable by definition.
  }
  return std::nullopt;
}

double policy_temperature(std::string_view provider, std::string_view model) {
  const auto p = to_lower(provider);
  const auto m = to_lower(model);
  const bool gpt = p == "openai" || p == "azure-openai" || m.rfind("gpt", 0) == 0;
  return gpt ? 0.7 : 0.0;
}

double JudgeConfig::effective_temperature() const {
  return temperature ? *temperature : policy_temperature(provider, model);
}

void JudgeConfig::validate() const {
  if (model.empty()) throw Error(ErrorKind::ConfigError, "judge model is not set");
  const double t = effective_temperature();
  if (!(t >= 0.0 && t <= 2.0)) throw Error(ErrorKind::ConfigError, "judge temperature must lie in [0,2]");
  if (max_retries < 0) throw Error(ErrorKind::ConfigError, "max_retries must be non-negative");
  if (max_tokens < 1) throw Error(ErrorKind::ConfigError, "max_tokens must be positive");
  if (max_in_flight < 1) throw Error(ErrorKind::ConfigError, "max_in_flight must be positive");
}

JudgeConfig judge_config_from_json(const nlohmann::json& j) {
  JudgeConfig c;
  c.provider = j.value("provider", std::string("openai-compatible"));
  c.model = j.at("model").get<std::string>();
  if (j.contains("temperature") && !j["temperature"].is_null()) c.temperature = j["temperature"].get<double>();
  c.max_retries = j.value("max_retries", c.max_retries);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.validate();
  return c;
}

JudgeVerdict judge(chat::ChatClient& client, const JudgeConfig& cfg, const corpus::Transcript& transcript) {
  cfg.validate();
  JudgeVerdict v;
  v.id = transcript.id;
  const auto prompt = build_classification_prompt(transcript.text);
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    chat::ChatRequest req;
    req.model = cfg.model;
    req.sampling.temperature = cfg.effective_temperature();
    req.max_tokens = cfg.max_tokens;
    req.messages.push_back({"user", attempt == 0 ? prompt : prompt + "\n\n" + std::string(kReminder)});
    const auto reply = client.complete(req);
    ++v.attempts;
    v.latency_s += reply.latency_s;
    v.raw_response = reply.content;
    v.parsed = parse_label(reply.content);
    if (v.parsed) break;
  }
  if (!v.parsed) spdlog::warn("{}: unparseable judge reply after {} attempt(s)", v.id, v.attempts);
  return v;
}

std::vector<metrics::ScoredPrediction> judge_predictions(const std::vector<JudgeVerdict>& verdicts,
                                                         const std::vector<corpus::Transcript>& transcripts) {
  if (verdicts.size() != transcripts.size()) throw Error(ErrorKind::InvalidArgument, "verdict count mismatch");
  std::vector<metrics::ScoredPrediction> out;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto truth = transcripts[i].label;
    const Label predicted = verdicts[i].parsed ? *verdicts[i].parsed
                                               : (truth == Label::Case ? Label::Control : Label::Case);
    out.push_back({transcripts[i].id, truth, predicted == Label::Case ? 1.0 : 0.0, 0});
  }
  return out;
}

JudgeEvaluation evaluate_judge(chat::ChatClient& client, const JudgeConfig& cfg,
                               const std::vector<corpus::Transcript>& transcripts, const std::string& dataset) {
  if (transcripts.empty()) throw Error(ErrorKind::EmptySplit, "no transcripts to judge");
  cfg.validate();
  JudgeEvaluation e;
  e.verdicts.resize(transcripts.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < transcripts.size(); i = next++) {
      try {
        e.verdicts[i] = judge(client, cfg, transcripts[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = transcripts.size();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min(cfg.max_in_flight, transcripts.size());
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  const auto preds = judge_predictions(e.verdicts, transcripts);
  const auto c = metrics::confusion_f1(preds);
  std::size_t unparseable = 0;
  for (const auto& v : e.verdicts) unparseable += v.parsed ? 0 : 1;
  std::map<std::string, double> m{
      {"f1", c.f1},
      {"precision", c.precision},
      {"recall", c.recall},
      {"accuracy", static_cast<double>(c.tp + c.tn) / static_cast<double>(preds.size())},
      {"unparseable_rate", static_cast<double>(unparseable) / static_cast<double>(preds.size())},
  };
  e.report.model_kind = "llm-judge";
  e.report.dataset = dataset;
  e.report.per_seed.emplace_back(0, m);
  e.report.aggregate = metrics::aggregate_seeds({m});
  e.report.curves = metrics::standard_curves(preds, "test");
  e.report.predictions = preds;
  e.report.extra["judge"] = {{"provider", cfg.provider},
                             {"model", cfg.model},
                             {"temperature", cfg.effective_temperature()},
                             {"max_retries", cfg.max_retries},
                             {"max_tokens", cfg.max_tokens}};
  return e;
}

std::string verdicts_jsonl(const std::vector<JudgeVerdict>& verdicts, const std::vector<corpus::Transcript>& transcripts) {
  if (verdicts.size() != transcripts.size()) throw Error(ErrorKind::InvalidArgument, "verdict count mismatch");
  std::string out;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    nlohmann::ordered_json j;
    j["id"] = v.id;
    j["true_label"] = to_string(transcripts[i].label);
    j["parsed_label"] = v.parsed ? std::string(to_string(*v.parsed)) : std::string("unparseable");
    j["attempts"] = v.attempts;
    j["raw_response"] = v.raw_response;
    out += j.dump() + "\n";
  }
  return out;
}

std::string latencies_json(const std::vector<JudgeVerdict>& verdicts) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& v : verdicts) j[v.id] = v.latency_s;
  return j.dump(1) + "\n";
}

}  // namespace cogscreen::llmjudge
