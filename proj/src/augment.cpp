#include "cogscreen/augment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>

#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/tokenizer.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::augment {
namespace {

constexpr std::array<std::string_view, kRoleCount> kPersonas{
    "You are a language and cognition specialist who studies how people talk about everyday scenes.",
    "You are a speech-language pathologist with years of experience recording picture descriptions.",
    "You are a geriatric clinician who often listens to older adults describe drawings during visits.",
    "You are a neuropsychologist who gives picture-description tasks in a memory clinic.",
    "You are a clinical linguist who transcribes unscripted speech for research studies.",
    "You are a memory-clinic nurse who has heard many people describe the same drawing.",
    "You are a cognitive neuroscientist interested in how everyday talk reflects thinking.",
    "You are a research assistant who collects and transcribes spoken picture descriptions.",
    "You are a neurologist who pays close attention to the way patients speak.",
    "You are a conversation analyst who studies natural, unrehearsed talk.",
};

constexpr std::string_view kTask =
    "Describe the Cookie Theft picture the way a person would when asked to tell everything they see going on "
    "in it: the boy on the stool reaching into the cookie jar, the girl beside him, the woman drying dishes, and "
    "the sink running over onto the floor. Write only the speaker's words, as a transcript of spontaneous speech "
    "rather than polished written prose.";

constexpr std::string_view kControlCues =
    "The speaker is cognitively healthy. Use well-formed, varied sentence structures, precise vocabulary, and "
    "ideas that connect smoothly from one part of the picture to the next.";

constexpr std::string_view kCaseCues =
    "The speaker is cognitively impaired. Include filler words such as um and uh, repeated words or phrases, "
    "false starts, vague words in place of specific names, and occasional grammar mistakes.";

constexpr std::string_view kNeutralPersona = "You are an expert in spoken language and picture-description tasks.";

constexpr std::string_view kRequest = "Please give the description now.";

const std::vector<std::string> kLinguisticCues{
    "well-formed", "varied sentence*", "sentence structure*", "precise vocabulary", "smoothly", "filler*",
    "um",          "uh",               "repeat*",             "repetition*",        "false start*", "vague word*",
    "grammar*",    "grammatical*",     "fluent*",             "disfluen*",          "hesitat*",     "slip*",
};

const std::vector<std::string> kCueLexicon = [] {
  std::vector<std::string> all{"cognitively healthy", "cognitively impaired", "healthy", "impair*",
                               "dementia",            "alzheimer*",           "adrd"};
  all.insert(all.end(), kLinguisticCues.begin(), kLinguisticCues.end());
  return all;
}();

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Whole-word phrase match; a trailing '*' allows any word continuation.
bool contains_phrase(const std::string& lower_text, std::string phrase) {
  const bool prefix = !phrase.empty() && phrase.back() == '*';
  if (prefix) phrase.pop_back();
  for (std::size_t pos = lower_text.find(phrase); pos != std::string::npos; pos = lower_text.find(phrase, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(lower_text[pos - 1]);
    const std::size_t end = pos + phrase.size();
    const bool right_ok = prefix || end >= lower_text.size() || !is_word_char(lower_text[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  for (const auto& t : lingfeat::tokenize(text).tokens) {
    if (t.is_word) out.push_back(t.lower);
  }
  return out;
}

std::set<std::string> shingles(std::string_view text) {
  const auto words = lower_words(text);
  std::set<std::string> out;
  for (std::size_t i = 0; i + 4 <= words.size(); ++i) {
    out.insert(words[i] + " " + words[i + 1] + " " + words[i + 2] + " " + words[i + 3]);
  }
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& s : a) inter += b.count(s);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string_view label_tag(Label label) { return label == Label::Case ? "ADRD" : "Healthy"; }

nlohmann::ordered_json sampling_json(const chat::Sampling& s) {
  nlohmann::ordered_json j;
  j["temperature"] = s.temperature;
  j["top_p"] = s.top_p ? nlohmann::ordered_json(*s.top_p) : nlohmann::ordered_json(nullptr);
  j["top_k"] = s.top_k ? nlohmann::ordered_json(*s.top_k) : nlohmann::ordered_json(nullptr);
  return j;
}

chat::Sampling sampling_from_json(const nlohmann::json& j, chat::Sampling base) {
  base.temperature = j.value("temperature", base.temperature);
  if (j.contains("top_p")) base.top_p = j["top_p"].is_null() ? std::nullopt : std::optional<double>(j["top_p"].get<double>());
  if (j.contains("top_k")) base.top_k = j["top_k"].is_null() ? std::nullopt : std::optional<int>(j["top_k"].get<int>());
  return base;
}

GeneratorConfig preset(std::string name, std::string provider, std::string model, std::optional<double> top_p,
                       std::optional<int> top_k, FinetuneRecipe recipe) {
  GeneratorConfig g;
  g.name = std::move(name);
  g.provider = std::move(provider);
  g.model = std::move(model);
  g.sampling = {1.0, top_p, top_k};
  g.finetune = recipe;
  return g;
}

}  // namespace

const std::array<std::string_view, kRoleCount>& personas() { return kPersonas; }
std::string_view task_text() { return kTask; }
std::string_view cue_block(Label label) { return label == Label::Case ? kCaseCues : kControlCues; }
const std::vector<std::string>& cue_lexicon() { return kCueLexicon; }
std::string_view generation_request() { return kRequest; }

const std::vector<std::string>& linguistic_cue_lexicon() { return kLinguisticCues; }

std::vector<std::string> cue_hits(std::string_view text) { return cue_hits(text, kCueLexicon); }

std::vector<std::string> cue_hits(std::string_view text, const std::vector<std::string>& lexicon) {
  const auto lower = to_lower(text);
  std::vector<std::string> hits;
  for (const auto& phrase : lexicon) {
    if (contains_phrase(lower, phrase)) hits.push_back(phrase);
  }
  return hits;
}

std::string build_finetune_prompt(Label label, std::size_t role_index) {
  if (role_index >= kRoleCount) {
    throw Error(ErrorKind::InvalidArgument, "role index " + std::to_string(role_index) + " is outside 0..9");
  }
  return std::string(kPersonas[role_index]) + "\n\n" + std::string(kTask) + "\n\n" + std::string(cue_block(label));
}

std::string build_inference_prompt() { return std::string(kNeutralPersona) + "\n\n" + std::string(kTask); }

std::vector<FinetuneRecord> finetune_records(const corpus::Corpus& corpus) {
  const auto train = corpus::split_view(corpus, Split::Train);
  std::vector<FinetuneRecord> out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto role = i % kRoleCount;
    out.push_back({train[i].id, train[i].label, role, build_finetune_prompt(train[i].label, role),
                   std::string(kRequest), train[i].text});
  }
  return out;
}

std::string finetune_jsonl(const std::vector<FinetuneRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["label"] = to_string(r.label);
    j["role_index"] = r.role_index;
    j["system"] = r.system;
    j["user"] = r.user;
    j["assistant"] = r.assistant;
    out += j.dump() + "\n";
  }
  return out;
}

void export_finetune_dataset(const corpus::Corpus& corpus, const std::filesystem::path& path) {
  const auto records = finetune_records(corpus);
  if (records.empty()) throw Error(ErrorKind::EmptySplit, "no training transcripts to export");
  write_file(path, finetune_jsonl(records));
}

void GeneratorConfig::validate() const {
  if (model.empty()) throw Error(ErrorKind::ConfigError, "generator " + name + " has no model");
  if (!(sampling.temperature > 0.0)) throw Error(ErrorKind::ConfigError, "generation temperature must be positive");
  if (sampling.top_p && !(*sampling.top_p > 0.0 && *sampling.top_p <= 1.0)) {
    throw Error(ErrorKind::ConfigError, "top_p must lie in (0,1]");
  }
  if (sampling.top_k && *sampling.top_k < 1) throw Error(ErrorKind::ConfigError, "top_k must be positive");
}

const std::map<std::string, GeneratorConfig>& generator_presets() {
  static const std::map<std::string, GeneratorConfig> presets = [] {
    std::map<std::string, GeneratorConfig> m;
    auto add = [&m](GeneratorConfig g) { m.emplace(g.name, std::move(g)); };
    add(preset("llama-3.1-8b", "openai-compatible", "meta-llama/Llama-3.1-8B-Instruct", 0.95, 50,
               {64, 128, 0.1, 8, 12}));
    add(preset("medalpaca-7b", "openai-compatible", "medalpaca/medalpaca-7b", 0.95, 50, {128, 256, 0.1, 8, 6}));
    add(preset("ministral-8b", "openai-compatible", "mistralai/Ministral-8B-Instruct-2410", std::nullopt, 50,
               {32, 64, 0.0, 8, 10}));
    add(preset("llama-3.3-70b", "openai-compatible", "meta-llama/Llama-3.3-70B-Instruct", 0.95, 50,
               {16, 32, 0.0, 8, 9}));
    add(preset("gpt-4o", "openai", "gpt-4o", std::nullopt, std::nullopt,
               {std::nullopt, std::nullopt, std::nullopt, 20, 10}));
    return m;
  }();
  return presets;
}

const GeneratorConfig& generator_preset(const std::string& name) {
  const auto& p = generator_presets();
  const auto it = p.find(to_lower(name));
  if (it == p.end()) throw Error(ErrorKind::ConfigError, "unknown generator preset " + name);
  return it->second;
}

nlohmann::ordered_json to_json(const GeneratorConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  j["provider"] = cfg.provider;
  j["model"] = cfg.model;
  j["sampling"] = sampling_json(cfg.sampling);
  if (cfg.finetune) {
    const auto& f = *cfg.finetune;
    nlohmann::ordered_json r;
    r["qlora_rank"] = f.rank ? nlohmann::ordered_json(*f.rank) : nlohmann::ordered_json(nullptr);
    r["qlora_alpha"] = f.alpha ? nlohmann::ordered_json(*f.alpha) : nlohmann::ordered_json(nullptr);
    r["qlora_dropout"] = f.dropout ? nlohmann::ordered_json(*f.dropout) : nlohmann::ordered_json(nullptr);
    r["effective_batch"] = f.effective_batch;
    r["epochs"] = f.epochs;
    j["finetune"] = std::move(r);
  } else {
    j["finetune"] = nullptr;
  }
  return j;
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig g;
  if (j.contains("preset")) g = generator_preset(j["preset"].get<std::string>());
  g.name = j.value("name", g.name);
  g.provider = j.value("provider", g.provider);
  g.model = j.value("model", g.model);
  if (j.contains("sampling")) g.sampling = sampling_from_json(j["sampling"], g.sampling);
  if (j.contains("finetune")) {
    if (j["finetune"].is_null()) {
      g.finetune.reset();
    } else {
      const auto& f = j["finetune"];
      FinetuneRecipe r = g.finetune.value_or(FinetuneRecipe{});
      auto opt_int = [&f](const char* key, std::optional<int> cur) {
        if (!f.contains(key)) return cur;
        return f[key].is_null() ? std::nullopt : std::optional<int>(f[key].get<int>());
      };
      r.rank = opt_int("qlora_rank", r.rank);
      r.alpha = opt_int("qlora_alpha", r.alpha);
      if (f.contains("qlora_dropout")) {
        r.dropout = f["qlora_dropout"].is_null() ? std::nullopt : std::optional<double>(f["qlora_dropout"].get<double>());
      }
      r.effective_batch = f.value("effective_batch", r.effective_batch);
      r.epochs = f.value("epochs", r.epochs);
      g.finetune = r;
    }
  }
  g.validate();
  return g;
}

double fourgram_jaccard(std::string_view a, std::string_view b) { return jaccard(shingles(a), shingles(b)); }

Verdict SampleValidator::validate(std::string_view text) {
  const auto trimmed = trim(text);
  if (trimmed.empty()) return {false, "empty"};
  const auto words = lingfeat::count_words(trimmed);
  if (words < cfg_.min_words) return {false, "too_short"};
  if (words > cfg_.max_words) return {false, "too_long"};
  const auto hash = sha256_hex(trimmed);
  if (hashes_.count(hash) > 0) return {false, "duplicate"};
  auto sh = shingles(trimmed);
  for (const auto& other : shingles_) {
    if (jaccard(sh, other) > cfg_.near_duplicate_jaccard) return {false, "near_duplicate"};
  }
  hashes_.insert(hash);
  shingles_.push_back(std::move(sh));
  return {true, ""};
}

std::string_view to_string(ConditioningMode mode) {
  return mode == ConditioningMode::Neutral ? "neutral" : "cue_prompted";
}

std::string_view to_string(LabelChannel channel) {
  return channel == LabelChannel::SystemTag ? "system_tag" : "per_label_model";
}

std::vector<const SyntheticSample*> SyntheticCorpus::accepted() const {
  std::vector<const SyntheticSample*> out;
  for (const auto& s : samples) {
    if (s.accepted) out.push_back(&s);
  }
  return out;
}

std::size_t SyntheticCorpus::count(Label label) const {
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.accepted && s.target_label == label) ++n;
  }
  return n;
}

std::vector<Label> label_schedule(std::size_t n, double case_fraction) {
  if (!(case_fraction >= 0.0 && case_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "case fraction must lie in [0,1]");
  }
  const auto n_case = static_cast<std::size_t>(std::llround(static_cast<double>(n) * case_fraction));
  std::vector<Label> out;
  std::size_t placed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // Case at slot i when the running quota (i+1) * n_case / n advances.
    const std::size_t quota = (i + 1) * n_case / n;
    if (quota > placed) {
      out.push_back(Label::Case);
      ++placed;
    } else {
      out.push_back(Label::Control);
    }
  }
  return out;
}

SyntheticCorpus generate_synthetic(chat::ChatClient& client, const GenerationPlan& plan) {
  plan.generator.validate();
  if (plan.n == 0) throw Error(ErrorKind::InvalidArgument, "requested sample count must be at least 1");
  SyntheticCorpus corpus;
  corpus.generator = plan.generator;
  corpus.mode = plan.mode;
  corpus.channel = plan.channel;
  SampleValidator validator(plan.validator);
  std::size_t retries_used = 0;
  std::size_t attempt = 0;
  const auto schedule = label_schedule(plan.n, plan.case_fraction);

  for (std::size_t slot = 0; slot < schedule.size(); ++slot) {
    const Label label = schedule[slot];
    for (;;) {
      ++attempt;
      chat::ChatRequest req;
      req.sampling = plan.generator.sampling;
      req.model = plan.generator.model;
      SyntheticSample s;
      s.target_label = label;
      if (plan.mode == ConditioningMode::CuePrompted) {
        const auto role = slot % kRoleCount;
        s.role_index = role;
        s.prompt_kind = "finetune-role-" + std::to_string(role);
        req.messages.push_back({"system", build_finetune_prompt(label, role)});
      } else {
        s.prompt_kind = "neutral";
        req.messages.push_back({"system", build_inference_prompt()});
        if (plan.channel == LabelChannel::SystemTag) {
          req.messages.push_back({"system", "Label: " + std::string(label_tag(label))});
        } else {
          const auto it = plan.per_label_model.find(label);
          if (it == plan.per_label_model.end() || it->second.empty()) {
            throw Error(ErrorKind::ConfigError, "no fine-tuned model configured for label " + std::string(to_string(label)));
          }
          req.model = it->second;
        }
      }
      req.messages.push_back({"user", std::string(kRequest)});
      const auto reply = client.complete(req);

      s.text = trim(reply.content);
      s.attempt = attempt;
      s.model = req.model;
      s.content_hash = s.text.empty() ? "" : sha256_hex(s.text);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04zu", plan.id_prefix.c_str(), attempt);
      s.id = id;
      const auto verdict = validator.validate(s.text);
      s.accepted = verdict.accepted;
      s.reason = verdict.reason;
      corpus.timestamps[s.id] = utc_now();
      corpus.samples.push_back(s);
      if (verdict.accepted) break;
      spdlog::info("sample {} rejected ({})", s.id, verdict.reason);
      if (++retries_used > plan.retry_budget) {
        throw Error(ErrorKind::RetryBudgetExhausted,
                    "retry budget of " + std::to_string(plan.retry_budget) + " exhausted after " +
                        std::to_string(corpus.accepted().size()) + " accepted samples");
      }
    }
  }
  return corpus;
}

std::string synthetic_jsonl(const SyntheticCorpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["text"] = s.text;
    j["label"] = to_string(s.target_label);
    j["status"] = s.accepted ? "accepted" : "rejected";
    j["reason"] = s.reason;
    j["content_hash"] = s.content_hash;
    nlohmann::ordered_json p;
    p["generator"] = corpus.generator.name;
    p["provider"] = corpus.generator.provider;
    p["model"] = s.model;
    p["sampling"] = sampling_json(corpus.generator.sampling);
    p["mode"] = to_string(corpus.mode);
    if (corpus.mode == ConditioningMode::Neutral) p["channel"] = to_string(corpus.channel);
    p["prompt"] = s.prompt_kind;
    p["role_index"] = s.role_index ? nlohmann::ordered_json(*s.role_index) : nlohmann::ordered_json(nullptr);
    p["attempt"] = s.attempt;
    j["provenance"] = std::move(p);
    out += j.dump() + "\n";
  }
  return out;
}

SyntheticCorpus synthetic_from_jsonl(std::string_view text) {
  SyntheticCorpus c;
  std::size_t line_no = 0;
  bool first = true;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SyntheticSample s;
      s.id = j.at("id").get<std::string>();
      s.text = j.at("text").get<std::string>();
      const auto label = parse_label_name(j.at("label").get<std::string>());
      if (!label) throw Error(ErrorKind::UnknownLabel, "unknown label " + j.at("label").dump());
      s.target_label = *label;
      s.accepted = j.at("status").get<std::string>() == "accepted";
      s.reason = j.value("reason", "");
      s.content_hash = j.value("content_hash", "");
      const auto& p = j.at("provenance");
      s.model = p.value("model", "");
      s.prompt_kind = p.value("prompt", "");
      if (p.contains("role_index") && !p["role_index"].is_null()) s.role_index = p["role_index"].get<std::size_t>();
      s.attempt = p.value("attempt", std::size_t{0});
      if (first) {
        const auto name = p.value("generator", "");
        const auto& presets = generator_presets();
        if (presets.count(name) > 0) c.generator = presets.at(name);
        c.generator.name = name;
        c.generator.provider = p.value("provider", "");
        c.generator.model = s.model;
        if (p.contains("sampling")) c.generator.sampling = sampling_from_json(p["sampling"], c.generator.sampling);
        c.mode = p.value("mode", "") == "neutral" ? ConditioningMode::Neutral : ConditioningMode::CuePrompted;
        c.channel = p.value("channel", "") == "per_label_model" ? LabelChannel::PerLabelModel : LabelChannel::SystemTag;
        first = false;
      }
      c.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedInput, "synthetic corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

std::string timestamps_json(const SyntheticCorpus& corpus) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& s : corpus.samples) {
    const auto it = corpus.timestamps.find(s.id);
    if (it != corpus.timestamps.end()) j[s.id] = it->second;
  }
  return j.dump(1) + "\n";
}

corpus::Corpus augment_training_set(const corpus::Corpus& real, const SyntheticCorpus& synth, int multiplier) {
  if (multiplier < 1 || multiplier > 5) {
    throw Error(ErrorKind::InvalidArgument, "multiplier must be between 1 and 5, got " + std::to_string(multiplier));
  }
  const auto n_train = real.count(Split::Train);
  const auto needed = static_cast<std::size_t>(multiplier) * n_train;
  const auto accepted = synth.accepted();
  if (accepted.size() < needed) {
    throw Error(ErrorKind::InsufficientSamples, "need " + std::to_string(needed) + " accepted synthetic samples, have " +
                                                    std::to_string(accepted.size()));
  }
  std::vector<corpus::Transcript> merged = real.transcripts();
  for (std::size_t i = 0; i < needed; ++i) {
    auto t = corpus::make_transcript(accepted[i]->id, accepted[i]->target_label, Split::Train, accepted[i]->text);
    t.metadata["source"] = "synthetic";
    t.metadata["generator"] = synth.generator.name;
    merged.push_back(std::move(t));
  }
  return corpus::Corpus(std::move(merged));
}

}  // namespace cogscreen::augment
