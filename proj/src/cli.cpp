#include "cogscreen/cli.hpp"

#include <chrono>
#include <ctime>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <regex>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cogscreen/augment.hpp"
#include "cogscreen/chat.hpp"
#include "cogscreen/corpus.hpp"
#include "cogscreen/embeddings.hpp"
#include "cogscreen/error.hpp"
#include "cogscreen/features.hpp"
#include "cogscreen/lexicon.hpp"
#include "cogscreen/llmjudge.hpp"
#include "cogscreen/metrics.hpp"
#include "cogscreen/net.hpp"
#include "cogscreen/nn.hpp"
#include "cogscreen/postag.hpp"
#include "cogscreen/render.hpp"
#include "cogscreen/textsim.hpp"
#include "cogscreen/tokenizer.hpp"
#include "cogscreen/util.hpp"

#ifndef COGSCREEN_SOURCE_DATA_DIR
#define COGSCREEN_SOURCE_DATA_DIR "data"
#endif

namespace cogscreen::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr int kManifestVersion = 1;

// ---------------------------------------------------------------- config

const json& config_schema() {
  static const json schema = [] {
    const json leaf = nullptr;
    const json train = {{"epochs", leaf},  {"batch_size", leaf}, {"lr", leaf},      {"weight_decay", leaf},
                        {"hidden", leaf},  {"ling_hidden", leaf}, {"dropout", leaf}, {"ling_dropout", leaf}};
    const json chat = {{"url", leaf},          {"token_env", leaf},      {"timeout_s", leaf},
                       {"max_attempts", leaf}, {"base_delay_s", leaf},   {"retry_seed", leaf},
                       {"provider", leaf},     {"supports_top_k", leaf}, {"supports_top_p", leaf},
                       {"requests_per_second", leaf}, {"burst", leaf}};
    return json{
        {"dataset", leaf},
        {"seeds", leaf},
        {"paths",
         {{"manifest", leaf}, {"lexicon", leaf}, {"tagger", leaf}, {"embedding_store", leaf}, {"synthetic", leaf},
          {"out", leaf}}},
        {"embedding", {{"source", leaf}, {"provider", leaf}, {"dim", leaf}, {"seed", leaf}}},
        {"embed_fetch",
         {{"url", leaf}, {"token_env", leaf}, {"timeout_s", leaf}, {"max_attempts", leaf}, {"base_delay_s", leaf},
          {"max_delay_s", leaf}, {"model", leaf}, {"provider", leaf}, {"granularity", leaf}, {"batch_size", leaf},
          {"max_in_flight", leaf}}},
        {"train", {{"embedding", train}, {"linguistic", train}, {"fusion", train}}},
        {"augment",
         {{"generator",
           {{"preset", leaf},
            {"name", leaf},
            {"provider", leaf},
            {"model", leaf},
            {"sampling", {{"temperature", leaf}, {"top_p", leaf}, {"top_k", leaf}}},
            {"finetune",
             {{"qlora_rank", leaf}, {"qlora_alpha", leaf}, {"qlora_dropout", leaf}, {"effective_batch", leaf},
              {"epochs", leaf}}}}},
          {"chat", chat},
          {"mode", leaf},
          {"channel", leaf},
          {"per_label_model", {{"case", leaf}, {"control", leaf}}},
          {"case_fraction", leaf},
          {"retry_budget", leaf},
          {"validator", {{"min_words", leaf}, {"max_words", leaf}, {"near_duplicate_jaccard", leaf}}},
          {"multipliers", leaf},
          {"model", leaf}}},
        {"quality",
         {{"reference_policy", leaf},
          {"idf", leaf},
          {"overlap_k", leaf},
          {"tsne", {{"perplexity", leaf}, {"iterations", leaf}, {"seed", leaf}}}}},
        {"judge",
         {{"provider", leaf}, {"model", leaf}, {"temperature", leaf}, {"max_retries", leaf}, {"max_tokens", leaf},
          {"max_in_flight", leaf}, {"split", leaf}, {"chat", chat}}},
    };
  }();
  return schema;
}

std::string escape_pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

void check_keys(const json& value, const json& schema, const std::string& pointer) {
  if (schema.is_null() || value.is_null()) return;
  if (!value.is_object()) {
    throw Error(ErrorKind::ConfigError, "expected an object at " + (pointer.empty() ? "/" : pointer));
  }
  for (const auto& [key, sub] : value.items()) {
    const auto here = pointer + "/" + escape_pointer_token(key);
    if (!schema.contains(key)) throw Error(ErrorKind::ConfigError, "unknown key at " + here);
    check_keys(sub, schema[key], here);
  }
}

// Runs a section parser and pins nlohmann type errors to the section.
template <typename F>
auto parse_section(const std::string& pointer, F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "invalid value under " + pointer + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw Error(ErrorKind::ConfigError, pointer + ": " + e.what());
    throw;
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- context

struct GlobalOptions {
  std::string config_path;
  std::string seed_list;
  std::string out;
  std::string network = "forbidden";
  std::string log_level = "info";
};

struct Context {
  json raw;     // as written, used for the hash
  json config;  // interpolated
  std::string hash;
  fs::path base_dir;  // relative config paths resolve here
  fs::path out;
  std::vector<std::uint64_t> seeds;
  std::ostream* out_stream = nullptr;

  const json* find(const std::string& pointer) const {
    const json::json_pointer p(pointer);
    if (!config.contains(p)) return nullptr;
    const auto& v = config.at(p);
    return v.is_null() ? nullptr : &v;
  }

  template <typename T>
  T get(const std::string& pointer, T fallback) const {
    const auto* v = find(pointer);
    if (!v) return fallback;
    return parse_section(pointer, [&] { return v->get<T>(); });
  }

  fs::path path(const std::string& pointer, std::optional<fs::path> fallback = std::nullopt) const {
    const auto* v = find(pointer);
    if (!v) {
      if (fallback) return *fallback;
      throw Error(ErrorKind::ConfigError, pointer + " is not set");
    }
    const fs::path p = parse_section(pointer, [&] { return v->get<std::string>(); });
    return p.is_absolute() ? p : base_dir / p;
  }

  std::ostream& out_s() const { return *out_stream; }
};

Context make_context(const GlobalOptions& opt, std::ostream& out) {
  Context ctx;
  ctx.out_stream = &out;
  ctx.raw = json::object();
  ctx.base_dir = fs::current_path();
  if (!opt.config_path.empty()) {
    const fs::path p(opt.config_path);
    const auto text = read_file(p);
    ctx.raw = json::parse(text, nullptr, false);
    if (ctx.raw.is_discarded()) throw Error(ErrorKind::ConfigError, "config is not valid JSON: " + p.string());
    ctx.base_dir = fs::absolute(p).parent_path();
  }
  validate_config(ctx.raw);
  ctx.config = interpolate_env(ctx.raw);
  ctx.hash = config_hash(ctx.raw);

  if (!opt.seed_list.empty()) {
    ctx.seeds = parse_seed_list(opt.seed_list);
  } else if (const auto* s = ctx.find("/seeds")) {
    ctx.seeds = parse_section("/seeds", [&] { return s->get<std::vector<std::uint64_t>>(); });
  } else {
    ctx.seeds = {0, 1, 2, 3, 4};
  }
  if (ctx.seeds.empty()) throw Error(ErrorKind::ConfigError, "seed list is empty");

  if (!opt.out.empty()) ctx.out = fs::absolute(opt.out);
  else ctx.out = ctx.path("/paths/out", fs::current_path() / "out");
  return ctx;
}

// One pipeline stage's output directory, with its run manifest (config hash,
// input and output digests) and a separate provenance file for timestamps.
class Stage {
 public:
  Stage(const Context& ctx, std::string subcommand, fs::path dir, ojson options)
      : ctx_(ctx), subcommand_(std::move(subcommand)), dir_(std::move(dir)), options_(std::move(options)),
        started_(utc_now()) {
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  void input(const std::string& name, const fs::path& path) {
    inputs_[name] = fs::is_regular_file(path) ? sha256_hex(read_file(path)) : std::string("missing");
  }

  void write(const std::string& rel, const std::string& content) {
    const auto p = dir_ / rel;
    fs::create_directories(p.parent_path());
    write_file(p, content);
    outputs_[rel] = sha256_hex(content);
  }

  ojson& provenance() { return provenance_; }

  void finish() {
    ojson m;
    m["format"] = "cogscreen-run";
    m["version"] = kManifestVersion;
    m["subcommand"] = subcommand_;
    m["options"] = options_;
    m["config_sha256"] = ctx_.hash;
    m["seeds"] = ctx_.seeds;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    write_file(dir_ / "run_manifest.json", m.dump(2) + "\n");

    ojson p;
    p["subcommand"] = subcommand_;
    p["started_at"] = started_;
    p["finished_at"] = utc_now();
    for (auto& [k, v] : provenance_.items()) p[k] = v;
    write_file(dir_ / "provenance.json", p.dump(2) + "\n");
  }

 private:
  const Context& ctx_;
  std::string subcommand_;
  fs::path dir_;
  ojson options_;
  std::string started_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  ojson provenance_ = ojson::object();
};

// ---------------------------------------------------------------- shared loaders

corpus::Corpus load_corpus(const Context& ctx, Stage* stage) {
  const auto manifest = ctx.path("/paths/manifest");
  if (stage) stage->input("manifest", manifest);
  return corpus::load_manifest(manifest);
}

std::string dataset_name(const Context& ctx) {
  if (const auto* d = ctx.find("/dataset")) return parse_section("/dataset", [&] { return d->get<std::string>(); });
  return ctx.find("/paths/manifest") ? ctx.path("/paths/manifest").stem().string() : std::string("dataset");
}

struct LingResources {
  lingfeat::CategoryLexicon lexicon;
  lingfeat::RuleTagger tagger;
};

LingResources load_ling(const Context& ctx, Stage* stage) {
  const auto lex = ctx.path("/paths/lexicon", default_data_dir() / "lexicon_open.json");
  const auto tag = ctx.path("/paths/tagger", default_data_dir() / "postagger.json");
  if (stage) {
    stage->input("lexicon", lex);
    stage->input("tagger", tag);
  }
  return {lingfeat::CategoryLexicon::load(lex), lingfeat::RuleTagger::load(tag)};
}

// Sentence and token vectors for transcripts, from the offline hashed
// embedder or from a store produced by embed-fetch.
class EmbeddingSource {
 public:
  EmbeddingSource(const Context& ctx, Stage* stage) {
    const auto source = ctx.get<std::string>("/embedding/source", "hashed");
    if (source == "hashed") {
      hashed_.emplace(ctx.get<std::size_t>("/embedding/dim", 64), ctx.get<std::uint64_t>("/embedding/seed", 0));
      provider_ = hashed_->provider();
    } else if (source == "store") {
      const auto path = ctx.path("/paths/embedding_store");
      if (stage) stage->input("embedding_store", path);
      store_ = embeddings::load_store(path);
      provider_ = ctx.get<std::string>("/embedding/provider", "");
      if (provider_.empty()) {
        const auto providers = store_->providers();
        if (providers.size() != 1) {
          throw Error(ErrorKind::ConfigError, "/embedding/provider must name one of the store's providers");
        }
        provider_ = providers.front();
      }
    } else {
      throw Error(ErrorKind::ConfigError, "/embedding/source must be hashed or store");
    }
  }

  const std::string& provider() const { return provider_; }

  embeddings::EmbeddingRecord record(const corpus::Transcript& t, bool tokens) const {
    if (hashed_) return hashed_->embed(t.id, t.text, tokens);
    const auto& r = embeddings::lookup(*store_, provider_, t);
    if (tokens && !r.tokens) {
      throw Error(ErrorKind::MissingKey, "embedding record " + r.key + " has no token vectors");
    }
    return r;
  }

  std::vector<double> sentence(const corpus::Transcript& t) const { return record(t, false).sentence; }

 private:
  std::optional<embeddings::HashedEmbedder> hashed_;
  std::optional<embeddings::EmbeddingStore> store_;
  std::string provider_;
};

nn::Sample make_sample(const corpus::Transcript& t, const LingResources& ling, const EmbeddingSource& emb) {
  nn::Sample s;
  s.id = t.id;
  s.label = t.label;
  s.emb = emb.sentence(t);
  const auto f = lingfeat::extract_features(t, ling.lexicon, ling.tagger);
  s.ling.assign(f.begin(), f.end());
  return s;
}

nn::TrainData make_train_data(const Context& ctx, const corpus::Corpus& c, const LingResources& ling,
                              const EmbeddingSource& emb) {
  nn::TrainData d;
  d.dataset = dataset_name(ctx);
  d.embedding_provider = emb.provider();
  for (const auto& t : corpus::split_view(c, Split::Train)) d.train.push_back(make_sample(t, ling, emb));
  for (const auto& t : corpus::split_view(c, Split::Validation)) d.validation.push_back(make_sample(t, ling, emb));
  for (const auto& t : corpus::split_view(c, Split::Test)) d.test.push_back(make_sample(t, ling, emb));
  return d;
}

nn::TrainConfig train_config(const Context& ctx, nn::ModelKind kind) {
  const auto name = std::string(nn::to_string(kind));
  const auto pointer = "/train/" + name;
  json j = json::object();
  if (const auto* t = ctx.find(pointer)) j = *t;
  j["model_kind"] = name;
  auto cfg = parse_section(pointer, [&] { return nn::train_config_from_json(j); });
  cfg.seeds = ctx.seeds;
  return cfg;
}

nn::ModelKind model_kind(const std::string& name) {
  const auto k = nn::parse_model_kind(name);
  if (!k) throw Error(ErrorKind::ConfigError, "unknown model kind " + name);
  return *k;
}

std::string f1_line(const std::string& what, const metrics::EvalReport& r, const std::string& key) {
  const auto it = r.aggregate.find(key);
  if (it == r.aggregate.end()) return what;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s %s %.4f +/- %.4f", what.c_str(), key.c_str(), it->second.mean, it->second.std);
  return buf;
}

// Trains one model kind and writes report, curves and checkpoints under
// `sub` inside the stage directory.
metrics::EvalReport train_into(const Context& ctx, Stage& stage, const std::string& sub, const nn::TrainData& data,
                               nn::ModelKind kind) {
  const auto cfg = train_config(ctx, kind);
  auto result = nn::train(data, cfg);
  const std::string prefix = sub.empty() ? "" : sub + "/";
  stage.write(prefix + "report.json", metrics::to_json(result.report).dump(2) + "\n");
  stage.write(prefix + "curves.csv", metrics::curves_to_csv(result.report.curves));
  for (const auto& ck : result.checkpoints) {
    stage.write(prefix + "checkpoints/seed-" + std::to_string(ck.seed) + ".json",
                nn::checkpoint_to_json(ck).dump() + "\n");
  }
  return result.report;
}

augment::SyntheticCorpus load_synthetic(const Context& ctx, Stage& stage, const std::string& flag) {
  const fs::path p = flag.empty() ? ctx.path("/paths/synthetic") : fs::absolute(flag);
  stage.input("synthetic", p);
  return augment::synthetic_from_jsonl(read_file(p));
}

// Accepted synthetic samples as transcripts, so embedding and feature code
// can treat them like real ones.
std::vector<corpus::Transcript> synthetic_transcripts(const augment::SyntheticCorpus& s) {
  std::vector<corpus::Transcript> out;
  for (const auto* x : s.accepted()) {
    out.push_back(corpus::make_transcript(x->id, x->target_label, Split::Train, x->text));
  }
  return out;
}

augment::GenerationPlan generation_plan(const Context& ctx) {
  augment::GenerationPlan plan;
  const auto* g = ctx.find("/augment/generator");
  if (!g) throw Error(ErrorKind::ConfigError, "/augment/generator is not set");
  plan.generator = parse_section("/augment/generator", [&] { return augment::generator_config_from_json(*g); });
  const auto mode = ctx.get<std::string>("/augment/mode", "cue_prompted");
  if (mode == "neutral") plan.mode = augment::ConditioningMode::Neutral;
  else if (mode == "cue_prompted") plan.mode = augment::ConditioningMode::CuePrompted;
  else throw Error(ErrorKind::ConfigError, "/augment/mode must be neutral or cue_prompted");
  const auto channel = ctx.get<std::string>("/augment/channel", "system_tag");
  if (channel == "system_tag") plan.channel = augment::LabelChannel::SystemTag;
  else if (channel == "per_label_model") plan.channel = augment::LabelChannel::PerLabelModel;
  else throw Error(ErrorKind::ConfigError, "/augment/channel must be system_tag or per_label_model");
  if (ctx.find("/augment/per_label_model/case")) {
    plan.per_label_model[Label::Case] = ctx.get<std::string>("/augment/per_label_model/case", "");
  }
  if (ctx.find("/augment/per_label_model/control")) {
    plan.per_label_model[Label::Control] = ctx.get<std::string>("/augment/per_label_model/control", "");
  }
  plan.case_fraction = ctx.get<double>("/augment/case_fraction", plan.case_fraction);
  plan.retry_budget = ctx.get<std::size_t>("/augment/retry_budget", plan.retry_budget);
  plan.validator.min_words = ctx.get<std::size_t>("/augment/validator/min_words", plan.validator.min_words);
  plan.validator.max_words = ctx.get<std::size_t>("/augment/validator/max_words", plan.validator.max_words);
  plan.validator.near_duplicate_jaccard =
      ctx.get<double>("/augment/validator/near_duplicate_jaccard", plan.validator.near_duplicate_jaccard);
  return plan;
}

chat::HttpChatConfig chat_config(const Context& ctx, const std::string& pointer) {
  const auto* c = ctx.find(pointer);
  if (!c) throw Error(ErrorKind::ConfigError, pointer + " is not set");
  return parse_section(pointer, [&] { return chat::http_chat_config_from_json(*c); });
}

std::string slug(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.' && c != '_') c = '-';
  }
  return s.empty() ? "unnamed" : s;
}

textsim::Tokens word_tokens(std::string_view text) {
  textsim::Tokens out;
  for (const auto& t : lingfeat::tokenize(text).tokens) {
    if (t.is_word) out.push_back(t.lower);
  }
  return out;
}

ojson bleu_json(const textsim::BleuReport& b) {
  ojson j;
  j["precision"] = std::vector<double>(b.precision.begin(), b.precision.begin() + b.max_n);
  j["score"] = std::vector<double>(b.score.begin(), b.score.begin() + b.max_n);
  j["brevity_penalty"] = b.brevity_penalty;
  j["geometric"] = b.geometric;
  j["candidate_length"] = b.candidate_length;
  j["reference_length"] = b.reference_length;
  return j;
}

// ---------------------------------------------------------------- subcommands

int cmd_ingest(const Context& ctx) {
  Stage stage(ctx, "ingest", ctx.out / "ingest", ojson::object());
  const auto c = load_corpus(ctx, &stage);
  std::string jsonl;
  for (const auto& t : c.transcripts()) {
    ojson j;
    j["id"] = t.id;
    j["label"] = to_string(t.label);
    j["split"] = to_string(t.split);
    j["word_count"] = t.word_count;
    j["text"] = t.text;
    j["metadata"] = t.metadata;
    jsonl += j.dump() + "\n";
  }
  stage.write("corpus.jsonl", jsonl);
  ojson stats = ojson::array();
  for (const auto& g : corpus::corpus_stats(c)) {
    ojson row;
    row["split"] = to_string(g.split);
    row["label"] = to_string(g.label);
    row["n"] = g.n;
    for (const auto& [name, s] : g.attributes) {
      row["attributes"][name] = {{"n", s.n},       {"mean", s.mean},     {"std", s.std}, {"min", s.min},
                                 {"max", s.max},   {"q1", s.q1},         {"median", s.median}, {"q3", s.q3}};
    }
    stats.push_back(row);
  }
  stage.write("stats.json", stats.dump(2) + "\n");
  stage.finish();
  ctx.out_s() << "ingested " << c.size() << " transcripts (train " << c.count(Split::Train) << ", validation "
              << c.count(Split::Validation) << ", test " << c.count(Split::Test) << ")\n";
  return kOk;
}

int cmd_features(const Context& ctx) {
  Stage stage(ctx, "features", ctx.out / "features", ojson::object());
  const auto c = load_corpus(ctx, &stage);
  const auto ling = load_ling(ctx, &stage);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  for (const auto& t : c.transcripts()) {
    ids.push_back(t.id);
    const auto f = lingfeat::extract_features(t, ling.lexicon, ling.tagger);
    rows.emplace_back(f.begin(), f.end());
  }
  stage.write("features.csv", lingfeat::features_to_csv(ids, rows));
  std::string registry = "name,dimension,kind,duplication,definition\n";
  for (const auto& f : lingfeat::feature_registry()) {
    registry += f.name + "," + std::string(lingfeat::to_string(f.dimension)) + "," +
                std::string(lingfeat::to_string(f.kind)) + "," + std::string(lingfeat::to_string(f.duplication)) +
                "," + csv_escape(f.definition) + "\n";
  }
  stage.write("registry.csv", registry);
  stage.finish();
  ctx.out_s() << "extracted " << lingfeat::kFeatureCount << " features for " << ids.size() << " transcripts\n";
  return kOk;
}

int cmd_embed_fetch(const Context& ctx, const std::string& synthetic_flag, bool include_synthetic) {
  Stage stage(ctx, "embed-fetch", ctx.out / "embed", ojson{{"synthetic", include_synthetic}});
  const auto c = load_corpus(ctx, &stage);
  std::vector<corpus::Transcript> items = c.transcripts();
  if (include_synthetic) {
    const auto s = synthetic_transcripts(load_synthetic(ctx, stage, synthetic_flag));
    items.insert(items.end(), s.begin(), s.end());
  }
  const fs::path target = ctx.path("/paths/embedding_store", ctx.out / "embed" / "embeddings.jsonl");
  embeddings::EmbeddingStore store;
  if (fs::is_regular_file(target)) store = embeddings::load_store(target);

  std::size_t added = 0;
  const auto* remote = ctx.find("/embed_fetch");
  if (remote) {
    const auto cfg = parse_section("/embed_fetch", [&] { return embeddings::remote_config_from_json(*remote); });
    std::vector<std::string> texts;
    for (const auto& t : items) {
      if (!store.contains(cfg.provider, embeddings::content_key(t.text))) texts.push_back(t.text);
    }
    if (!texts.empty()) {
      for (auto& r : embeddings::fetch_remote(cfg, texts)) {
        store.add(std::move(r));
        ++added;
      }
    }
  } else {
    const embeddings::HashedEmbedder h(ctx.get<std::size_t>("/embedding/dim", 64),
                                       ctx.get<std::uint64_t>("/embedding/seed", 0));
    for (const auto& t : items) {
      if (store.contains(h.provider(), t.id)) continue;
      store.add(h.embed(t.id, t.text, true));
      ++added;
    }
  }
  fs::create_directories(target.parent_path());
  write_store(store, target);
  stage.provenance()["store"] = target.string();
  stage.finish();
  ctx.out_s() << "embedding store " << target.string() << ": " << store.size() << " records (" << added
              << " new)\n";
  return kOk;
}

int cmd_train(const Context& ctx, const std::string& model) {
  const auto kind = model_kind(model);
  Stage stage(ctx, "train", ctx.out / "train" / model, ojson{{"model", model}});
  const auto c = load_corpus(ctx, &stage);
  const auto ling = load_ling(ctx, &stage);
  const EmbeddingSource emb(ctx, &stage);
  const auto data = make_train_data(ctx, c, ling, emb);
  const auto report = train_into(ctx, stage, "", data, kind);
  stage.finish();
  ctx.out_s() << f1_line(model, report, "test_f1") << "\n";
  return kOk;
}

int cmd_augment_export(const Context& ctx) {
  Stage stage(ctx, "augment-export", ctx.out / "augment", ojson::object());
  const auto c = load_corpus(ctx, &stage);
  const auto records = augment::finetune_records(c);
  if (records.empty()) throw Error(ErrorKind::EmptySplit, "no training transcripts to export");
  stage.write("finetune.jsonl", augment::finetune_jsonl(records));
  stage.finish();
  ctx.out_s() << "exported " << records.size() << " fine-tuning records\n";
  return kOk;
}

int cmd_augment_generate(const Context& ctx, int multiplier, std::size_t n_override) {
  auto plan = generation_plan(ctx);
  const auto dir = ctx.out / "augment" / slug(plan.generator.name);
  Stage stage(ctx, "augment-generate", dir, ojson{{"multiplier", multiplier}, {"n", n_override}});
  const auto c = load_corpus(ctx, &stage);
  const auto n_train = c.count(Split::Train);
  if (n_train == 0) throw Error(ErrorKind::EmptySplit, "no training transcripts");
  if (multiplier < 1 || multiplier > 5) throw Error(ErrorKind::InvalidArgument, "multiplier must lie in 1..5");
  plan.n = n_override > 0 ? n_override : static_cast<std::size_t>(multiplier) * n_train;
  chat::HttpChatClient client(chat_config(ctx, "/augment/chat"));
  const auto synth = augment::generate_synthetic(client, plan);
  const auto name = "synthetic-x" + std::to_string(multiplier) + ".jsonl";
  stage.write(name, augment::synthetic_jsonl(synth));
  stage.provenance()["sample_timestamps"] = ojson::parse(augment::timestamps_json(synth));
  stage.finish();
  ctx.out_s() << "generated " << synth.accepted().size() << " accepted samples (" << synth.samples.size()
              << " attempts) -> " << (dir / name).string() << "\n";
  return kOk;
}

int cmd_augment_sweep(const Context& ctx, const std::string& multipliers_flag, const std::string& synthetic_flag,
                      const std::string& model_flag) {
  const auto multipliers = multipliers_flag.empty()
                               ? ctx.get<std::vector<int>>("/augment/multipliers", {1, 2, 3, 4, 5})
                               : parse_multipliers(multipliers_flag);
  const auto model = model_flag.empty() ? ctx.get<std::string>("/augment/model", "fusion") : model_flag;
  const auto kind = model_kind(model);

  // The directory is named after the synthetic file's generator.
  const fs::path synth_path = synthetic_flag.empty() ? ctx.path("/paths/synthetic") : fs::absolute(synthetic_flag);
  const auto synth = augment::synthetic_from_jsonl(read_file(synth_path));
  Stage stage(ctx, "augment-sweep", ctx.out / "sweep" / slug(synth.generator.name),
              ojson{{"model", model}, {"multipliers", multipliers}});
  stage.input("synthetic", synth_path);
  const auto real = load_corpus(ctx, &stage);
  const auto ling = load_ling(ctx, &stage);
  const EmbeddingSource emb(ctx, &stage);
  for (const int k : multipliers) {
    const auto augmented = augment::augment_training_set(real, synth, k);
    auto data = make_train_data(ctx, augmented, ling, emb);
    data.dataset += "+" + slug(synth.generator.name) + "x" + std::to_string(k);
    const auto report = train_into(ctx, stage, "x" + std::to_string(k), data, kind);
    ctx.out_s() << f1_line("x" + std::to_string(k) + " " + model, report, "test_f1") << "\n";
  }
  stage.finish();
  return kOk;
}

int cmd_quality(const Context& ctx, const std::string& metric, const std::string& synthetic_flag) {
  const fs::path synth_path = synthetic_flag.empty() ? ctx.path("/paths/synthetic") : fs::absolute(synthetic_flag);
  const auto synth = augment::synthetic_from_jsonl(read_file(synth_path));
  Stage stage(ctx, "quality", ctx.out / "quality" / slug(synth.generator.name), ojson{{"metric", metric}});
  stage.input("synthetic", synth_path);
  const auto real = load_corpus(ctx, &stage);
  // Synthetic samples are compared against held-out validation transcripts.
  const auto refs = corpus::split_view(real, Split::Validation);
  if (refs.empty()) throw Error(ErrorKind::EmptySplit, "no validation transcripts to compare against");
  const auto fake = synthetic_transcripts(synth);
  if (fake.empty()) throw Error(ErrorKind::InsufficientSamples, "synthetic corpus has no accepted samples");

  ojson doc;
  doc["format"] = "cogscreen-quality";
  doc["metric"] = metric;
  doc["generator"] = synth.generator.name;
  doc["n_synthetic"] = fake.size();
  doc["n_reference"] = refs.size();

  const auto policy_name = ctx.get<std::string>("/quality/reference_policy", "all_same_label");
  textsim::ReferencePolicy policy;
  if (policy_name == "all_same_label") policy = textsim::ReferencePolicy::AllSameLabel;
  else if (policy_name == "nearest") policy = textsim::ReferencePolicy::Nearest;
  else throw Error(ErrorKind::ConfigError, "/quality/reference_policy must be all_same_label or nearest");

  std::map<Label, std::vector<textsim::Tokens>> pool;
  std::map<Label, std::vector<const corpus::Transcript*>> pool_docs;
  for (const auto& t : refs) {
    pool[t.label].push_back(word_tokens(t.text));
    pool_docs[t.label].push_back(&t);
  }

  if (metric == "bleu") {
    doc["reference_policy"] = policy_name;
    std::vector<textsim::Tokens> cands;
    std::vector<std::vector<textsim::Tokens>> refs;
    std::map<Label, std::pair<std::vector<textsim::Tokens>, std::vector<std::vector<textsim::Tokens>>>> by_label;
    for (const auto& f : fake) {
      auto c = word_tokens(f.text);
      auto r = textsim::select_references(c, pool[f.label], policy);
      by_label[f.label].first.push_back(c);
      by_label[f.label].second.push_back(r);
      cands.push_back(std::move(c));
      refs.push_back(std::move(r));
    }
    doc["overall"] = bleu_json(textsim::bleu(cands, refs));
    for (auto& [label, cr] : by_label) doc["per_label"][to_string(label)] = bleu_json(textsim::bleu(cr.first, cr.second));
  } else if (metric == "bertscore") {
    const EmbeddingSource emb(ctx, &stage);
    doc["embedding_provider"] = emb.provider();
    const bool use_idf = ctx.get<bool>("/quality/idf", false);
    doc["idf"] = use_idf;
    std::map<Label, textsim::IdfWeights> idf;
    for (const auto& [label, docs] : pool) idf[label] = textsim::compute_idf(docs);
    std::map<std::string, std::array<double, 4>> sums;  // label -> P, R, F1, n
    for (const auto& f : fake) {
      const auto c = word_tokens(f.text);
      const auto& docs = pool[f.label];
      if (docs.empty()) throw Error(ErrorKind::InsufficientSamples, "no real transcripts with the sample's label");
      const auto nearest = textsim::select_references(c, docs, textsim::ReferencePolicy::Nearest).front();
      const auto idx = static_cast<std::size_t>(std::find(docs.begin(), docs.end(), nearest) - docs.begin());
      const auto cr = emb.record(f, true);
      const auto rr = emb.record(*pool_docs[f.label][idx], true);
      const auto s = textsim::bertscore(*cr.tokens, *rr.tokens, use_idf ? &idf[f.label] : nullptr,
                                        cr.token_strings, rr.token_strings);
      for (const auto& key : {std::string("overall"), std::string(to_string(f.label))}) {
        auto& acc = sums[key];
        acc[0] += s.precision;
        acc[1] += s.recall;
        acc[2] += s.f1;
        acc[3] += 1;
      }
    }
    for (const auto& [key, acc] : sums) {
      ojson j{{"precision", acc[0] / acc[3]}, {"recall", acc[1] / acc[3]}, {"f1", acc[2] / acc[3]}, {"n", acc[3]}};
      if (key == "overall") doc["overall"] = j;
      else doc["per_label"][key] = j;
    }
  } else if (metric == "tsne") {
    const EmbeddingSource emb(ctx, &stage);
    doc["embedding_provider"] = emb.provider();
    textsim::Matrix x;
    std::vector<std::string> ids, groups, labels;
    // Real transcripts of every split plus the synthetic set.
    for (const auto& t : real.transcripts()) {
      x.push_back(emb.sentence(t));
      ids.push_back(t.id);
      groups.push_back(std::string(to_string(t.split)));
      labels.push_back(std::string(to_string(t.label)));
    }
    for (const auto& f : fake) {
      x.push_back(emb.sentence(f));
      ids.push_back(f.id);
      groups.push_back("synthetic");
      labels.push_back(std::string(to_string(f.label)));
    }
    textsim::TsneConfig cfg;
    cfg.perplexity = ctx.get<double>("/quality/tsne/perplexity", cfg.perplexity);
    cfg.iterations = ctx.get<int>("/quality/tsne/iterations", cfg.iterations);
    cfg.seed = ctx.get<std::uint64_t>("/quality/tsne/seed", cfg.seed);
    const double max_perp = (static_cast<double>(x.size()) - 1.0) / 3.0;
    if (cfg.perplexity > max_perp) {
      spdlog::warn("perplexity {} too large for {} points; using {}", cfg.perplexity, x.size(), max_perp);
      cfg.perplexity = max_perp;
    }
    const auto res = textsim::tsne(x, cfg);
    std::map<std::string, textsim::Group> by_group;
    std::vector<int> real_vs_fake;
    doc["perplexity"] = cfg.perplexity;
    doc["kl"] = res.kl;
    doc["points"] = ojson::array();
    for (std::size_t i = 0; i < x.size(); ++i) {
      doc["points"].push_back({{"id", ids[i]}, {"group", groups[i]}, {"label", labels[i]}, {"x", res.coords[i][0]}, {"y", res.coords[i][1]}});
      auto& g = by_group[groups[i]];
      g.name = groups[i];
      g.points.push_back(res.coords[i]);
      real_vs_fake.push_back(groups[i] == "synthetic" ? 1 : 0);
    }
    std::vector<textsim::Group> gs;
    for (auto& [_, g] : by_group) gs.push_back(std::move(g));
    const auto overlap = textsim::overlap_report(gs, ctx.get<std::size_t>("/quality/overlap_k", 10));
    ojson o;
    o["k"] = overlap.k;
    o["mixing"] = overlap.mixing;
    o["overall_mixing"] = overlap.overall_mixing;
    for (const auto& [pair, d] : overlap.centroid_distance) o["centroid_distance"][pair.first + " | " + pair.second] = d;
    doc["overlap"] = o;
    doc["silhouette_real_vs_synthetic"] = textsim::silhouette(res.coords, real_vs_fake);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown quality metric " + metric);
  }
  stage.write(metric + ".json", doc.dump(2) + "\n");
  stage.finish();
  ctx.out_s() << "quality " << metric << " written to " << (stage.dir() / (metric + ".json")).string() << "\n";
  return kOk;
}

int cmd_judge(const Context& ctx, const std::string& split_flag, std::size_t limit) {
  const auto* j = ctx.find("/judge");
  if (!j) throw Error(ErrorKind::ConfigError, "/judge is not set");
  json jc = *j;
  jc.erase("chat");
  jc.erase("split");
  const auto cfg = parse_section("/judge", [&] { return llmjudge::judge_config_from_json(jc); });
  const auto split_name = split_flag.empty() ? ctx.get<std::string>("/judge/split", "test") : split_flag;
  const auto split = parse_split_name(split_name);
  if (!split) throw Error(ErrorKind::UnknownSplit, "unknown split " + split_name);

  Stage stage(ctx, "judge", ctx.out / "judge" / slug(cfg.model), ojson{{"split", split_name}, {"limit", limit}});
  const auto c = load_corpus(ctx, &stage);
  auto items = corpus::split_view(c, *split);
  if (limit > 0 && items.size() > limit) items.resize(limit);
  chat::HttpChatClient client(chat_config(ctx, "/judge/chat"));
  const auto e = llmjudge::evaluate_judge(client, cfg, items, dataset_name(ctx));
  stage.write("report.json", metrics::to_json(e.report).dump(2) + "\n");
  stage.write("verdicts.jsonl", llmjudge::verdicts_jsonl(e.verdicts, items));
  stage.provenance()["latency_s"] = ojson::parse(llmjudge::latencies_json(e.verdicts));
  stage.finish();
  ctx.out_s() << f1_line("judge " + cfg.model, e.report, "f1") << " (unparseable rate "
              << e.report.aggregate.at("unparseable_rate").mean << ")\n";
  return kOk;
}

int cmd_report(const Context& ctx, const std::string& reports_flag) {
  const fs::path in = reports_flag.empty() ? ctx.out : fs::absolute(reports_flag);
  const auto reports = render::load_reports(in);
  Stage stage(ctx, "report", ctx.out / "report", ojson{{"reports", reports.size()}});
  for (const auto& [name, content] : render::render_report(reports)) stage.write(name, content);
  stage.finish();
  ctx.out_s() << "rendered " << reports.size() << " report(s) into " << stage.dir().string() << "\n";
  return kOk;
}

void emit_error(std::ostream& err, std::string_view kind, const std::string& message, int code) {
  ojson j;
  j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
  err << j.dump() << "\n";
}

}  // namespace

fs::path default_data_dir() {
  if (const char* env = std::getenv("COGSCREEN_DATA_DIR"); env && *env) return env;
  return COGSCREEN_SOURCE_DATA_DIR;
}

json interpolate_env(const json& config, const std::string& pointer) {
  if (config.is_string()) {
    static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
    const auto s = config.get<std::string>();
    std::string out;
    auto last = s.cbegin();
    for (auto it = std::sregex_iterator(s.begin(), s.end(), var); it != std::sregex_iterator(); ++it) {
      const auto name = (*it)[1].str();
      const char* value = std::getenv(name.c_str());
      if (!value) {
        throw Error(ErrorKind::ConfigError,
                    "environment variable " + name + " is not set (referenced at " + (pointer.empty() ? "/" : pointer) + ")");
      }
      out.append(last, (*it)[0].first);
      out += value;
      last = (*it)[0].second;
    }
    out.append(last, s.cend());
    return out;
  }
  if (config.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : config.items()) out[k] = interpolate_env(v, pointer + "/" + escape_pointer_token(k));
    return out;
  }
  if (config.is_array()) {
    json out = json::array();
    for (std::size_t i = 0; i < config.size(); ++i) out.push_back(interpolate_env(config[i], pointer + "/" + std::to_string(i)));
    return out;
  }
  return config;
}

void validate_config(const json& config) { check_keys(config, config_schema(), ""); }

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

std::vector<int> parse_multipliers(std::string_view text) {
  std::vector<int> out;
  const auto bad = [&] { return Error(ErrorKind::InvalidArgument, "bad multiplier list '" + std::string(text) + "'"); };
  try {
    const auto dots = text.find("..");
    if (dots != std::string_view::npos) {
      const int a = std::stoi(std::string(text.substr(0, dots)));
      const int b = std::stoi(std::string(text.substr(dots + 2)));
      if (a > b) throw bad();
      for (int k = a; k <= b; ++k) out.push_back(k);
    } else {
      for (const auto& part : split(text, ',')) out.push_back(std::stoi(trim(part)));
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  if (out.empty()) throw bad();
  for (int k : out) {
    if (k < 1 || k > 5) throw Error(ErrorKind::InvalidArgument, "multipliers must lie in 1..5");
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  try {
    for (const auto& part : split(text, ',')) {
      const auto t = trim(part);
      if (t.empty() || t[0] == '-') throw std::invalid_argument("seed");
      out.push_back(std::stoull(t));
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::InvalidArgument, "bad seed list '" + std::string(text) + "'");
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transcript-based cognitive screening pipeline", "cogscreen"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  GlobalOptions opt;
  app.add_option("--config", opt.config_path, "Pipeline config (JSON)");
  app.add_option("--seed-list", opt.seed_list, "Comma-separated training seeds");
  app.add_option("--out", opt.out, "Output directory");
  app.add_option("--network", opt.network, "Network policy")->check(CLI::IsMember({"forbidden", "allowed"}));
  app.add_option("--log-level", opt.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string model, multipliers, synthetic, metric, split_name, reports;
  int multiplier = 1;
  std::size_t n_override = 0, limit = 0;
  bool with_synthetic = false;

  auto* ingest = app.add_subcommand("ingest", "Load the manifest and write the cleaned corpus");
  auto* features = app.add_subcommand("features", "Extract the linguistic feature matrix");
  auto* embed = app.add_subcommand("embed-fetch", "Build or extend the embedding store");
  embed->add_flag("--with-synthetic", with_synthetic, "Also embed accepted synthetic samples");
  embed->add_option("--synthetic", synthetic, "Synthetic corpus JSONL");
  auto* train = app.add_subcommand("train", "Train one model kind over all seeds");
  train->add_option("--model", model, "embedding, linguistic or fusion")
      ->required()
      ->check(CLI::IsMember({"embedding", "linguistic", "fusion"}));
  auto* aexport = app.add_subcommand("augment-export", "Write the fine-tuning dataset");
  auto* agen = app.add_subcommand("augment-generate", "Generate synthetic transcripts");
  agen->add_option("--multiplier", multiplier, "Generate multiplier x |train| samples")->check(CLI::Range(1, 5));
  agen->add_option("--n", n_override, "Explicit sample count");
  auto* sweep = app.add_subcommand("augment-sweep", "Retrain with 1x..5x synthetic data");
  sweep->add_option("--multipliers", multipliers, "e.g. 1..5 or 1,2,4");
  sweep->add_option("--synthetic", synthetic, "Synthetic corpus JSONL");
  sweep->add_option("--model", model, "Model kind (default fusion)")
      ->check(CLI::IsMember({"embedding", "linguistic", "fusion"}));
  auto* quality = app.add_subcommand("quality", "Compare synthetic and real transcripts");
  quality->add_option("--metric", metric, "bleu, bertscore or tsne")
      ->required()
      ->check(CLI::IsMember({"bleu", "bertscore", "tsne"}));
  quality->add_option("--synthetic", synthetic, "Synthetic corpus JSONL");
  auto* judge = app.add_subcommand("judge", "Zero-shot LLM classification");
  judge->add_option("--split", split_name, "Split to classify (default test)");
  judge->add_option("--limit", limit, "Classify at most this many transcripts");
  auto* report = app.add_subcommand("report", "Render figures and consolidated tables");
  report->add_option("--reports", reports, "Directory holding report files (default --out)");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> argv_store{"cogscreen"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "UsageError", e.what(), kUsageError);
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsageError;
  }

  spdlog::set_level(spdlog::level::from_str(opt.log_level));
  const auto previous_policy = net::network_policy();
  net::set_network_policy(opt.network == "allowed" ? net::NetworkPolicy::Allowed : net::NetworkPolicy::Forbidden);
  struct Restore {
    net::NetworkPolicy p;
    ~Restore() { net::set_network_policy(p); }
  } restore{previous_policy};

  try {
    const auto ctx = make_context(opt, out);
    if (*ingest) return cmd_ingest(ctx);
    if (*features) return cmd_features(ctx);
    if (*embed) return cmd_embed_fetch(ctx, synthetic, with_synthetic || !synthetic.empty());
    if (*train) return cmd_train(ctx, model);
    if (*aexport) return cmd_augment_export(ctx);
    if (*agen) return cmd_augment_generate(ctx, multiplier, n_override);
    if (*sweep) return cmd_augment_sweep(ctx, multipliers, synthetic, model);
    if (*quality) return cmd_quality(ctx, metric, synthetic);
    if (*judge) return cmd_judge(ctx, split_name, limit);
    if (*report) return cmd_report(ctx, reports);
  } catch (const Error& e) {
    const int code = e.kind() == ErrorKind::ConfigError ? kUsageError : kRuntimeError;
    emit_error(err, to_string(e.kind()), e.what(), code);
    return code;
  } catch (const json::exception& e) {
    emit_error(err, "MalformedInput", e.what(), kRuntimeError);
    return kRuntimeError;
  } catch (const std::exception& e) {
    emit_error(err, "InternalError", e.what(), kRuntimeError);
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace cogscreen::cli
