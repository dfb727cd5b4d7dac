#include "cogscreen/embeddings.hpp"

#include <cmath>
#include <future>

#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/rng.hpp"
#include "cogscreen/tokenizer.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::embeddings {
namespace {

void require_finite(const std::vector<double>& v, const std::string& where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::SchemaError, where + ": non-finite value");
  }
}

std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  if (rows.empty()) return out;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < dim; ++j) out[j] += r[j];
  }
  for (auto& x : out) x /= static_cast<double>(rows.size());
  return out;
}

std::vector<double> as_vector(const nlohmann::json& j, std::size_t dim, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorKind::SchemaError, where + " is not an array");
  if (j.size() != dim) {
    throw Error(ErrorKind::SchemaError, where + " has length " + std::to_string(j.size()) + ", expected " +
                                            std::to_string(dim));
  }
  std::vector<double> v;
  v.reserve(dim);
  for (const auto& x : j) {
    if (!x.is_number()) throw Error(ErrorKind::SchemaError, where + " holds a non-number");
    v.push_back(x.get<double>());
  }
  require_finite(v, where);
  return v;
}

std::vector<EmbeddingRecord> parse_batch(const RemoteConfig& cfg, const nlohmann::json& body,
                                         const std::vector<std::string>& texts, std::size_t offset) {
  if (!body.is_object() || !body.contains("dim") || !body.contains("vectors")) {
    throw Error(ErrorKind::SchemaError, "embedding response lacks dim or vectors");
  }
  const auto dim = body["dim"].get<std::size_t>();
  if (dim == 0) throw Error(ErrorKind::SchemaError, "embedding response has dim 0");
  const auto& vectors = body["vectors"];
  if (!vectors.is_array() || vectors.size() != texts.size()) {
    throw Error(ErrorKind::SchemaError, "expected " + std::to_string(texts.size()) + " vectors, got " +
                                            std::to_string(vectors.is_array() ? vectors.size() : 0));
  }
  const std::string provider = cfg.provider.empty() ? cfg.model : cfg.provider;
  std::vector<EmbeddingRecord> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::string where = "vector at index " + std::to_string(offset + i);
    EmbeddingRecord r;
    r.key = content_key(texts[i]);
    r.provider = provider;
    r.dim = dim;
    if (cfg.granularity == Granularity::Sentence) {
      r.sentence = as_vector(vectors[i], dim, where);
      r.pooling = "provider";
    } else {
      if (!vectors[i].is_array()) throw Error(ErrorKind::SchemaError, where + " is not a matrix");
      std::vector<std::vector<double>> rows;
      for (std::size_t t = 0; t < vectors[i].size(); ++t) {
        rows.push_back(as_vector(vectors[i][t], dim, where + " row " + std::to_string(t)));
      }
      if (body.contains("tokens")) {
        r.token_strings = body["tokens"].at(i).get<std::vector<std::string>>();
        if (r.token_strings.size() != rows.size()) {
          throw Error(ErrorKind::SchemaError, where + ": token strings do not align with rows");
        }
      }
      if (body.contains("sentence")) {
        r.sentence = as_vector(body["sentence"].at(i), dim, "sentence " + where);
        r.pooling = "provider";
      } else {
        r.sentence = mean_rows(rows, dim);
        r.pooling = "mean(tokens)";
      }
      r.tokens = std::move(rows);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void validate(const EmbeddingRecord& r) {
  if (r.key.empty()) throw Error(ErrorKind::SchemaError, "embedding record has an empty key");
  if (r.provider.empty()) throw Error(ErrorKind::SchemaError, "record " + r.key + " has no provider");
  if (r.dim == 0) throw Error(ErrorKind::SchemaError, "record " + r.key + " has dim 0");
  if (r.sentence.size() != r.dim) {
    throw Error(ErrorKind::DimMismatch, "record " + r.key + ": sentence length " +
                                            std::to_string(r.sentence.size()) + " != dim " + std::to_string(r.dim));
  }
  require_finite(r.sentence, "record " + r.key);
  if (r.tokens) {
    for (const auto& row : *r.tokens) {
      if (row.size() != r.dim) throw Error(ErrorKind::DimMismatch, "record " + r.key + ": token row length mismatch");
      require_finite(row, "record " + r.key);
    }
    if (!r.token_strings.empty() && r.token_strings.size() != r.tokens->size()) {
      throw Error(ErrorKind::SchemaError, "record " + r.key + ": token strings do not align with rows");
    }
  } else if (!r.token_strings.empty()) {
    throw Error(ErrorKind::SchemaError, "record " + r.key + ": token strings without token vectors");
  }
}

nlohmann::ordered_json to_json(const EmbeddingRecord& r) {
  nlohmann::ordered_json j;
  j["key"] = r.key;
  j["provider"] = r.provider;
  j["dim"] = r.dim;
  j["sentence"] = r.sentence;
  if (r.tokens) j["tokens"] = *r.tokens;
  if (!r.token_strings.empty()) j["token_strings"] = r.token_strings;
  if (!r.pooling.empty()) j["pooling"] = r.pooling;
  return j;
}

EmbeddingRecord record_from_json(const nlohmann::json& j) {
  EmbeddingRecord r;
  r.key = j.at("key").get<std::string>();
  r.provider = j.at("provider").get<std::string>();
  r.dim = j.at("dim").get<std::size_t>();
  r.sentence = j.at("sentence").get<std::vector<double>>();
  if (j.contains("tokens")) r.tokens = j["tokens"].get<std::vector<std::vector<double>>>();
  if (j.contains("token_strings")) r.token_strings = j["token_strings"].get<std::vector<std::string>>();
  r.pooling = j.value("pooling", "");
  validate(r);
  return r;
}

void EmbeddingStore::add(EmbeddingRecord record) {
  validate(record);
  const auto dim_it = dims_.find(record.provider);
  if (dim_it != dims_.end() && dim_it->second != record.dim) {
    throw Error(ErrorKind::DimMismatch, "provider " + record.provider + " has dim " + std::to_string(dim_it->second) +
                                            " but record " + record.key + " has dim " + std::to_string(record.dim));
  }
  auto key = std::make_pair(record.provider, record.key);
  if (const auto it = index_.find(key); it != index_.end()) {
    if (records_[it->second] == record) return;
    throw Error(ErrorKind::InvalidArgument,
                "record " + record.key + " for provider " + record.provider + " already stored with different content");
  }
  dims_[record.provider] = record.dim;
  index_.emplace(std::move(key), records_.size());
  records_.push_back(std::move(record));
}

bool EmbeddingStore::contains(std::string_view provider, std::string_view key) const {
  return index_.count(std::make_pair(std::string(provider), std::string(key))) > 0;
}

const EmbeddingRecord& EmbeddingStore::get(std::string_view provider, std::string_view key) const {
  const auto it = index_.find(std::make_pair(std::string(provider), std::string(key)));
  if (it == index_.end()) {
    throw Error(ErrorKind::MissingKey,
                "no embedding for key " + std::string(key) + " under provider " + std::string(provider));
  }
  return records_[it->second];
}

std::optional<std::size_t> EmbeddingStore::dim(std::string_view provider) const {
  const auto it = dims_.find(provider);
  if (it == dims_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> EmbeddingStore::providers() const {
  std::vector<std::string> out;
  for (const auto& [p, d] : dims_) out.push_back(p);
  return out;
}

EmbeddingStore parse_store(std::string_view jsonl, const std::string& source) {
  EmbeddingStore store;
  std::size_t line_no = 0;
  for (const auto& line : split(jsonl, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      store.add(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedInput, source + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), source + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

EmbeddingStore load_store(const std::filesystem::path& path) { return parse_store(read_file(path), path.string()); }

std::string store_to_jsonl(const EmbeddingStore& store) {
  std::string out;
  for (const auto& r : store.records()) out += to_json(r).dump() + "\n";
  return out;
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file(path, store_to_jsonl(store));
}

const std::vector<double>& get_sentence(const EmbeddingStore& store, std::string_view provider,
                                        std::string_view key) {
  return store.get(provider, key).sentence;
}

std::string content_key(std::string_view text) { return "sha256:" + sha256_hex(text); }

const EmbeddingRecord& lookup(const EmbeddingStore& store, std::string_view provider,
                              const corpus::Transcript& transcript) {
  if (store.contains(provider, transcript.id)) return store.get(provider, transcript.id);
  const auto hash = content_key(transcript.text);
  if (store.contains(provider, hash)) return store.get(provider, hash);
  throw Error(ErrorKind::MissingKey, "no embedding for transcript " + transcript.id + " (or its content hash) under " +
                                         std::string(provider));
}

RemoteConfig remote_config_from_json(const nlohmann::json& j) {
  RemoteConfig c;
  c.http.url = j.at("url").get<std::string>();
  c.http.token_env = j.value("token_env", "");
  c.http.timeout_s = j.value("timeout_s", c.http.timeout_s);
  c.http.retry.max_attempts = j.value("max_attempts", c.http.retry.max_attempts);
  c.http.retry.base_delay_s = j.value("base_delay_s", c.http.retry.base_delay_s);
  c.http.retry.max_delay_s = j.value("max_delay_s", c.http.retry.max_delay_s);
  c.model = j.at("model").get<std::string>();
  c.provider = j.value("provider", c.model);
  const auto gran = j.value("granularity", std::string("sentence"));
  if (gran == "sentence") c.granularity = Granularity::Sentence;
  else if (gran == "tokens") c.granularity = Granularity::Tokens;
  else throw Error(ErrorKind::ConfigError, "granularity must be sentence or tokens");
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  return c;
}

std::vector<EmbeddingRecord> fetch_remote(const RemoteConfig& cfg, const std::vector<std::string>& texts,
                                          const net::Sleeper& sleep) {
  net::require_network("embedding fetch");
  if (cfg.batch_size == 0 || cfg.max_in_flight == 0) {
    throw Error(ErrorKind::ConfigError, "batch_size and max_in_flight must be positive");
  }
  const std::string gran = cfg.granularity == Granularity::Sentence ? "sentence" : "tokens";
  std::vector<std::pair<std::size_t, std::vector<std::string>>> batches;
  for (std::size_t start = 0; start < texts.size(); start += cfg.batch_size) {
    const auto end = std::min(texts.size(), start + cfg.batch_size);
    batches.emplace_back(start, std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                         texts.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  std::vector<std::vector<EmbeddingRecord>> results(batches.size());
  auto run_batch = [&](std::size_t b) {
    auto http = cfg.http;
    http.retry.seed = cfg.http.retry.seed + b;  // distinct jitter per batch
    const nlohmann::json body{{"model", cfg.model}, {"inputs", batches[b].second}, {"granularity", gran}};
    const auto res = net::post_json(http, body, sleep);
    results[b] = parse_batch(cfg, res.body, batches[b].second, batches[b].first);
  };
  // Waves of at most max_in_flight concurrent requests.
  for (std::size_t wave = 0; wave < batches.size(); wave += cfg.max_in_flight) {
    std::vector<std::future<void>> inflight;
    const auto end = std::min(batches.size(), wave + cfg.max_in_flight);
    for (std::size_t b = wave; b < end; ++b) inflight.push_back(std::async(std::launch::async, run_batch, b));
    for (auto& f : inflight) f.get();
  }
  std::vector<EmbeddingRecord> out;
  for (auto& r : results) {
    for (auto& rec : r) out.push_back(std::move(rec));
  }
  spdlog::info("fetched {} embeddings in {} batch(es)", out.size(), batches.size());
  return out;
}

std::string HashedEmbedder::provider() const {
  return "hashed-" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

std::vector<double> HashedEmbedder::token_vector(std::string_view token) const {
  const auto digest = sha256_hex(std::to_string(seed_) + ":" + std::string(token));
  Rng rng(std::stoull(digest.substr(0, 16), nullptr, 16));
  std::vector<double> v(dim_);
  for (auto& x : v) x = rng.normal() / std::sqrt(static_cast<double>(dim_));
  return v;
}

EmbeddingRecord HashedEmbedder::embed(std::string_view key, std::string_view text, bool with_tokens) const {
  const auto stream = lingfeat::tokenize(text);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> strings;
  for (const auto& t : stream.tokens) {
    if (!t.is_word) continue;
    rows.push_back(token_vector(t.lower));
    strings.push_back(t.lower);
  }
  EmbeddingRecord r;
  r.key = std::string(key);
  r.provider = provider();
  r.dim = dim_;
  r.sentence = mean_rows(rows, dim_);
  r.pooling = "mean(tokens)";
  if (with_tokens) {
    r.tokens = std::move(rows);
    r.token_strings = std::move(strings);
  }
  return r;
}

}  // namespace cogscreen::embeddings
