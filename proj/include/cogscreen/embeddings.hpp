#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cogscreen/corpus.hpp"
#include "cogscreen/net.hpp"

namespace cogscreen::embeddings {

struct EmbeddingRecord {
  std::string key;  // transcript id or content hash
  std::string provider;
  std::size_t dim = 0;
  std::vector<double> sentence;
  std::optional<std::vector<std::vector<double>>> tokens;  // m x dim
  std::vector<std::string> token_strings;                  // m entries when tokens are present
  std::string pooling;                                     // declared by the producer, never recomputed

  bool operator==(const EmbeddingRecord&) const = default;
};

// Throws SchemaError (non-finite values, ragged token rows) or DimMismatch.
void validate(const EmbeddingRecord& record);

nlohmann::ordered_json to_json(const EmbeddingRecord& record);
EmbeddingRecord record_from_json(const nlohmann::json& j);

// Append-only: re-adding an identical record is a no-op, a conflicting one
// throws InvalidArgument. Reads are safe to share across threads.
class EmbeddingStore {
 public:
  void add(EmbeddingRecord record);

  bool contains(std::string_view provider, std::string_view key) const;
  const EmbeddingRecord& get(std::string_view provider, std::string_view key) const;
  std::optional<std::size_t> dim(std::string_view provider) const;
  std::vector<std::string> providers() const;
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, std::size_t, std::less<>> index_;
  std::map<std::string, std::size_t, std::less<>> dims_;
  std::vector<EmbeddingRecord> records_;
};

EmbeddingStore parse_store(std::string_view jsonl, const std::string& source = "<memory>");
EmbeddingStore load_store(const std::filesystem::path& path);
std::string store_to_jsonl(const EmbeddingStore& store);
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);

// Returns the stored vector unmodified; MissingKey when absent.
const std::vector<double>& get_sentence(const EmbeddingStore& store, std::string_view provider,
                                        std::string_view key);

// Records produced from text are keyed by this.
std::string content_key(std::string_view text);

// Tries the transcript id first, then the content hash of its text.
const EmbeddingRecord& lookup(const EmbeddingStore& store, std::string_view provider,
                              const corpus::Transcript& transcript);

enum class Granularity { Sentence, Tokens };

struct RemoteConfig {
  net::HttpConfig http;
  std::string model;
  std::string provider;  // defaults to model when empty
  Granularity granularity = Granularity::Sentence;
  std::size_t batch_size = 16;
  std::size_t max_in_flight = 2;
};

RemoteConfig remote_config_from_json(const nlohmann::json& j);

// One record per text, in input order, keyed by content hash. Response
// schema: {"dim": d, "vectors": [...]} with per-input d-vectors (sentence) or
// m x d matrices plus optional "tokens" and "sentence" arrays (tokens).
std::vector<EmbeddingRecord> fetch_remote(const RemoteConfig& cfg, const std::vector<std::string>& texts,
                                          const net::Sleeper& sleep = net::real_sleeper());

// Offline stand-in provider: each lowercased word maps to a seeded Gaussian
// vector, and the sentence vector is their mean. It carries lexical content
// only and exists so pipelines can run without an embedding service.
class HashedEmbedder {
 public:
  explicit HashedEmbedder(std::size_t dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}

  std::string provider() const;
  std::size_t dim() const { return dim_; }
  std::vector<double> token_vector(std::string_view token) const;
  EmbeddingRecord embed(std::string_view key, std::string_view text, bool with_tokens = false) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

}  // namespace cogscreen::embeddings
