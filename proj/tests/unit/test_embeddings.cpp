#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>

#include "cogscreen/embeddings.hpp"
#include "cogscreen/error.hpp"
#include "cogscreen/rng.hpp"
#include "mock_server.hpp"
#include "test_support.hpp"

using namespace cogscreen;
using namespace cogscreen::embeddings;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::InvalidArgument;
}

RemoteConfig remote(const std::string& url) {
  RemoteConfig c;
  c.http.url = url;
  c.http.retry.max_attempts = 4;
  c.model = "mock-encoder";
  return c;
}

const net::Sleeper no_sleep = [](double) {};

}  // namespace

TEST_SUITE("embeddings") {

TEST_CASE("load_store and lookups") {
  const std::string text =
      R"({"key":"a","provider":"p","dim":4,"sentence":[0.1,0.2,0.3,0.4]})"
      "\n"
      R"({"key":"b","provider":"p","dim":4,"sentence":[1,2,3,4],"pooling":"cls"})"
      "\n";
  const auto store = parse_store(text);
  CHECK(store.size() == 2);
  CHECK(store.dim("p") == 4u);
  CHECK(get_sentence(store, "p", "a") == std::vector<double>{0.1, 0.2, 0.3, 0.4});
  CHECK(store.get("p", "b").pooling == "cls");
  CHECK(kind_of([&] { get_sentence(store, "p", "zzz"); }) == ErrorKind::MissingKey);
  CHECK(kind_of([&] { get_sentence(store, "other", "a"); }) == ErrorKind::MissingKey);

  const std::string mixed =
      R"({"key":"a","provider":"p","dim":4,"sentence":[0,0,0,0]})"
      "\n"
      R"({"key":"b","provider":"p","dim":5,"sentence":[0,0,0,0,0]})";
  CHECK(kind_of([&] { parse_store(mixed); }) == ErrorKind::DimMismatch);
  CHECK(kind_of([&] { parse_store("{not json"); }) == ErrorKind::MalformedInput);
  CHECK(kind_of([&] { parse_store(R"({"key":"a","provider":"p","dim":2,"sentence":[1]})"); }) ==
        ErrorKind::DimMismatch);
  CHECK(kind_of([] { load_store("/nonexistent/store.jsonl"); }) == ErrorKind::UnreadableFile);
}

TEST_CASE("store round trip is exact") {
  Rng rng(1);
  EmbeddingStore store;
  for (int i = 0; i < 20; ++i) {
    EmbeddingRecord r;
    r.key = "k" + std::to_string(i);
    r.provider = i % 2 ? "p1" : "p2";
    r.dim = i % 2 ? 3 : 5;
    for (std::size_t j = 0; j < r.dim; ++j) r.sentence.push_back(rng.normal() * std::pow(10.0, rng.uniform(-20, 20)));
    if (i % 4 == 0) {
      r.tokens = std::vector<std::vector<double>>{r.sentence, r.sentence};
      r.token_strings = {"x", "y"};
    }
    store.add(r);
  }
  testsupport::TempDir dir;
  write_store(store, dir / "s.jsonl");
  const auto back = load_store(dir / "s.jsonl");
  REQUIRE(back.size() == store.size());
  for (const auto& r : store.records()) CHECK(back.get(r.provider, r.key) == r);
  CHECK(store_to_jsonl(back) == store_to_jsonl(store));
}

TEST_CASE("stores are append-only") {
  EmbeddingStore store;
  EmbeddingRecord r{"a", "p", 2, {1.0, 2.0}, std::nullopt, {}, ""};
  store.add(r);
  store.add(r);
  CHECK(store.size() == 1);
  r.sentence = {9.0, 9.0};
  CHECK(kind_of([&] { store.add(r); }) == ErrorKind::InvalidArgument);
  CHECK(get_sentence(store, "p", "a") == std::vector<double>{1.0, 2.0});
  EmbeddingRecord bad{"b", "p", 2, {1.0, std::nan("")}, std::nullopt, {}, ""};
  CHECK(kind_of([&] { store.add(bad); }) == ErrorKind::SchemaError);
}

TEST_CASE("transcript lookup falls back to content hash") {
  EmbeddingStore store;
  const auto t = corpus::make_transcript("S1", Label::Case, Split::Train, "the boy takes a cookie");
  store.add({content_key(t.text), "p", 2, {0.5, 0.5}, std::nullopt, {}, ""});
  CHECK(lookup(store, "p", t).sentence == std::vector<double>{0.5, 0.5});
  store.add({"S1", "p", 2, {1.0, 0.0}, std::nullopt, {}, ""});
  CHECK(lookup(store, "p", t).sentence == std::vector<double>{1.0, 0.0});
  const auto other = corpus::make_transcript("S2", Label::Case, Split::Train, "something else");
  CHECK(kind_of([&] { lookup(store, "p", other); }) == ErrorKind::MissingKey);
}

TEST_CASE("remote fetch: mock echo") {
  testsupport::NetworkAllowed allow;
  testsupport::MockServer server("/embed", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json vectors = nlohmann::json::array();
    for (std::size_t i = 0; i < body["inputs"].size(); ++i) vectors.push_back({0.25 * i, 1.0, -1.5});
    res.set_content(nlohmann::json{{"dim", 3}, {"vectors", vectors}}.dump(), "application/json");
  });
  const std::vector<std::string> texts{"first text", "second text"};
  const auto recs = fetch_remote(remote(server.url("/embed")), texts, no_sleep);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].dim == 3);
  CHECK(recs[1].sentence == std::vector<double>{0.25, 1.0, -1.5});
  CHECK(recs[0].key == content_key("first text"));
  CHECK(recs[0].provider == "mock-encoder");
  const auto sent = nlohmann::json::parse(server.bodies().at(0));
  CHECK(sent["model"] == "mock-encoder");
  CHECK(sent["granularity"] == "sentence");

  // Cache coherence: stored then read back bit-identically.
  EmbeddingStore store;
  for (const auto& r : recs) store.add(r);
  testsupport::TempDir dir;
  write_store(store, dir / "cache.jsonl");
  const auto back = load_store(dir / "cache.jsonl");
  for (const auto& r : recs) CHECK(get_sentence(back, r.provider, r.key) == r.sentence);
}

TEST_CASE("remote fetch: batching and bearer auth") {
  testsupport::NetworkAllowed allow;
  testsupport::MockServer server("/embed", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& text : body["inputs"]) vectors.push_back({static_cast<double>(text.get<std::string>().size())});
    res.set_content(nlohmann::json{{"dim", 1}, {"vectors", vectors}}.dump(), "application/json");
  });
  ::setenv("COGSCREEN_TEST_TOKEN", "sekret", 1);
  auto cfg = remote(server.url("/embed"));
  cfg.batch_size = 2;
  cfg.max_in_flight = 2;
  cfg.http.token_env = "COGSCREEN_TEST_TOKEN";
  const std::vector<std::string> texts{"a", "bb", "ccc", "dddd", "eeeee"};
  const auto recs = fetch_remote(cfg, texts, no_sleep);
  REQUIRE(recs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(recs[i].sentence[0] == static_cast<double>(i + 1));
  CHECK(server.bodies().size() == 3);
  for (const auto& h : server.auth_headers()) CHECK(h == "Bearer sekret");

  cfg.http.token_env = "COGSCREEN_TEST_TOKEN_UNSET";
  CHECK(kind_of([&] { fetch_remote(cfg, texts, no_sleep); }) == ErrorKind::ConfigError);
}

TEST_CASE("remote fetch: retries 500 twice then succeeds") {
  testsupport::NetworkAllowed allow;
  std::atomic<int> calls{0};
  testsupport::MockServer server("/embed", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = 500;
      return;
    }
    res.set_content(R"({"dim":2,"vectors":[[1,2]]})", "application/json");
  });
  std::vector<double> waits;
  const net::Sleeper record = [&](double s) { waits.push_back(s); };
  auto cfg = remote(server.url("/embed"));
  const auto recs = fetch_remote(cfg, {"only"}, record);
  CHECK(recs.size() == 1);
  CHECK(calls == 3);
  REQUIRE(waits.size() == 2);
  const auto schedule = net::backoff_schedule(cfg.http.retry);
  CHECK(waits[0] == schedule[0]);
  CHECK(waits[1] == schedule[1]);
  CHECK(waits[1] > waits[0]);

  calls = -100;  // keep failing
  CHECK(kind_of([&] { fetch_remote(cfg, {"only"}, no_sleep); }) == ErrorKind::NetworkError);
}

TEST_CASE("remote fetch: non-retryable status fails at once") {
  testsupport::NetworkAllowed allow;
  std::atomic<int> calls{0};
  testsupport::MockServer server("/embed", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  CHECK(kind_of([&] { fetch_remote(remote(server.url("/embed")), {"x"}, no_sleep); }) == ErrorKind::NetworkError);
  CHECK(calls == 1);
}

TEST_CASE("remote fetch: schema errors name the index") {
  testsupport::NetworkAllowed allow;
  testsupport::MockServer server("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim":3,"vectors":[[1,2,3],[1,2]]})", "application/json");
  });
  try {
    fetch_remote(remote(server.url("/embed")), {"a", "b"}, no_sleep);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchemaError);
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("remote fetch: token granularity") {
  testsupport::NetworkAllowed allow;
  testsupport::MockServer server("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim":2,"vectors":[[[1,2],[3,4]]],"tokens":[["hi","there"]]})", "application/json");
  });
  auto cfg = remote(server.url("/embed"));
  cfg.granularity = Granularity::Tokens;
  const auto recs = fetch_remote(cfg, {"hi there"}, no_sleep);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].tokens->size() == 2);
  CHECK(recs[0].token_strings == std::vector<std::string>{"hi", "there"});
  CHECK(recs[0].sentence == std::vector<double>{2, 3});
  CHECK(recs[0].pooling == "mean(tokens)");
}

TEST_CASE("network policy forbids remote calls by default") {
  CHECK(net::network_policy() == net::NetworkPolicy::Forbidden);
  CHECK(kind_of([] { fetch_remote(remote("http://127.0.0.1:9/embed"), {"x"}, no_sleep); }) ==
        ErrorKind::NetworkForbidden);
}

TEST_CASE("backoff schedule") {
  net::RetryPolicy p;
  p.max_attempts = 6;
  p.base_delay_s = 1.0;
  p.max_delay_s = 5.0;
  p.jitter = 0.0;
  CHECK(net::backoff_schedule(p) == std::vector<double>{1, 2, 4, 5, 5});
  p.jitter = 0.25;
  const auto s = net::backoff_schedule(p);
  CHECK(s == net::backoff_schedule(p));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double base = std::min(5.0, std::pow(2.0, static_cast<double>(i)));
    CHECK(s[i] >= 0.75 * base);
    CHECK(s[i] <= 1.25 * base);
  }
}

TEST_CASE("hashed embedder") {
  const HashedEmbedder emb(16, 3);
  const auto a = emb.embed("a", "The boy is on the stool.", true);
  CHECK(a.dim == 16);
  CHECK(a.tokens->size() == 6);
  CHECK(a.token_strings.front() == "the");
  CHECK(emb.token_vector("the") == emb.token_vector("the"));
  CHECK(emb.token_vector("the") != emb.token_vector("boy"));
  CHECK(HashedEmbedder(16, 4).token_vector("the") != emb.token_vector("the"));
  CHECK(emb.embed("b", "the boy is on the stool").sentence == a.sentence);
  validate(a);
}

}
