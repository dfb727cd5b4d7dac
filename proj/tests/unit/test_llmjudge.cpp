#include <doctest.h>

#include <functional>
#include <map>
#include <mutex>

#include "cogscreen/augment.hpp"
#include "cogscreen/error.hpp"
#include "cogscreen/llmjudge.hpp"
#include "cogscreen/util.hpp"
#include "test_support.hpp"

using namespace cogscreen;
using namespace cogscreen::llmjudge;

namespace {

// Answers from a lookup keyed by transcript text; flip=true lies on every item.
class LookupClient : public chat::ChatClient {
 public:
  LookupClient(std::map<std::string, Label> truth, bool flip) : truth_(std::move(truth)), flip_(flip) {}
  chat::ChatResponse complete(const chat::ChatRequest& req) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      seen.push_back(req);
    }
    const auto& prompt = req.messages.back().content;
    for (const auto& [text, label] : truth_) {
      if (prompt.find(text) != std::string::npos) {
        const bool is_case = (label == Label::Case) != flip_;
        return {is_case ? "{'label': 'AD'}" : "{\"label\": \"Healthy\"}", 0.25, 1};
      }
    }
    return {"?", 0.25, 1};
  }
  std::vector<chat::ChatRequest> seen;

 private:
  std::map<std::string, Label> truth_;
  bool flip_;
  std::mutex mutex_;
};

std::vector<corpus::Transcript> items() {
  std::vector<corpus::Transcript> ts;
  for (int i = 0; i < 12; ++i) {
    const auto label = i % 3 == 0 ? Label::Case : Label::Control;
    ts.push_back(corpus::make_transcript("J" + std::to_string(i), label, Split::Test,
                                         "the boy reaches for cookie jar " + std::to_string(i) + " ."));
  }
  return ts;
}

std::map<std::string, Label> truth_of(const std::vector<corpus::Transcript>& ts) {
  std::map<std::string, Label> m;
  for (const auto& t : ts) m[t.text] = t.label;
  return m;
}

}  // namespace

TEST_SUITE("llmjudge") {

TEST_CASE("prompt is the fixed instruction followed by the transcript") {
  const auto p = build_classification_prompt("the stool tips over.");
  CHECK(p.rfind(std::string(instruction_text()), 0) == 0);
  CHECK(p.substr(p.size() - 20) == "the stool tips over.");
  CHECK(instruction_text().find("{'label': 'predicted label'}") != std::string_view::npos);
  CHECK(instruction_text().find("'Healthy' for a healthy cognitive state or 'AD' for Alzheimer's disease") !=
        std::string_view::npos);
  CHECK_THROWS_AS(build_classification_prompt("   "), Error);
}

TEST_CASE("instruction carries no linguistic cue hints") {
  CHECK(augment::cue_hits(instruction_text(), augment::linguistic_cue_lexicon()).empty());
  CHECK(instruction_text().find("cookie theft") != std::string_view::npos);
}

TEST_CASE("prompt does not depend on the true label") {
  auto a = corpus::make_transcript("a", Label::Case, Split::Test, "mother dries dishes.");
  auto b = a;
  b.label = Label::Control;
  b.id = "b";
  auto ts = std::vector<corpus::Transcript>{a};
  LookupClient ca({}, false), cb({}, false);
  judge(ca, JudgeConfig{"openai", "gpt-4o"}, a);
  judge(cb, JudgeConfig{"openai", "gpt-4o"}, b);
  CHECK(ca.seen.front().messages.front().content == cb.seen.front().messages.front().content);
}

TEST_CASE("label parsing") {
  CHECK(parse_label("{'label': 'AD'}") == Label::Case);
  CHECK(parse_label("{\"label\": \"Healthy\"}") == Label::Control);
  CHECK(parse_label("```json\n{\"label\": \"Healthy\"}\n```") == Label::Control);
  CHECK(parse_label("Sure! {\"Label\": \"ad\"} hope that helps") == Label::Case);
  CHECK(parse_label("label: AD") == Label::Case);
  CHECK(parse_label("Healthy") == Label::Control);
  CHECK(parse_label("AD.") == Label::Case);
  CHECK_FALSE(parse_label("It could be AD or Healthy."));
  CHECK_FALSE(parse_label("This speaker is not healthy."));
  CHECK_FALSE(parse_label(""));
  CHECK_FALSE(parse_label("{\"label\": \"unknown\"}"));
  CHECK_FALSE(parse_label("{{{{"));
  // "add" and "made" contain the letters but not the word
  CHECK_FALSE(parse_label("I made an addition"));
}

TEST_CASE("temperature policy") {
  CHECK(JudgeConfig{"openai", "gpt-4o"}.effective_temperature() == 0.7);
  CHECK(JudgeConfig{"openai-compatible", "gpt-4o-mini"}.effective_temperature() == 0.7);
  CHECK(JudgeConfig{"openai-compatible", "llama-3.1-8b"}.effective_temperature() == 0.0);
  JudgeConfig c{"openai-compatible", "llama-3.1-8b"};
  c.temperature = 0.3;
  CHECK(c.effective_temperature() == 0.3);
  c.temperature = 2.5;
  CHECK_THROWS_AS(c.validate(), Error);
  const auto j = judge_config_from_json({{"model", "ministral-8b"}, {"max_retries", 1}});
  CHECK(j.max_retries == 1);
  CHECK(j.effective_temperature() == 0.0);
}

TEST_CASE("oracle judge scores F1 1, inverted judge scores F1 0") {
  const auto ts = items();
  LookupClient oracle(truth_of(ts), false), liar(truth_of(ts), true);
  const auto good = evaluate_judge(oracle, JudgeConfig{"openai", "gpt-4o"}, ts);
  const auto bad = evaluate_judge(liar, JudgeConfig{"openai", "gpt-4o"}, ts);
  CHECK(good.report.aggregate.at("f1").mean == 1.0);
  CHECK(good.report.aggregate.at("unparseable_rate").mean == 0.0);
  CHECK(bad.report.aggregate.at("f1").mean == 0.0);
  CHECK(oracle.seen.front().sampling.temperature == 0.7);
  CHECK(oracle.seen.front().max_tokens == 32);
}

TEST_CASE("unparseable replies are retried then counted wrong") {
  const auto ts = items();
  chat::ScriptedChatClient junk({"I cannot tell."});
  JudgeConfig cfg{"openai-compatible", "llama-3.1-8b"};
  cfg.max_retries = 2;
  cfg.max_in_flight = 1;
  const auto e = evaluate_judge(junk, cfg, ts);
  CHECK(junk.requests().size() == 3 * ts.size());
  CHECK(junk.requests()[1].messages.back().content.find(std::string(format_reminder())) != std::string::npos);
  CHECK(e.report.aggregate.at("unparseable_rate").mean == 1.0);
  CHECK(e.report.aggregate.at("f1").mean == 0.0);
  CHECK(e.report.aggregate.at("accuracy").mean == 0.0);
  for (const auto& v : e.verdicts) CHECK(v.attempts == 3);

  chat::ScriptedChatClient second({"hmm", "{\"label\":\"AD\"}"});
  const auto v = judge(second, cfg, ts[0]);
  CHECK(v.attempts == 2);
  CHECK(v.parsed == Label::Case);
}

TEST_CASE("verdict log omits latency") {
  const auto ts = items();
  LookupClient oracle(truth_of(ts), false);
  const auto e = evaluate_judge(oracle, JudgeConfig{"openai", "gpt-4o"}, ts);
  const auto log = verdicts_jsonl(e.verdicts, ts);
  CHECK(log.find("latency") == std::string::npos);
  CHECK(log.find("\"parsed_label\":\"case\"") != std::string::npos);
  CHECK(nlohmann::json::parse(latencies_json(e.verdicts)).at("J0") == 0.25);
  CHECK_THROWS_AS(evaluate_judge(oracle, JudgeConfig{"openai", "gpt-4o"}, {}), Error);
}

TEST_CASE("parse_label fixture suite") {
  const auto fixtures =
      nlohmann::json::parse(read_file(testsupport::test_data() / "llmjudge" / "parse_label_fixtures.json"));
  REQUIRE(fixtures.size() >= 30);
  for (const auto& f : fixtures) {
    const auto got = parse_label(f.at("raw").get<std::string>());
    INFO(f.at("raw").dump());
    if (f.at("expected").is_null()) {
      CHECK_FALSE(got.has_value());
    } else {
      REQUIRE(got.has_value());
      CHECK(to_string(*got) == f.at("expected").get<std::string>());
    }
  }
}

}
