#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cogscreen/augment.hpp"
#include "cogscreen/cli.hpp"
#include "cogscreen/corpus.hpp"
#include "cogscreen/embeddings.hpp"
#include "cogscreen/error.hpp"
#include "cogscreen/features.hpp"
#include "cogscreen/lexicon.hpp"
#include "cogscreen/llmjudge.hpp"
#include "cogscreen/metrics.hpp"
#include "cogscreen/postag.hpp"
#include "cogscreen/textsim.hpp"

namespace py = pybind11;
using namespace cogscreen;

namespace {

Label label_arg(const std::string& name) {
  const auto l = parse_label_name(name);
  if (!l) throw Error(ErrorKind::UnknownLabel, "unknown label '" + name + "'");
  return *l;
}

std::vector<metrics::ScoredPrediction> predictions(const std::vector<std::string>& labels,
                                                   const std::vector<double>& scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::ShapeMismatch, "labels and scores differ in length");
  }
  std::vector<metrics::ScoredPrediction> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back({std::to_string(i), label_arg(labels[i]), scores[i], 0});
  }
  return out;
}

// Lexicon and tagger are loaded once per path.
struct Resources {
  lingfeat::CategoryLexicon lexicon;
  lingfeat::RuleTagger tagger;
};

const Resources& resources(const std::optional<std::string>& lexicon, const std::optional<std::string>& tagger) {
  static std::map<std::pair<std::string, std::string>, Resources> cache;
  const auto lp = lexicon.value_or((cli::default_data_dir() / "lexicon_open.json").string());
  const auto tp = tagger.value_or((cli::default_data_dir() / "postagger.json").string());
  const auto key = std::make_pair(lp, tp);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, Resources{lingfeat::CategoryLexicon::load(lp), lingfeat::RuleTagger::load(tp)}).first;
  }
  return it->second;
}

py::dict transcript_dict(const corpus::Transcript& t) {
  py::dict d;
  d["id"] = t.id;
  d["label"] = std::string(to_string(t.label));
  d["split"] = std::string(to_string(t.split));
  d["text"] = t.text;
  d["word_count"] = t.word_count;
  d["metadata"] = t.metadata;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cogscreen, m) {
  m.doc() = "Speech-transcript screening toolkit: features, metrics, text similarity, judge parsing and the CLI.";

  // Messages read "<ErrorKind>: <detail>".
  static const py::handle error_type = py::exception<Error>(m, "CogscreenError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  // corpus
  m.def("load_manifest", [](const std::string& path) {
    const auto corpus = corpus::load_manifest(path);
    py::list out;
    for (const auto& t : corpus.transcripts()) out.append(transcript_dict(t));
    return out;
  }, py::arg("path"), "Transcripts of a CSV manifest as dicts.");
  m.def("parse_chat", [](const std::string& raw) { return corpus::parse_chat(raw); }, py::arg("raw"));

  // lingfeat
  m.def("feature_names", [] {
    std::vector<std::string> names;
    for (const auto& f : lingfeat::feature_registry()) names.push_back(f.name);
    return names;
  });
  m.def("extract_features",
        [](const std::string& text, std::optional<std::string> lexicon, std::optional<std::string> tagger) {
          const auto& r = resources(lexicon, tagger);
          const auto fv = lingfeat::extract_features(text, r.lexicon, r.tagger);
          return std::vector<double>(fv.begin(), fv.end());
        },
        py::arg("text"), py::arg("lexicon") = py::none(), py::arg("tagger") = py::none(),
        "The 110 registry features of one transcript, in registry order.");

  // embeddings
  m.def("hashed_embedding",
        [](const std::string& text, std::size_t dim, std::uint64_t seed) {
          return embeddings::HashedEmbedder(dim, seed).embed("py", text).sentence;
        },
        py::arg("text"), py::arg("dim") = 64, py::arg("seed") = 0);

  // clsmetrics
  m.def("confusion_f1",
        [](const std::vector<std::string>& labels, const std::vector<double>& scores, double threshold) {
          const auto c = metrics::confusion_f1(predictions(labels, scores), threshold);
          py::dict d;
          d["tp"] = c.tp;
          d["fp"] = c.fp;
          d["tn"] = c.tn;
          d["fn"] = c.fn;
          d["precision"] = c.precision;
          d["recall"] = c.recall;
          d["f1"] = c.f1;
          return d;
        },
        py::arg("labels"), py::arg("scores"), py::arg("threshold") = 0.5);
  m.def("roc_auc", [](const std::vector<std::string>& labels, const std::vector<double>& scores) {
    return metrics::roc_auc(predictions(labels, scores)).auc;
  }, py::arg("labels"), py::arg("scores"));
  m.def("curve", [](const std::string& kind, const std::vector<std::string>& labels, const std::vector<double>& scores) {
    const auto k = metrics::parse_curve_kind(kind);
    if (!k) throw Error(ErrorKind::InvalidArgument, "unknown curve kind '" + kind + "'");
    const auto preds = predictions(labels, scores);
    for (const auto& c : metrics::standard_curves(preds, "py")) {
      if (c.kind == *k) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : c.points) pts.emplace_back(p.x, p.y);
        return pts;
      }
    }
    throw Error(ErrorKind::MissingSeries, "curve '" + kind + "' is undefined for this input");
  }, py::arg("kind"), py::arg("labels"), py::arg("scores"), "(x, y) points of one standard curve.");

  // textsim
  m.def("bleu",
        [](const std::vector<std::vector<std::string>>& candidates,
           const std::vector<std::vector<std::vector<std::string>>>& references, int max_n) {
          const auto r = textsim::bleu(candidates, references, max_n);
          py::dict d;
          d["precision"] = std::vector<double>(r.precision.begin(), r.precision.begin() + max_n);
          d["score"] = std::vector<double>(r.score.begin(), r.score.begin() + max_n);
          d["brevity_penalty"] = r.brevity_penalty;
          d["geometric"] = r.geometric;
          return d;
        },
        py::arg("candidates"), py::arg("references"), py::arg("max_n") = 4);
  m.def("bertscore", [](const textsim::TokenMatrix& cand, const textsim::TokenMatrix& ref) {
    const auto r = textsim::bertscore(cand, ref);
    return py::make_tuple(r.precision, r.recall, r.f1);
  }, py::arg("candidate"), py::arg("reference"), "(precision, recall, f1) by greedy cosine matching.");
  m.def("tsne",
        [](const textsim::Matrix& x, double perplexity, int iterations, std::uint64_t seed) {
          textsim::TsneConfig cfg;
          cfg.perplexity = perplexity;
          cfg.iterations = iterations;
          cfg.seed = seed;
          const auto r = [&] {
            py::gil_scoped_release release;
            return textsim::tsne(x, cfg);
          }();
          std::vector<std::pair<double, double>> pts;
          for (const auto& p : r.coords) pts.emplace_back(p[0], p[1]);
          return py::make_tuple(pts, r.kl);
        },
        py::arg("x"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0,
        "(coordinates, final KL).");
  m.def("silhouette", [](const std::vector<std::pair<double, double>>& pts, const std::vector<int>& labels) {
    std::vector<textsim::Point2> p;
    for (const auto& [a, b] : pts) p.push_back({a, b});
    return textsim::silhouette(p, labels);
  }, py::arg("points"), py::arg("labels"));

  // augment
  m.def("build_finetune_prompt", [](const std::string& label, std::size_t role) {
    return augment::build_finetune_prompt(label_arg(label), role);
  }, py::arg("label"), py::arg("role_index"));
  m.def("cue_hits", [](const std::string& text) { return augment::cue_hits(text); }, py::arg("text"));
  m.def("fourgram_jaccard", &augment::fourgram_jaccard, py::arg("a"), py::arg("b"));

  // llmjudge
  m.def("build_classification_prompt", &llmjudge::build_classification_prompt, py::arg("transcript"));
  m.def("parse_label", [](const std::string& raw) -> std::optional<std::string> {
    const auto l = llmjudge::parse_label(raw);
    if (!l) return std::nullopt;
    return std::string(to_string(*l));
  }, py::arg("raw"), "'case', 'control' or None when the reply is unparseable.");

  // cli
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
