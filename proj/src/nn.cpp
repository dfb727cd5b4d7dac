#include "cogscreen/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::nn {
namespace {

void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw Error(ErrorKind::DimMismatch, std::string(what) + ": expected dimension " + std::to_string(expected) +
                                            ", got " + std::to_string(got));
  }
}

void fill_uniform(std::vector<double>& values, double bound, Rng& rng) {
  for (auto& v : values) v = rng.uniform(-bound, bound);
}

// Parameters live on the float32 grid so that a checkpoint written as
// float32 reloads bit-identically.
void round_to_float(Model& model) {
  for (auto& t : tensors(model)) {
    for (auto& v : t.values) v = static_cast<double>(static_cast<float>(v));
  }
}

struct ModelCache {
  MlpCache mlp;
  FusionCache fusion;
};

Logits forward_cached(const Model& model, const Sample& s, Mode mode, Rng* rng, ModelCache* cache) {
  switch (model.kind) {
    case ModelKind::Embedding:
      return mlp_forward(model.mlp, s.emb, mode, rng, cache ? &cache->mlp : nullptr);
    case ModelKind::Linguistic:
      return mlp_forward(model.mlp, s.ling, mode, rng, cache ? &cache->mlp : nullptr);
    case ModelKind::Fusion:
      return fuse_forward(model.fusion, s.emb, s.ling, mode, rng, cache ? &cache->fusion : nullptr);
  }
  return {0.0, 0.0};
}

void backward_cached(const Model& model, const ModelCache& cache, const Logits& dlogits, Model& grads) {
  if (model.kind == ModelKind::Fusion) {
    fuse_backward(model.fusion, cache.fusion, dlogits, grads.fusion);
  } else {
    mlp_backward(model.mlp, cache.mlp, dlogits, grads.mlp);
  }
}

Model init_model(const TrainConfig& cfg, std::size_t emb_dim, std::size_t ling_dim, Rng& rng) {
  Model m;
  m.kind = cfg.kind;
  switch (cfg.kind) {
    case ModelKind::Embedding:
      m.mlp = MlpParams::init(emb_dim, cfg.hidden, cfg.dropout, rng);
      break;
    case ModelKind::Linguistic:
      m.mlp = MlpParams::init(ling_dim, cfg.hidden, cfg.dropout, rng);
      break;
    case ModelKind::Fusion:
      m.fusion.emb = MlpParams::init(emb_dim, cfg.hidden, cfg.dropout, rng);
      m.fusion.ling = MlpParams::init(ling_dim, cfg.ling_hidden, cfg.ling_dropout, rng);
      m.fusion.gate = 0.0;
      break;
  }
  return m;
}

bool uses_emb(ModelKind k) { return k != ModelKind::Linguistic; }
bool uses_ling(ModelKind k) { return k != ModelKind::Embedding; }

std::vector<metrics::ScoredPrediction> score(const Model& model, const std::vector<Sample>& samples,
                                             std::uint64_t seed) {
  std::vector<metrics::ScoredPrediction> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back({s.id, s.label, p_case(forward_cached(model, s, Mode::Eval, nullptr, nullptr)), seed});
  }
  return out;
}

struct Prepared {
  TrainData data;
  std::optional<lingfeat::Standardizer> standardizer;
};

Prepared prepare(const TrainData& raw, const TrainConfig& cfg) {
  if (raw.train.empty()) throw Error(ErrorKind::EmptySplit, "training split is empty");
  if (raw.validation.empty()) throw Error(ErrorKind::EmptySplit, "validation split is empty");
  Prepared p{raw, std::nullopt};
  const auto& first = raw.train.front();
  auto check_all = [&](const std::vector<Sample>& split) {
    for (const auto& s : split) {
      if (uses_emb(cfg.kind)) check_dim(first.emb.size(), s.emb.size(), ("embedding of " + s.id).c_str());
      if (uses_ling(cfg.kind)) check_dim(first.ling.size(), s.ling.size(), ("features of " + s.id).c_str());
    }
  };
  check_all(raw.train);
  check_all(raw.validation);
  check_all(raw.test);
  if (uses_emb(cfg.kind) && first.emb.empty()) throw Error(ErrorKind::DimMismatch, "embeddings are empty");
  if (uses_ling(cfg.kind)) {
    if (first.ling.empty()) throw Error(ErrorKind::DimMismatch, "linguistic features are empty");
    std::vector<std::vector<double>> rows;
    for (const auto& s : raw.train) rows.push_back(s.ling);
    p.standardizer = lingfeat::fit_standardizer(rows);
    for (auto* split : {&p.data.train, &p.data.validation, &p.data.test}) {
      for (auto& s : *split) s.ling = p.standardizer->apply(s.ling);
    }
  }
  return p;
}

struct SeedAbort {
  int epoch;
  std::size_t batch;
  std::string message;
};

Checkpoint run_seed(const Prepared& prep, const TrainConfig& cfg, std::uint64_t seed) {
  const auto& train = prep.data.train;
  Rng rng(seed);
  Model model = init_model(cfg, train.front().emb.size(), train.front().ling.size(), rng);
  round_to_float(model);

  AdamWState opt;
  opt.hyper.lr = cfg.lr;
  opt.hyper.weight_decay = cfg.weight_decay;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Model best = model;
  int best_epoch = 0;
  double best_f1 = -1.0;
  ModelCache cache;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      Model grads = model.zeros_like();
      double loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        const auto logits = forward_cached(model, s, Mode::Train, &rng, &cache);
        loss += cross_entropy(logits, s.label);
        auto dl = cross_entropy_grad(logits, s.label);
        dl[0] *= inv_b;
        dl[1] *= inv_b;
        backward_cached(model, cache, dl, grads);
      }
      loss *= inv_b;
      if (!std::isfinite(loss)) {
        throw SeedAbort{epoch, batch_index, "non-finite training loss"};
      }
      auto pt = tensors(model);
      auto gt = tensors(grads);
      std::vector<std::span<double>> ps;
      std::vector<std::span<const double>> gs;
      for (auto& t : pt) ps.push_back(t.values);
      for (auto& t : gt) gs.push_back(t.values);
      adamw_step(opt, ps, gs);
      round_to_float(model);
    }
    const auto val = score(model, prep.data.validation, seed);
    const double f1 = metrics::confusion_f1(val).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_epoch = epoch;
      best = model;
    }
    spdlog::debug("seed {} epoch {} val_f1 {:.4f}", seed, epoch, f1);
  }

  Checkpoint ckpt;
  ckpt.model = std::move(best);
  ckpt.config = cfg;
  ckpt.seed = seed;
  ckpt.best_epoch = best_epoch;
  ckpt.val_f1 = best_f1;
  ckpt.standardizer = prep.standardizer;
  ckpt.embedding_provider = prep.data.embedding_provider;
  return ckpt;
}

std::map<std::string, double> split_metrics(const std::vector<metrics::ScoredPrediction>& preds,
                                             const std::string& prefix) {
  std::map<std::string, double> m;
  if (preds.empty()) return m;
  const auto c = metrics::confusion_f1(preds);
  m[prefix + "f1"] = c.f1;
  m[prefix + "precision"] = c.precision;
  m[prefix + "recall"] = c.recall;
  const bool has_case = std::any_of(preds.begin(), preds.end(), [](auto& p) { return p.true_label == Label::Case; });
  const bool has_control =
      std::any_of(preds.begin(), preds.end(), [](auto& p) { return p.true_label == Label::Control; });
  if (has_case && has_control) m[prefix + "auc"] = metrics::roc_auc(preds).auc;
  return m;
}

std::string encode_payload(Model& model) {
  std::vector<unsigned char> bytes;
  for (auto& t : tensors(model)) {
    for (double v : t.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu));
    }
  }
  return base64_encode(bytes);
}

}  // namespace

MlpParams MlpParams::zeros(std::size_t input_dim, std::size_t hidden, double dropout) {
  MlpParams p;
  p.w1 = Matrix(hidden, input_dim);
  p.b1.assign(hidden, 0.0);
  p.w2 = Matrix(2, hidden);
  p.b2.assign(2, 0.0);
  p.dropout = dropout;
  return p;
}

MlpParams MlpParams::init(std::size_t input_dim, std::size_t hidden, double dropout, Rng& rng) {
  if (input_dim == 0 || hidden == 0) throw Error(ErrorKind::InvalidArgument, "MLP dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::InvalidArgument, "dropout must lie in [0,1)");
  MlpParams p = zeros(input_dim, hidden, dropout);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w1.data, bound1, rng);
  fill_uniform(p.b1, bound1, rng);
  fill_uniform(p.w2.data, bound2, rng);
  fill_uniform(p.b2, bound2, rng);
  return p;
}

Logits mlp_forward(const MlpParams& params, std::span<const double> x, Mode mode, Rng* rng, MlpCache* cache) {
  check_dim(params.input_dim(), x.size(), "mlp input");
  const std::size_t h = params.hidden_size();
  const bool drop = mode == Mode::Train && params.dropout > 0.0;
  if (drop && rng == nullptr) throw Error(ErrorKind::InvalidArgument, "train-mode dropout needs an rng");
  const double keep_scale = drop ? 1.0 / (1.0 - params.dropout) : 1.0;

  MlpCache local;
  MlpCache& c = cache ? *cache : local;
  c.x.assign(x.begin(), x.end());
  c.pre.assign(h, 0.0);
  c.mask.assign(h, 1.0);
  c.hidden.assign(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    double acc = params.b1[i];
    const double* row = &params.w1.data[i * params.w1.cols];
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    c.pre[i] = acc;
    if (drop) c.mask[i] = rng->uniform() < params.dropout ? 0.0 : keep_scale;
    // NaN passes through so a poisoned input surfaces as a non-finite loss.
    c.hidden[i] = (acc > 0.0 || std::isnan(acc) ? acc : 0.0) * c.mask[i];
  }
  Logits z{params.b2[0], params.b2[1]};
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < h; ++i) z[k] += params.w2(k, i) * c.hidden[i];
  }
  return z;
}

void mlp_backward(const MlpParams& params, const MlpCache& cache, const Logits& dlogits, MlpParams& grads) {
  const std::size_t h = params.hidden_size();
  const std::size_t d = params.input_dim();
  for (std::size_t k = 0; k < 2; ++k) {
    grads.b2[k] += dlogits[k];
    for (std::size_t i = 0; i < h; ++i) grads.w2(k, i) += dlogits[k] * cache.hidden[i];
  }
  for (std::size_t i = 0; i < h; ++i) {
    if (cache.pre[i] <= 0.0 || cache.mask[i] == 0.0) continue;
    const double dpre = (dlogits[0] * params.w2(0, i) + dlogits[1] * params.w2(1, i)) * cache.mask[i];
    grads.b1[i] += dpre;
    double* row = &grads.w1.data[i * d];
    for (std::size_t j = 0; j < d; ++j) row[j] += dpre * cache.x[j];
  }
}

std::array<double, 2> softmax(const Logits& z) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m);
  const double e1 = std::exp(z[1] - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

double p_case(const Logits& logits) { return softmax(logits)[0]; }

Label predicted_label(const Logits& logits) { return p_case(logits) >= 0.5 ? Label::Case : Label::Control; }

double cross_entropy(const Logits& z, Label target) {
  const double m = std::max(z[0], z[1]);
  const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
  return lse - z[static_cast<std::size_t>(label_index(target))];
}

Logits cross_entropy_grad(const Logits& logits, Label target) {
  auto p = softmax(logits);
  p[static_cast<std::size_t>(label_index(target))] -= 1.0;
  return {p[0], p[1]};
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Logits fuse_forward(const FusionParams& fp, std::span<const double> x_emb, std::span<const double> x_ling,
                    Mode mode, Rng* rng, FusionCache* cache) {
  FusionCache local;
  FusionCache& c = cache ? *cache : local;
  c.z_emb = mlp_forward(fp.emb, x_emb, mode, rng, &c.emb);
  c.z_ling = mlp_forward(fp.ling, x_ling, mode, rng, &c.ling);
  c.alpha = sigmoid(fp.gate);
  return {c.alpha * c.z_emb[0] + (1.0 - c.alpha) * c.z_ling[0],
          c.alpha * c.z_emb[1] + (1.0 - c.alpha) * c.z_ling[1]};
}

void fuse_backward(const FusionParams& fp, const FusionCache& cache, const Logits& dlogits, FusionParams& grads) {
  const double a = cache.alpha;
  mlp_backward(fp.emb, cache.emb, {a * dlogits[0], a * dlogits[1]}, grads.emb);
  mlp_backward(fp.ling, cache.ling, {(1.0 - a) * dlogits[0], (1.0 - a) * dlogits[1]}, grads.ling);
  double dalpha = 0.0;
  for (std::size_t k = 0; k < 2; ++k) dalpha += dlogits[k] * (cache.z_emb[k] - cache.z_ling[k]);
  grads.gate += a * (1.0 - a) * dalpha;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Embedding: return "embedding";
    case ModelKind::Linguistic: return "linguistic";
    case ModelKind::Fusion: return "fusion";
  }
  return "";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  const auto lower = to_lower(name);
  for (auto k : {ModelKind::Embedding, ModelKind::Linguistic, ModelKind::Fusion}) {
    if (to_string(k) == lower) return k;
  }
  return std::nullopt;
}

Model Model::zeros_like() const {
  Model z;
  z.kind = kind;
  z.mlp = MlpParams::zeros(mlp.input_dim(), mlp.hidden_size(), mlp.dropout);
  z.fusion.emb = MlpParams::zeros(fusion.emb.input_dim(), fusion.emb.hidden_size(), fusion.emb.dropout);
  z.fusion.ling = MlpParams::zeros(fusion.ling.input_dim(), fusion.ling.hidden_size(), fusion.ling.dropout);
  z.fusion.gate = 0.0;
  return z;
}

std::vector<NamedTensor> tensors(Model& model) {
  std::vector<NamedTensor> out;
  auto add_mlp = [&out](const std::string& prefix, MlpParams& p) {
    out.push_back({prefix + "w1", {p.w1.rows, p.w1.cols}, p.w1.data});
    out.push_back({prefix + "b1", {p.b1.size()}, p.b1});
    out.push_back({prefix + "w2", {p.w2.rows, p.w2.cols}, p.w2.data});
    out.push_back({prefix + "b2", {p.b2.size()}, p.b2});
  };
  if (model.kind == ModelKind::Fusion) {
    add_mlp("emb.", model.fusion.emb);
    add_mlp("ling.", model.fusion.ling);
    out.push_back({"gate", {1}, std::span<double>(&model.fusion.gate, 1)});
  } else {
    add_mlp("", model.mlp);
  }
  return out;
}

Logits model_forward(const Model& model, const Sample& sample, Mode mode, Rng* rng) {
  return forward_cached(model, sample, mode, rng, nullptr);
}

void adamw_step(AdamWState& state, std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw Error(ErrorKind::ShapeMismatch, "adamw: tensor count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "adamw: state shape mismatch");
  const auto& h = state.hyper;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (p.size() != g.size() || p.size() != m.size()) {
      throw Error(ErrorKind::ShapeMismatch, "adamw: tensor " + std::to_string(i) + " shape mismatch");
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= h.lr * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * p[j]);
    }
  }
}

TrainConfig TrainConfig::defaults(ModelKind kind) {
  TrainConfig c;
  c.kind = kind;
  switch (kind) {
    case ModelKind::Embedding:
      c.hidden = 256;
      c.dropout = 0.4;
      c.lr = 2e-5;
      c.weight_decay = 2e-3;
      break;
    case ModelKind::Linguistic:
      c.hidden = 64;
      c.dropout = 0.0;
      c.lr = 8e-3;
      c.weight_decay = 1e-3;
      break;
    case ModelKind::Fusion:
      c.hidden = 256;
      c.ling_hidden = 128;
      c.dropout = 0.4;
      c.ling_dropout = 0.0;
      c.lr = 2e-5;
      c.weight_decay = 2e-3;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
  if (epochs < 1) bad("epochs must be at least 1");
  if (batch_size < 1) bad("batch_size must be at least 1");
  if (seeds.empty()) bad("seed list is empty");
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("lr must be finite and non-negative");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) bad("weight_decay must be finite and non-negative");
  if (hidden < 1 || ling_hidden < 1) bad("hidden sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0) || !(ling_dropout >= 0.0 && ling_dropout < 1.0)) {
    bad("dropout must lie in [0,1)");
  }
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["model_kind"] = to_string(cfg.kind);
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["seeds"] = cfg.seeds;
  j["hidden"] = cfg.hidden;
  j["ling_hidden"] = cfg.ling_hidden;
  j["dropout"] = cfg.dropout;
  j["ling_dropout"] = cfg.ling_dropout;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  const auto kind = parse_model_kind(j.at("model_kind").get<std::string>());
  if (!kind) throw Error(ErrorKind::ConfigError, "unknown model_kind " + j.at("model_kind").dump());
  TrainConfig c = TrainConfig::defaults(*kind);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  c.hidden = j.value("hidden", c.hidden);
  c.ling_hidden = j.value("ling_hidden", c.ling_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.ling_dropout = j.value("ling_dropout", c.ling_dropout);
  c.validate();
  return c;
}

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt) {
  Model model = ckpt.model;
  nlohmann::ordered_json j;
  j["format"] = "cogscreen-checkpoint";
  j["version"] = Checkpoint::kFormatVersion;
  j["model_kind"] = to_string(model.kind);
  j["config"] = to_json(ckpt.config);
  j["seed"] = ckpt.seed;
  j["best_epoch"] = ckpt.best_epoch;
  j["val_f1"] = ckpt.val_f1;
  j["metrics"] = ckpt.metrics;
  j["embedding_provider"] = ckpt.embedding_provider;
  if (ckpt.standardizer) {
    j["standardizer"] = {{"mean", ckpt.standardizer->mean}, {"scale", ckpt.standardizer->scale}};
  } else {
    j["standardizer"] = nullptr;
  }
  auto table = nlohmann::ordered_json::array();
  for (auto& t : tensors(model)) table.push_back({{"name", t.name}, {"shape", t.shape}});
  j["tensors"] = std::move(table);
  j["dtype"] = "float32-le";
  j["payload"] = encode_payload(model);
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "cogscreen-checkpoint") {
      throw Error(ErrorKind::SchemaError, "not a cogscreen checkpoint");
    }
    if (j.at("version").get<int>() != Checkpoint::kFormatVersion) {
      throw Error(ErrorKind::SchemaError, "unsupported checkpoint version " + j.at("version").dump());
    }
    Checkpoint c;
    c.config = train_config_from_json(j.at("config"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.best_epoch = j.at("best_epoch").get<int>();
    c.val_f1 = j.at("val_f1").get<double>();
    c.metrics = nlohmann::ordered_json::parse(j.at("metrics").dump());
    c.embedding_provider = j.value("embedding_provider", "");
    if (!j.at("standardizer").is_null()) {
      lingfeat::Standardizer s;
      s.mean = j["standardizer"].at("mean").get<std::vector<double>>();
      s.scale = j["standardizer"].at("scale").get<std::vector<double>>();
      c.standardizer = std::move(s);
    }

    // Rebuild shapes from the tensor table, then fill from the payload.
    std::map<std::string, std::vector<std::size_t>> shapes;
    for (const auto& t : j.at("tensors")) {
      shapes[t.at("name").get<std::string>()] = t.at("shape").get<std::vector<std::size_t>>();
    }
    auto shape_of = [&](const std::string& name) {
      const auto it = shapes.find(name);
      if (it == shapes.end()) throw Error(ErrorKind::SchemaError, "checkpoint lacks tensor " + name);
      return it->second;
    };
    auto make_mlp = [&](const std::string& prefix, double dropout) {
      const auto w1 = shape_of(prefix + "w1");
      if (w1.size() != 2) throw Error(ErrorKind::SchemaError, "bad shape for " + prefix + "w1");
      return MlpParams::zeros(w1[1], w1[0], dropout);
    };
    c.model.kind = c.config.kind;
    if (c.model.kind == ModelKind::Fusion) {
      c.model.fusion.emb = make_mlp("emb.", c.config.dropout);
      c.model.fusion.ling = make_mlp("ling.", c.config.ling_dropout);
    } else {
      c.model.mlp = make_mlp("", c.config.dropout);
    }
    const auto bytes = base64_decode(j.at("payload").get<std::string>());
    std::size_t offset = 0;
    for (auto& t : tensors(c.model)) {
      if (shape_of(t.name) != t.shape) throw Error(ErrorKind::SchemaError, "shape mismatch for tensor " + t.name);
      for (auto& v : t.values) {
        if (offset + 4 > bytes.size()) throw Error(ErrorKind::SchemaError, "checkpoint payload truncated");
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
        v = static_cast<double>(std::bit_cast<float>(bits));
        offset += 4;
      }
    }
    if (offset != bytes.size()) throw Error(ErrorKind::SchemaError, "checkpoint payload has trailing bytes");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, checkpoint_to_json(ckpt).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

double predict_proba(const Checkpoint& ckpt, const Sample& sample) {
  Sample s = sample;
  if (uses_ling(ckpt.model.kind) && ckpt.standardizer) {
    check_dim(ckpt.standardizer->mean.size(), s.ling.size(), "linguistic features");
    s.ling = ckpt.standardizer->apply(s.ling);
  }
  return p_case(forward_cached(ckpt.model, s, Mode::Eval, nullptr, nullptr));
}

Checkpoint train_seed(const TrainData& data, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto prep = prepare(data, cfg);
  try {
    return run_seed(prep, cfg, seed);
  } catch (const SeedAbort& a) {
    throw Error(ErrorKind::NumericalFailure, "seed " + std::to_string(seed) + " epoch " + std::to_string(a.epoch) +
                                                 " batch " + std::to_string(a.batch) + ": " + a.message);
  }
}

TrainResult train(const TrainData& data, const TrainConfig& cfg) {
  cfg.validate();
  const auto prep = prepare(data, cfg);
  TrainResult result;
  result.report.model_kind = std::string(to_string(cfg.kind));
  result.report.dataset = data.dataset;

  std::vector<std::map<std::string, double>> seed_metrics;
  std::vector<metrics::ScoredPrediction> all_test;
  for (auto seed : cfg.seeds) {
    Checkpoint ckpt;
    try {
      ckpt = run_seed(prep, cfg, seed);
    } catch (const SeedAbort& a) {
      spdlog::error("seed {} aborted at epoch {} batch {}: {}", seed, a.epoch, a.batch, a.message);
      result.failures.push_back({seed, a.epoch, a.batch, a.message});
      continue;
    }
    const auto val = score(ckpt.model, prep.data.validation, seed);
    const auto test = score(ckpt.model, prep.data.test, seed);
    auto m = split_metrics(test, "test_");
    for (auto& [k, v] : split_metrics(val, "val_")) m[k] = v;
    m["best_epoch"] = ckpt.best_epoch;
    for (const auto& [k, v] : m) ckpt.metrics[k] = v;
    seed_metrics.push_back(m);
    result.report.per_seed.emplace_back(seed, m);
    all_test.insert(all_test.end(), test.begin(), test.end());
    result.checkpoints.push_back(std::move(ckpt));
  }
  if (result.checkpoints.empty()) {
    throw Error(ErrorKind::NumericalFailure, "every seed aborted with a non-finite loss");
  }
  result.report.aggregate = metrics::aggregate_seeds(seed_metrics);
  result.report.predictions = all_test;

  if (!prep.data.test.empty()) {
    // Curves use the across-seed mean probability per test sample.
    std::vector<metrics::ScoredPrediction> mean_preds;
    const auto n = prep.data.test.size();
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t s = 0; s < result.checkpoints.size(); ++s) sum += all_test[s * n + i].p_case;
      mean_preds.push_back({prep.data.test[i].id, prep.data.test[i].label,
                            sum / static_cast<double>(result.checkpoints.size()), 0});
    }
    result.report.curves = metrics::standard_curves(mean_preds, "test");
  }
  if (!result.failures.empty()) {
    auto f = nlohmann::ordered_json::array();
    for (const auto& x : result.failures) {
      f.push_back({{"seed", x.seed}, {"epoch", x.epoch}, {"batch", x.batch}, {"message", x.message}});
    }
    result.report.extra["failures"] = std::move(f);
  }
  result.report.extra["config"] = to_json(cfg);
  return result;
}

}  // namespace cogscreen::nn
