#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cogscreen/features.hpp"
#include "cogscreen/metrics.hpp"
#include "cogscreen/rng.hpp"
#include "cogscreen/types.hpp"

namespace cogscreen::nn {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Index 0 is Case, index 1 is Control.
using Logits = std::array<double, 2>;

enum class Mode { Train, Eval };

struct MlpParams {
  Matrix w1;               // h x d
  std::vector<double> b1;  // h
  Matrix w2;               // 2 x h
  std::vector<double> b2;  // 2
  double dropout = 0.0;

  static MlpParams zeros(std::size_t input_dim, std::size_t hidden, double dropout = 0.0);
  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike.
  static MlpParams init(std::size_t input_dim, std::size_t hidden, double dropout, Rng& rng);

  std::size_t input_dim() const { return w1.cols; }
  std::size_t hidden_size() const { return w1.rows; }
};

struct MlpCache {
  std::vector<double> x;
  std::vector<double> pre;     // W1 x + b1
  std::vector<double> mask;    // 0 or 1/(1-p) per hidden unit; all 1 in eval
  std::vector<double> hidden;  // relu(pre) * mask
};

// rng is only consulted in Train mode with a non-zero dropout rate.
Logits mlp_forward(const MlpParams& params, std::span<const double> x, Mode mode, Rng* rng,
                   MlpCache* cache = nullptr);

// Accumulates d(loss)/d(params) into grads given d(loss)/d(logits).
void mlp_backward(const MlpParams& params, const MlpCache& cache, const Logits& dlogits, MlpParams& grads);

std::array<double, 2> softmax(const Logits& logits);
double p_case(const Logits& logits);
// Case iff p_case >= 0.5, so hard labels and metric thresholds always agree.
Label predicted_label(const Logits& logits);
double cross_entropy(const Logits& logits, Label target);
// softmax - onehot(target)
Logits cross_entropy_grad(const Logits& logits, Label target);

struct FusionParams {
  MlpParams emb;
  MlpParams ling;
  double gate = 0.0;
};

double sigmoid(double x);

struct FusionCache {
  MlpCache emb;
  MlpCache ling;
  Logits z_emb{};
  Logits z_ling{};
  double alpha = 0.5;
};

// alpha * z_emb + (1 - alpha) * z_ling with alpha = sigmoid(gate).
Logits fuse_forward(const FusionParams& fp, std::span<const double> x_emb, std::span<const double> x_ling,
                    Mode mode, Rng* rng, FusionCache* cache = nullptr);
void fuse_backward(const FusionParams& fp, const FusionCache& cache, const Logits& dlogits, FusionParams& grads);

enum class ModelKind { Embedding, Linguistic, Fusion };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

struct Model {
  ModelKind kind = ModelKind::Embedding;
  MlpParams mlp;  // Embedding and Linguistic
  FusionParams fusion;

  // Zero-filled parameters with this model's shapes.
  Model zeros_like() const;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> values;
};

// Stable order used by the optimizer and the checkpoint payload.
std::vector<NamedTensor> tensors(Model& model);

struct Sample {
  std::string id;
  Label label = Label::Control;
  std::vector<double> emb;
  std::vector<double> ling;
};

Logits model_forward(const Model& model, const Sample& sample, Mode mode, Rng* rng);

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  AdamWHyper hyper;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p). Moment
// buffers are created on the first call.
void adamw_step(AdamWState& state, std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads);

struct TrainConfig {
  ModelKind kind = ModelKind::Fusion;
  int epochs = 50;
  std::size_t batch_size = 8;
  double lr = 2e-5;
  double weight_decay = 2e-3;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t hidden = 256;       // single-branch hidden size, or the embedding branch
  std::size_t ling_hidden = 128;  // fusion's linguistic branch
  double dropout = 0.4;
  double ling_dropout = 0.0;

  static TrainConfig defaults(ModelKind kind);
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  Model model;
  TrainConfig config;
  std::uint64_t seed = 0;
  int best_epoch = 0;  // 1-based
  double val_f1 = 0.0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::optional<lingfeat::Standardizer> standardizer;  // applied to raw linguistic features
  std::string embedding_provider;
};

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Sample carries raw features; the checkpoint's standardizer is applied to
// the linguistic part. Throws DimMismatch.
double predict_proba(const Checkpoint& ckpt, const Sample& sample);

struct TrainData {
  std::string dataset;
  std::string embedding_provider;
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

struct SeedFailure {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::size_t batch = 0;
  std::string message;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<SeedFailure> failures;
  metrics::EvalReport report;
};

// One run per seed. A non-finite loss aborts that seed and is reported in
// failures; if every seed fails NumericalFailure is thrown.
TrainResult train(const TrainData& data, const TrainConfig& cfg);

// Trains a single seed; exposed for tests.
Checkpoint train_seed(const TrainData& data, const TrainConfig& cfg, std::uint64_t seed);

}  // namespace cogscreen::nn
