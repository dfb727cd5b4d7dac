#include <doctest.h>

#include <cmath>

#include "cogscreen/error.hpp"
#include "cogscreen/nn.hpp"
#include "cogscreen/rng.hpp"
#include "test_support.hpp"

using namespace cogscreen;
using namespace cogscreen::nn;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

struct Example {
  std::vector<double> x_emb;
  std::vector<double> x_ling;
  Label label;
};

double batch_loss(const Model& m, const std::vector<Example>& batch) {
  double loss = 0.0;
  for (const auto& e : batch) {
    Sample s{"", e.label, e.x_emb, e.x_ling};
    loss += cross_entropy(model_forward(m, s, Mode::Eval, nullptr), e.label);
  }
  return loss / static_cast<double>(batch.size());
}

Model batch_grads(const Model& m, const std::vector<Example>& batch) {
  Model g = m.zeros_like();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& e : batch) {
    if (m.kind == ModelKind::Fusion) {
      FusionCache c;
      const auto z = fuse_forward(m.fusion, e.x_emb, e.x_ling, Mode::Eval, nullptr, &c);
      auto dl = cross_entropy_grad(z, e.label);
      fuse_backward(m.fusion, c, {dl[0] * inv, dl[1] * inv}, g.fusion);
    } else {
      MlpCache c;
      const auto z = mlp_forward(m.mlp, e.x_emb, Mode::Eval, nullptr, &c);
      auto dl = cross_entropy_grad(z, e.label);
      mlp_backward(m.mlp, c, {dl[0] * inv, dl[1] * inv}, g.mlp);
    }
  }
  return g;
}

// Central differences against the analytic gradient for every parameter.
void check_gradients(Model m, const std::vector<Example>& batch) {
  Model analytic = batch_grads(m, batch);
  auto pt = tensors(m);
  auto gt = tensors(analytic);
  const double eps = 1e-5;
  for (std::size_t t = 0; t < pt.size(); ++t) {
    for (std::size_t i = 0; i < pt[t].values.size(); ++i) {
      const double orig = pt[t].values[i];
      pt[t].values[i] = orig + eps;
      const double up = batch_loss(m, batch);
      pt[t].values[i] = orig - eps;
      const double down = batch_loss(m, batch);
      pt[t].values[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      INFO(pt[t].name << "[" << i << "]");
      REQUIRE(rel_err(gt[t].values[i], numeric) < 1e-6);
    }
  }
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// 20 points in 2-D separated by margin 1 around the line x0 + x1 = 0.
TrainData separable_data() {
  TrainData d;
  d.dataset = "separable";
  Rng rng(99);
  auto make_split = [&](int n, const std::string& prefix) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
      const bool is_case = i % 2 == 0;
      const double along = rng.uniform(-2.0, 2.0);
      const double offset = (is_case ? 1.0 : -1.0) * rng.uniform(0.5, 2.0) * std::sqrt(2.0);
      const double x0 = along / std::sqrt(2.0) + offset / 2.0;
      const double x1 = -along / std::sqrt(2.0) + offset / 2.0;
      out.push_back({prefix + std::to_string(i), is_case ? Label::Case : Label::Control, {x0, x1}, {x0, x1}});
    }
    return out;
  };
  d.train = make_split(20, "tr");
  d.validation = make_split(20, "va");
  d.test = make_split(10, "te");
  return d;
}

}  // namespace

TEST_SUITE("neuralnet") {

TEST_CASE("mlp_forward examples") {
  auto zero = MlpParams::zeros(3, 4);
  const auto z0 = mlp_forward(zero, std::vector<double>{1, 2, 3}, Mode::Eval, nullptr);
  CHECK(z0[0] == 0.0);
  CHECK(z0[1] == 0.0);

  auto p = MlpParams::zeros(1, 1);
  p.w1(0, 0) = 2;
  p.w2(0, 0) = 1;
  p.w2(1, 0) = -1;
  const auto z = mlp_forward(p, std::vector<double>{3}, Mode::Eval, nullptr);
  CHECK(z[0] == 6.0);
  CHECK(z[1] == -6.0);

  Rng init(1);
  auto q = MlpParams::init(5, 7, 0.0, init);
  Rng rng(2);
  const std::vector<double> x{0.3, -1, 2, 0.5, 0.1};
  CHECK(mlp_forward(q, x, Mode::Train, &rng) == mlp_forward(q, x, Mode::Eval, nullptr));
  CHECK_THROWS_AS(mlp_forward(q, std::vector<double>{1, 2}, Mode::Eval, nullptr), Error);
}

TEST_CASE("softmax and cross-entropy gradient") {
  const auto g = cross_entropy_grad({0.0, 0.0}, Label::Case);
  CHECK(g[0] == -0.5);
  CHECK(g[1] == 0.5);
  const auto s = softmax({1.0, 2.0});
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(s[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(s[1] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p_case({0.0, 0.0}) == 0.5);
  CHECK(p_case({-10.0, 10.0}) < 1e-8);
  CHECK(p_case({10.0, -10.0}) > 1 - 1e-8);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Logits z{rng.normal() * 50, rng.normal() * 50};
    const auto p = softmax(z);
    REQUIRE(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
    REQUIRE(p[0] >= 0.0);
    REQUIRE(p[0] <= 1.0);
  }
}

TEST_CASE("mlp gradients match central differences") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Model m;
    m.kind = ModelKind::Embedding;
    m.mlp = MlpParams::init(5, 4, 0.0, rng);
    std::vector<Example> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({random_vec(rng, 5), {}, i % 2 ? Label::Case : Label::Control});
    check_gradients(m, batch);
  }
}

TEST_CASE("fusion gradients match central differences, gate included") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Model m;
    m.kind = ModelKind::Fusion;
    m.fusion.emb = MlpParams::init(5, 4, 0.0, rng);
    m.fusion.ling = MlpParams::init(3, 3, 0.0, rng);
    m.fusion.gate = rng.normal();
    std::vector<Example> batch;
    for (int i = 0; i < 3; ++i) {
      batch.push_back({random_vec(rng, 5), random_vec(rng, 3), i % 2 ? Label::Case : Label::Control});
    }
    check_gradients(m, batch);
  }
}

TEST_CASE("stationary point gives zero output-layer gradient") {
  Model m;
  m.kind = ModelKind::Embedding;
  m.mlp = MlpParams::zeros(3, 4);
  const std::vector<Example> batch{{{1, 2, 3}, {}, Label::Case}, {{-1, 0.5, 2}, {}, Label::Control}};
  const auto g = batch_grads(m, batch);
  for (double v : g.mlp.w2.data) CHECK(v == 0.0);
  for (double v : g.mlp.b2) CHECK(v == 0.0);
}

TEST_CASE("dropout: identity in eval, unbiased in train") {
  Rng init(6);
  auto p = MlpParams::init(4, 16, 0.4, init);
  const std::vector<double> x{0.5, -0.2, 1.0, 0.3};
  MlpCache eval_cache;
  mlp_forward(p, x, Mode::Eval, nullptr, &eval_cache);
  for (double m : eval_cache.mask) CHECK(m == 1.0);

  Rng rng(7);
  std::vector<double> sum(16, 0.0);
  const int draws = 400000;
  for (int i = 0; i < draws; ++i) {
    MlpCache c;
    mlp_forward(p, x, Mode::Train, &rng, &c);
    for (std::size_t k = 0; k < 16; ++k) sum[k] += c.hidden[k];
  }
  for (std::size_t k = 0; k < 16; ++k) {
    const double expected = eval_cache.hidden[k];
    if (expected == 0.0) {
      CHECK(sum[k] == 0.0);
    } else {
      CHECK(std::abs(sum[k] / draws - expected) <= 0.01 * std::abs(expected) + 0.0);
    }
  }
}

TEST_CASE("adamw examples") {
  auto step = [](double w, double g, AdamWHyper h) {
    AdamWState s{h, {}, {}, 0};
    std::vector<double> p{w};
    std::vector<double> gr{g};
    std::vector<std::span<double>> ps{p};
    std::vector<std::span<const double>> gs{gr};
    adamw_step(s, ps, gs);
    CHECK(s.t == 1);
    return p[0];
  };
  CHECK(step(1.0, 2.0, {0.1, 0.9, 0.999, 1e-8, 0.0}) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(step(1.0, 0.0, {0.1, 0.9, 0.999, 1e-8, 0.0}) == 1.0);
  CHECK(step(1.0, 5.0, {0.0, 0.9, 0.999, 1e-8, 0.3}) == 1.0);
  // Decay alone: w <- w - lr * wd * w.
  CHECK(step(2.0, 0.0, {0.1, 0.9, 0.999, 1e-8, 0.5}) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("decoupled decay differs from an L2 penalty") {
  // f(w) = (w - 3)^2 / 2. Run A uses decoupled decay; run B folds the same
  // coefficient into the gradient.
  const double lr = 0.05, wd = 0.1;
  AdamWState a{{lr, 0.9, 0.999, 1e-8, wd}, {}, {}, 0};
  AdamWState b{{lr, 0.9, 0.999, 1e-8, 0.0}, {}, {}, 0};
  std::vector<double> wa{10.0}, wb{10.0};
  for (int i = 0; i < 500; ++i) {
    std::vector<double> ga{wa[0] - 3.0};
    std::vector<double> gb{wb[0] - 3.0 + wd * wb[0]};
    std::vector<std::span<double>> pa{wa}, pb{wb};
    std::vector<std::span<const double>> sa{ga}, sb{gb};
    adamw_step(a, pa, sa);
    adamw_step(b, pb, sb);
  }
  // L2 converges near 3/(1+wd); decoupled decay near the root of
  // m_hat/sqrt(v_hat) = -wd*w, which is a different point.
  CHECK(std::abs(wb[0] - 3.0 / 1.1) < 0.05);
  CHECK(std::abs(wa[0] - wb[0]) > 0.05);
}

TEST_CASE("fusion examples") {
  FusionParams fp;
  fp.emb = MlpParams::zeros(1, 1);
  fp.ling = MlpParams::zeros(1, 1);
  fp.emb.b2 = {2.0, 0.0};
  fp.ling.b2 = {0.0, 2.0};
  const std::vector<double> x{0.0};
  auto z = fuse_forward(fp, x, x, Mode::Eval, nullptr);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 1.0);
  fp.gate = 30.0;
  z = fuse_forward(fp, x, x, Mode::Eval, nullptr);
  CHECK(std::abs(z[0] - 2.0) < 1e-9);
  CHECK(std::abs(z[1] - 0.0) < 1e-9);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("default hyperparameters") {
  const auto e = TrainConfig::defaults(ModelKind::Embedding);
  CHECK(e.hidden == 256);
  CHECK(e.dropout == 0.4);
  CHECK(e.lr == 2e-5);
  CHECK(e.weight_decay == 2e-3);
  CHECK(e.batch_size == 8);
  CHECK(e.epochs == 50);
  CHECK(e.seeds == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  const auto l = TrainConfig::defaults(ModelKind::Linguistic);
  CHECK(l.hidden == 64);
  CHECK(l.lr == 8e-3);
  CHECK(l.weight_decay == 1e-3);
  CHECK(l.dropout == 0.0);
  const auto f = TrainConfig::defaults(ModelKind::Fusion);
  CHECK(f.hidden == 256);
  CHECK(f.ling_hidden == 128);
  CHECK(f.lr == 2e-5);
  CHECK(f.weight_decay == 2e-3);
  TrainConfig bad = f;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = f;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("separable toy data reaches validation F1 1.0 on every seed") {
  const auto data = separable_data();
  for (auto kind : {ModelKind::Embedding, ModelKind::Linguistic, ModelKind::Fusion}) {
    auto cfg = TrainConfig::defaults(kind);
    cfg.hidden = 16;
    cfg.ling_hidden = 8;
    cfg.lr = 1e-2;
    cfg.dropout = 0.0;
    const auto r = train(data, cfg);
    REQUIRE(r.checkpoints.size() == 5);
    for (const auto& c : r.checkpoints) {
      INFO(to_string(kind) << " seed " << c.seed);
      CHECK(c.val_f1 == 1.0);
      CHECK(c.best_epoch >= 1);
      CHECK(c.best_epoch <= 50);
    }
    CHECK(r.report.aggregate.count("test_f1") == 1);
    CHECK(r.report.per_seed.size() == 5);
  }
}

TEST_CASE("training is deterministic and checkpoints reload exactly") {
  const auto data = separable_data();
  auto cfg = TrainConfig::defaults(ModelKind::Fusion);
  cfg.hidden = 8;
  cfg.ling_hidden = 4;
  cfg.epochs = 5;
  const auto a = train_seed(data, cfg, 3);
  const auto b = train_seed(data, cfg, 3);
  CHECK(checkpoint_to_json(a).dump() == checkpoint_to_json(b).dump());
  const auto c = train_seed(data, cfg, 4);
  CHECK(checkpoint_to_json(a).dump() != checkpoint_to_json(c).dump());

  testsupport::TempDir dir;
  save_checkpoint(a, dir / "a.json");
  const auto back = load_checkpoint(dir / "a.json");
  CHECK(back.best_epoch == a.best_epoch);
  CHECK(back.val_f1 == a.val_f1);
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    Sample s{"x", Label::Case, random_vec(rng, 2), random_vec(rng, 2)};
    REQUIRE(predict_proba(back, s) == predict_proba(a, s));
  }
  CHECK_THROWS_AS(predict_proba(a, Sample{"x", Label::Case, {1.0}, {1.0, 2.0}}), Error);
}

TEST_CASE("training preconditions") {
  auto data = separable_data();
  auto cfg = TrainConfig::defaults(ModelKind::Linguistic);
  cfg.epochs = 1;
  auto empty_val = data;
  empty_val.validation.clear();
  try {
    train(empty_val, cfg);
    FAIL("expected EmptySplit");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptySplit);
  }
  auto ragged = data;
  ragged.train[3].ling.push_back(1.0);
  CHECK_THROWS_AS(train(ragged, cfg), Error);
}

TEST_CASE("non-finite loss aborts the seed with diagnostics") {
  auto data = separable_data();
  data.train[0].emb[0] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = TrainConfig::defaults(ModelKind::Embedding);
  cfg.hidden = 4;
  cfg.epochs = 2;
  cfg.seeds = {0, 1};
  try {
    train(data, cfg);
    FAIL("expected NumericalFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericalFailure);
  }
  try {
    train_seed(data, cfg, 0);
    FAIL("expected NumericalFailure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

}
