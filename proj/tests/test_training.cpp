#include <doctest.h>

#include <cmath>
#include <vector>

#include "fqln/checkpoint.hpp"
#include "fqln/dataset.hpp"
#include "fqln/error.hpp"
#include "fqln/model.hpp"
#include "fqln/rng.hpp"
#include "fqln/train.hpp"
#include "ref_kernels.hpp"

using namespace fqln;

namespace {

Tensor logits_from(std::vector<float> rows, int n, int k) {
  Tensor t(n, k, 1, 1);
  t.vec() = std::move(rows);
  return t;
}

// KL(p || m) with both sides clamped the way the production code clamps.
double kl(const std::vector<double>& p, const std::vector<double>& m) {
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], static_cast<double>(jsd_prob_floor()));
    const double mi = std::max(m[i], static_cast<double>(jsd_prob_floor()));
    acc += pi * std::log(pi / mi);
  }
  return acc;
}

Dataset tiny_train(std::uint64_t seed, int n = 96) { return synth_shapes(seed, n, 32, 4); }

ModelConfig small_arch() { return tiny_cnn_config(1, 32, 32, 4); }

TrainConfig fast_cfg() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.augmix = false;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("sgd step applies classical momentum") {
  Model m = build_model(small_arch());
  RngStream s(1);
  init_model(m, s);
  // plant a known gradient on one parameter, zero elsewhere
  for (auto& L : m.layers) {
    L.dw.zero();
    std::fill(L.db.begin(), L.db.end(), 0.0f);
    std::fill(L.dgamma.begin(), L.dgamma.end(), 0.0f);
    std::fill(L.dbeta.begin(), L.dbeta.end(), 0.0f);
  }
  m.layers[0].dw.data()[5] = 2.0f;
  const float w0 = m.layers[0].w.data()[5];

  Velocity vel;
  sgd_step(m, 0.1, 0.9, vel);
  // v1 = -lr*g = -0.2; w = w0 - 0.2
  CHECK(m.layers[0].w.data()[5] == doctest::Approx(w0 - 0.2f).epsilon(1e-6));
  sgd_step(m, 0.1, 0.9, vel);
  // v2 = 0.9*v1 - lr*g = -0.38; w = w0 - 0.58
  CHECK(m.layers[0].w.data()[5] == doctest::Approx(w0 - 0.58f).epsilon(1e-6));

  // a non-finite gradient aborts and leaves parameters alone
  const float before = m.layers[0].w.data()[5];
  m.layers[0].dw.data()[6] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(sgd_step(m, 0.1, 0.9, vel), TrainingDiverged);
  CHECK(m.layers[0].w.data()[5] == before);
}

TEST_CASE("lr schedule steps down at half and three quarters") {
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.lr = 0.05;
  CHECK(scheduled_lr(cfg, 1) == doctest::Approx(0.05));
  CHECK(scheduled_lr(cfg, 4) == doctest::Approx(0.05));
  CHECK(scheduled_lr(cfg, 5) == doctest::Approx(0.005));
  CHECK(scheduled_lr(cfg, 6) == doctest::Approx(0.005));
  CHECK(scheduled_lr(cfg, 7) == doctest::Approx(0.0005));
  CHECK(scheduled_lr(cfg, 8) == doctest::Approx(0.0005));
}

TEST_CASE("jsd of identical posteriors is zero with zero gradient") {
  Tensor l = logits_from({1.0f, 2.0f, -1.0f, 0.5f, 0.0f, 1.5f}, 2, 3);
  auto r = jsd_consistency(l, l, l);
  CHECK(r.loss == 0.0);
  for (std::int64_t i = 0; i < r.dlogits_clean.numel(); ++i) {
    CHECK(r.dlogits_clean.data()[i] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.dlogits_aug1.data()[i] == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("jsd matches the hand-evaluated divergence") {
  // posteriors (1,0), (0,1), (.5,.5): drive them with extreme logits
  Tensor a = logits_from({40.0f, -40.0f}, 1, 2);
  Tensor b = logits_from({-40.0f, 40.0f}, 1, 2);
  Tensor c = logits_from({0.0f, 0.0f}, 1, 2);
  auto r = jsd_consistency(a, b, c);

  const std::vector<double> pa = {1.0, 0.0}, pb = {0.0, 1.0}, pc = {0.5, 0.5};
  const std::vector<double> m = {0.5, 0.5};
  const double want = (kl(pa, m) + kl(pb, m) + kl(pc, m)) / 3.0;
  CHECK(r.loss == doctest::Approx(want).epsilon(1e-6));

  // upper bound for three distributions
  CHECK(r.loss <= std::log(3.0) + 1e-9);
}

TEST_CASE("jsd is symmetric under view permutation") {
  RngStream s(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a(3, 5, 1, 1), b(3, 5, 1, 1), c(3, 5, 1, 1);
    for (auto* t : {&a, &b, &c})
      for (std::int64_t i = 0; i < t->numel(); ++i)
        t->data()[i] = static_cast<float>(2.0 * s.next_gaussian());
    const double l1 = jsd_consistency(a, b, c).loss;
    const double l2 = jsd_consistency(c, a, b).loss;
    const double l3 = jsd_consistency(b, c, a).loss;
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-7));
    CHECK(l1 == doctest::Approx(l3).epsilon(1e-7));
    CHECK(l1 >= 0.0);
    CHECK(l1 <= std::log(3.0) + 1e-9);
  }
}

TEST_CASE("jsd gradients agree with finite differences through the softmax") {
  RngStream s(22);
  Tensor a(2, 4, 1, 1), b(2, 4, 1, 1), c(2, 4, 1, 1);
  for (auto* t : {&a, &b, &c})
    for (std::int64_t i = 0; i < t->numel(); ++i)
      t->data()[i] = static_cast<float>(s.next_gaussian());
  auto r = jsd_consistency(a, b, c);

  // double-precision forward of the same computation
  auto softmax_row = [](const std::vector<double>& row) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    std::vector<double> p(row.size());
    double z = 0.0;
    for (size_t i = 0; i < row.size(); ++i) z += (p[i] = std::exp(row[i] - mx));
    for (auto& v : p) v /= z;
    return p;
  };
  auto loss_of = [&](const std::vector<double>& flat_a) {
    double total = 0.0;
    for (int n = 0; n < 2; ++n) {
      std::vector<double> ra(flat_a.begin() + n * 4, flat_a.begin() + (n + 1) * 4);
      std::vector<double> rb(4), rc(4);
      for (int k = 0; k < 4; ++k) {
        rb[k] = b.at(n, k, 0, 0);
        rc[k] = c.at(n, k, 0, 0);
      }
      auto pa = softmax_row(ra), pb = softmax_row(rb), pc = softmax_row(rc);
      std::vector<double> m(4);
      for (int k = 0; k < 4; ++k) m[k] = (pa[k] + pb[k] + pc[k]) / 3.0;
      total += (kl(pa, m) + kl(pb, m) + kl(pc, m)) / 3.0;
    }
    return total / 2.0;
  };

  std::vector<double> fa(a.data(), a.data() + a.numel());
  auto fd = ref::fd_gradient(fa, loss_of, 1e-6);
  for (std::int64_t i = 0; i < a.numel(); ++i)
    CHECK(r.dlogits_clean.data()[i] == doctest::Approx(fd[i]).epsilon(1e-3).scale(1.0));
}

TEST_CASE("training is seed-deterministic down to the checkpoint bytes") {
  Dataset tr = tiny_train(31), va = tiny_train(32, 48);
  TrainConfig cfg = fast_cfg();
  cfg.epochs = 2;
  cfg.augmix = true;  // exercise the full three-view path
  auto r1 = train(tr, va, small_arch(), cfg);
  auto r2 = train(tr, va, small_arch(), cfg);
  REQUIRE_FALSE(r1.diverged);
  for (size_t li = 0; li < r1.final_model.layers.size(); ++li) {
    CHECK(r1.final_model.layers[li].w.vec() == r2.final_model.layers[li].w.vec());
    CHECK(r1.final_model.layers[li].running_mean == r2.final_model.layers[li].running_mean);
  }
  CHECK(r1.log.size() == 2);
  CHECK(r1.best_epoch == r2.best_epoch);

  // a different seed reaches different weights
  cfg.seed += 1;
  auto r3 = train(tr, va, small_arch(), cfg);
  CHECK(r1.final_model.layers[0].w.vec() != r3.final_model.layers[0].w.vec());
}

TEST_CASE("an absurd learning rate trips the divergence guard") {
  Dataset tr = tiny_train(41), va = tiny_train(42, 48);
  TrainConfig cfg = fast_cfg();
  cfg.lr = 1e10;
  cfg.epochs = 2;
  auto r = train(tr, va, small_arch(), cfg);
  CHECK(r.diverged);
  CHECK_FALSE(r.diverged_reason.empty());
  // the surviving model still evaluates to finite logits
  Tensor x(1, 1, 32, 32);
  for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = 0.5f;
  Tensor y = model_forward(r.final_model, x, false, nullptr);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y.data()[i]));
}

TEST_CASE("smoothness penalty wires into the loss only when enabled") {
  Dataset tr = tiny_train(51), va = tiny_train(52, 48);
  TrainConfig cfg = fast_cfg();
  auto off = train(tr, va, small_arch(), cfg);
  CHECK(off.log[0].tv == 0.0);
  cfg.tv_lambda = 1e-5;
  auto on = train(tr, va, small_arch(), cfg);
  CHECK(on.log[0].tv > 0.0);
  CHECK(on.log[0].loss == doctest::Approx(on.log[0].ce + on.log[0].tv).epsilon(1e-9));
}

TEST_CASE("finetune with zero epochs returns the base model unchanged") {
  Dataset tr = tiny_train(61), va = tiny_train(62, 48);
  TrainConfig cfg = fast_cfg();
  auto base = train(tr, va, small_arch(), cfg);

  FinetuneSpec spec;
  spec.epochs = 0;
  spec.bias = FinetuneBias::LowFrequency;
  auto ft = finetune(base.final_model, train_extras(cfg), tr, va, spec);
  for (size_t li = 0; li < base.final_model.layers.size(); ++li) {
    CHECK(ft.final_model.layers[li].w.vec() == base.final_model.layers[li].w.vec());
    CHECK(ft.final_model.layers[li].running_mean == base.final_model.layers[li].running_mean);
  }
}

TEST_CASE("finetune inherits the smoothness penalty from the base recipe") {
  Dataset tr = tiny_train(71), va = tiny_train(72, 48);
  TrainConfig cfg = fast_cfg();
  cfg.tv_lambda = 1e-5;
  auto base = train(tr, va, small_arch(), cfg);

  FinetuneSpec spec;
  spec.epochs = 1;
  spec.bias = FinetuneBias::HighFrequency;
  spec.seed = 5;
  auto ft = finetune(base.final_model, train_extras(cfg), tr, va, spec);
  REQUIRE(ft.log.size() == 1);
  CHECK(ft.log[0].tv > 0.0);  // penalty stayed on

  // a base trained without it keeps it off
  TrainConfig plain = fast_cfg();
  auto base2 = train(tr, va, small_arch(), plain);
  auto ft2 = finetune(base2.final_model, train_extras(plain), tr, va, spec);
  CHECK(ft2.log[0].tv == 0.0);
}

TEST_CASE("parse_bias and bias_name round-trip") {
  CHECK(parse_bias("hf") == FinetuneBias::HighFrequency);
  CHECK(parse_bias("lf") == FinetuneBias::LowFrequency);
  CHECK(parse_bias("all") == FinetuneBias::All);
  CHECK(parse_bias(bias_name(FinetuneBias::LowFrequency)) == FinetuneBias::LowFrequency);
  CHECK_THROWS_AS(parse_bias("mid"), InvalidParameter);
}

TEST_CASE("bn adaptation replaces statistics and nothing else") {
  Dataset tr = tiny_train(81), va = tiny_train(82, 48);
  TrainConfig cfg = fast_cfg();
  auto base = train(tr, va, small_arch(), cfg);

  Dataset other = synth_shapes(99, 64, 32, 4);
  Model adapted = adapt_bn(base.final_model, other.images, 32);

  bool stats_moved = false;
  for (size_t li = 0; li < adapted.layers.size(); ++li) {
    const Layer& a = adapted.layers[li];
    const Layer& b = base.final_model.layers[li];
    CHECK(a.w.vec() == b.w.vec());
    CHECK(a.b == b.b);
    CHECK(a.gamma == b.gamma);
    CHECK(a.beta == b.beta);
    if (a.running_mean != b.running_mean) stats_moved = true;
  }
  CHECK(stats_moved);

  // adapting again on the same samples is a fixed point
  Model twice = adapt_bn(adapted, other.images, 32);
  for (size_t li = 0; li < twice.layers.size(); ++li) {
    for (size_t i = 0; i < twice.layers[li].running_mean.size(); ++i) {
      CHECK(twice.layers[li].running_mean[i] ==
            doctest::Approx(adapted.layers[li].running_mean[i]).epsilon(1e-5));
      CHECK(twice.layers[li].running_var[i] ==
            doctest::Approx(adapted.layers[li].running_var[i]).epsilon(1e-5));
    }
  }

  CHECK_THROWS_AS(adapt_bn(base.final_model, {}, 32), InvalidParameter);
}

TEST_CASE("loss goes down across a short run") {
  Dataset tr = synth_shapes(91, 256, 32, 4), va = tiny_train(92, 48);
  TrainConfig cfg = fast_cfg();
  cfg.epochs = 4;
  auto r = train(tr, va, small_arch(), cfg);
  REQUIRE(r.log.size() == 4);
  CHECK(r.log.back().loss < r.log.front().loss);
  CHECK(r.best_val_error <= r.log.front().val_error);
}

}  // TEST_SUITE
