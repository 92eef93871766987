#include <doctest.h>

#include <cmath>
#include <vector>

#include "fqln/augmix.hpp"
#include "fqln/rng.hpp"

using namespace fqln;

namespace {

Image random_image(int c, int h, int w, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Image img(c, h, w);
  RngStream s(seed);
  for (auto& v : img.data) v = lo + (hi - lo) * static_cast<float>(s.next_uniform());
  return img;
}

float max_abs_diff(const Image& a, const Image& b) {
  float m = 0.0f;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_SUITE("augmix") {

TEST_CASE("op pools are disjoint as documented") {
  auto def = default_op_list();
  CHECK(def.size() == 9);
  for (const AugOp& op : def) {
    CHECK(op.kind != AugKind::GaussianNoiseOp);
    CHECK(op.kind != AugKind::GaussianBlurOp);
    CHECK(op.kind != AugKind::ContrastOp);
  }
  auto hf = hf_op_list();
  REQUIRE(hf.size() == 2);
  CHECK(hf[0].kind == AugKind::GaussianNoiseOp);
  CHECK(hf[0].magnitude == doctest::Approx(0.08));
  CHECK(hf[1].kind == AugKind::GaussianBlurOp);
  CHECK(hf[1].magnitude == doctest::Approx(1.0));
  auto lf = lf_op_list();
  REQUIRE(lf.size() == 1);
  CHECK(lf[0].kind == AugKind::ContrastOp);
  CHECK(lf[0].magnitude == doctest::Approx(0.25));
  CHECK(all_op_list().size() == 12);
}

TEST_CASE("op parsing accepts names with and without magnitudes") {
  AugOp a = parse_aug_op("rotate:15");
  CHECK(a.kind == AugKind::Rotate);
  CHECK(a.magnitude == doctest::Approx(15.0));
  AugOp b = parse_aug_op("rotate");  // falls back to the pool default
  CHECK(b.magnitude == doctest::Approx(30.0));
  AugOp c = parse_aug_op("gaussian_noise");
  CHECK(c.magnitude == doctest::Approx(0.08));
  CHECK_THROWS_AS(parse_aug_op("sharpen"), InvalidParameter);
  CHECK_THROWS_AS(parse_aug_op("rotate:abc"), InvalidParameter);
}

TEST_CASE("zero-magnitude geometric ops are exact identities") {
  Image img = random_image(1, 12, 12, 1);
  for (AugKind k : {AugKind::Rotate, AugKind::ShearX, AugKind::ShearY, AugKind::TranslateX,
                    AugKind::TranslateY, AugKind::Posterize}) {
    RngStream s(2);
    Image out = apply_aug(img, {k, 0.0}, s);
    CHECK(out.data == img.data);
  }
  RngStream s(2);
  Image out = apply_aug(img, {AugKind::ContrastOp, 1.0}, s);  // scale pinned to 1
  CHECK(out.data == img.data);
}

TEST_CASE("solarize flips values above the threshold") {
  Image img(1, 1, 3);
  img.data = {0.0f, 0.5f, 1.0f};
  RngStream s(3);
  Image out = apply_aug(img, {AugKind::Solarize, 0.0}, s);  // threshold exactly 1
  CHECK(out.data[0] == 0.0f);
  CHECK(out.data[1] == 0.5f);
  CHECK(out.data[2] == 0.0f);  // 1 - 1
}

TEST_CASE("autocontrast stretches each channel to the full range") {
  Image img(1, 2, 2);
  img.data = {0.2f, 0.3f, 0.4f, 0.6f};
  RngStream s(4);
  Image out = apply_aug(img, {AugKind::Autocontrast, 0.0}, s);
  CHECK(out.data[0] == doctest::Approx(0.0f));
  CHECK(out.data[3] == doctest::Approx(1.0f));
  CHECK(out.data[1] == doctest::Approx(0.25f));
  // full-range input is already a fixed point
  Image full(1, 1, 3);
  full.data = {0.0f, 0.25f, 1.0f};
  Image out2 = apply_aug(full, {AugKind::Autocontrast, 0.0}, s);
  CHECK(max_abs_diff(out2, full) < 1e-6f);
}

TEST_CASE("rotation leaves the exact centre pixel in place") {
  Image img = random_image(1, 9, 9, 5);
  for (int trial = 0; trial < 5; ++trial) {
    RngStream s(100 + static_cast<std::uint64_t>(trial));
    Image out = apply_aug(img, {AugKind::Rotate, 90.0}, s);
    CHECK(out.at(0, 4, 4) == doctest::Approx(img.at(0, 4, 4)).epsilon(1e-5));
  }
}

TEST_CASE("strength sampling consumes exactly one draw for scalar ops") {
  Image img = random_image(1, 8, 8, 6);
  for (AugKind k : {AugKind::Posterize, AugKind::Rotate, AugKind::Solarize, AugKind::ShearX,
                    AugKind::TranslateY, AugKind::ContrastOp}) {
    RngStream a(7), b(7);
    apply_aug(img, {k, 0.4}, a);
    b.next_uniform();
    CHECK(a.next_u64() == b.next_u64());
  }
  // parameterless ops leave the stream untouched
  for (AugKind k : {AugKind::Autocontrast, AugKind::Equalize}) {
    RngStream a(7), b(7);
    apply_aug(img, {k, 0.0}, a);
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("all ops keep values inside [0, 1]") {
  Image img = random_image(3, 11, 7, 8);
  RngStream s(9);
  for (const AugOp& op : all_op_list()) {
    Image out = apply_aug(img, op, s);
    REQUIRE(out.h == img.h);
    REQUIRE(out.w == img.w);
    for (float v : out.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("forced mix weight one returns the clean image") {
  Image img = random_image(1, 16, 16, 10);
  AugMixConfig cfg;
  cfg.force_mix_weight = 1.0;
  RngStream s(11);
  Image out = augmix_compose(img, cfg, s);
  CHECK(out.data == img.data);
}

TEST_CASE("identity chains reproduce the input for any weights") {
  Image img = random_image(1, 16, 16, 12);
  AugMixConfig cfg;
  cfg.op_list = {{AugKind::Rotate, 0.0}};  // every chain is the identity
  cfg.force_chain_weights = std::vector<double>{0.25, 0.25, 0.5};
  cfg.force_mix_weight = 0.3;
  cfg.force_depth = 2;
  RngStream s(13);
  Image out = augmix_compose(img, cfg, s);
  CHECK(max_abs_diff(out, img) < 1e-6f);
}

TEST_CASE("composition validates its configuration") {
  Image img = random_image(1, 16, 16, 14);
  RngStream s(15);
  AugMixConfig cfg;
  cfg.op_list.clear();
  CHECK_THROWS_AS(augmix_compose(img, cfg, s), InvalidParameter);
  cfg = AugMixConfig{};
  cfg.chains = 0;
  CHECK_THROWS_AS(augmix_compose(img, cfg, s), InvalidParameter);
  cfg = AugMixConfig{};
  cfg.max_depth = 0;
  CHECK_THROWS_AS(augmix_compose(img, cfg, s), InvalidParameter);
  cfg = AugMixConfig{};
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(augmix_compose(img, cfg, s), InvalidParameter);
  cfg = AugMixConfig{};
  cfg.force_chain_weights = std::vector<double>{0.5, 0.5};  // wrong arity for 3 chains
  CHECK_THROWS_AS(augmix_compose(img, cfg, s), InvalidParameter);
  cfg = AugMixConfig{};
  cfg.force_mix_weight = 1.5;
  CHECK_THROWS_AS(augmix_compose(img, cfg, s), InvalidParameter);
}

TEST_CASE("composition is deterministic in the stream and stays in range") {
  Image img = random_image(1, 32, 32, 16);
  AugMixConfig cfg;
  RngStream a(17), b(17), c(18);
  Image o1 = augmix_compose(img, cfg, a);
  Image o2 = augmix_compose(img, cfg, b);
  Image o3 = augmix_compose(img, cfg, c);
  CHECK(o1.data == o2.data);
  CHECK(o1.data != o3.data);
  for (float v : o1.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  CHECK(max_abs_diff(o1, img) > 1e-4f);  // something actually happened
}

}  // TEST_SUITE
