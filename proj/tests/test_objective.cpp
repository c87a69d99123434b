#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "restolab/degradation.hpp"
#include "restolab/losses.hpp"
#include "restolab/metrics.hpp"
#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

using namespace restolab;
namespace o = ops;

namespace {

ImageTensor random_image(int c, int h, int w, uint64_t seed) {
    Rng rng(seed);
    Tensor img({c, h, w});
    for (int i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    return img;
}

BackboneConfig small_backbone_config() {
    BackboneConfig c;
    c.toy_width = 8;
    c.toy_seed = 5;
    return c;
}

} // namespace

TEST_CASE("mean absolute error matches hand values") {
    Var v = make_leaf(Tensor::from({3}, {1.0, 2.0, 3.0}));
    Var t = make_const(Tensor::from({3}, {2.0, 2.0, 5.0}));
    CHECK(l1_loss(v, t)->value.item() == doctest::Approx(1.0)); // (1+0+2)/3
    CHECK(l1_loss(v, v)->value.item() == doctest::Approx(0.0));
    backward(l1_loss(v, t));
    CHECK(v->grad[0] == doctest::Approx(-1.0 / 3.0));
    CHECK(v->grad[1] == doctest::Approx(0.0)); // tie: subgradient 0
    CHECK(v->grad[2] == doctest::Approx(-1.0 / 3.0)); // v below target
}

TEST_CASE("psnr hand values, cap, and input checks") {
    const Tensor a = constant_image(3, 8, 8, 0.0);
    const Tensor b = constant_image(3, 8, 8, 0.5);
    // mse 0.25 against peak 1 gives 10*log10(4)
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0)));
    CHECK(psnr(a, a) == kPsnrCap);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, constant_image(3, 8, 9, 0.5)), std::invalid_argument);
    CHECK_THROWS_AS(psnr(a, b, 0.0), std::invalid_argument);
}

TEST_CASE("ssim is 1 for identical images and matches the constant-image formula") {
    const ImageTensor img = random_image(3, 16, 16, 1);
    CHECK(ssim(img, img) == doctest::Approx(1.0));

    // constant images: variances and covariance vanish, luminance term remains
    const double x = 0.2, y = 0.4, c1 = 0.01 * 0.01;
    const double expected = (2 * x * y + c1) / (x * x + y * y + c1);
    CHECK(ssim(constant_image(1, 16, 16, x), constant_image(1, 16, 16, y)) ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("ssim decreases as distortion grows and is symmetric") {
    const ImageTensor img = random_image(3, 24, 24, 2);
    const ImageTensor mild = add_gaussian_noise(img, 10.0, 3);
    const ImageTensor heavy = add_gaussian_noise(img, 60.0, 3);
    const double s_mild = ssim(img, mild), s_heavy = ssim(img, heavy);
    CHECK(s_mild < 1.0);
    CHECK(s_heavy < s_mild);
    CHECK(ssim(img, mild) == doctest::Approx(ssim(mild, img)));
}

TEST_CASE("contrastive config validation and defaults") {
    DpcConfig cfg;
    cfg.validate();
    Backbone bb(small_backbone_config());
    const DpcConfig r = cfg.resolved(bb);
    REQUIRE(r.layer_indices.size() == 1);
    CHECK(r.layer_indices[0] == bb.tap_indices()[0]);
    REQUIRE(r.weights.size() == 1);
    CHECK(r.weights[0] == doctest::Approx(1.0));

    DpcConfig bad;
    bad.layer_indices = {0, 1};
    bad.weights = {1.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.weights = {0.5, -0.5};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    DpcConfig bad2;
    bad2.epsilon = 0.0;
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("contrastive loss is zero when the output already matches the target") {
    Backbone bb(small_backbone_config());
    const ImageTensor target = random_image(3, 16, 16, 11);
    const ImageTensor degraded = add_gaussian_noise(target, 25.0, 12);
    Var v = make_leaf(target, true);
    Var loss = dpc_loss(v, target, degraded, DpcConfig{}, bb);
    CHECK(loss->value.item() == doctest::Approx(0.0));
}

TEST_CASE("contrastive loss approaches the weight sum when positive equals negative") {
    Backbone bb(small_backbone_config());
    const ImageTensor anchor = random_image(3, 16, 16, 13);
    const ImageTensor other = random_image(3, 16, 16, 14);
    DpcConfig cfg;
    cfg.layer_indices = {0, 2};
    cfg.weights = {0.25, 0.75};
    Var v = make_leaf(anchor, true);
    Var loss = dpc_loss(v, other, other, cfg, bb);
    CHECK(loss->value.item() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("contrastive loss matches the ratio formula computed from raw features") {
    Backbone bb(small_backbone_config());
    const ImageTensor out = random_image(3, 16, 16, 21);
    const ImageTensor target = random_image(3, 16, 16, 22);
    const ImageTensor degraded = add_gaussian_noise(target, 25.0, 23);
    DpcConfig cfg;
    cfg.layer_indices = {1, 3};
    cfg.weights = {0.4, 0.6};
    cfg.epsilon = 1e-7;

    double expected = 0.0;
    for (size_t i = 0; i < cfg.layer_indices.size(); ++i) {
        const std::vector<int> idx{cfg.layer_indices[i]};
        const Tensor fv = bb.tap_vars(make_const(out), idx)[0]->value;
        const Tensor fp = bb.tap_vars(make_const(target), idx)[0]->value;
        const Tensor fn = bb.tap_vars(make_const(degraded), idx)[0]->value;
        double dp = 0.0, dn = 0.0;
        for (int j = 0; j < fv.size(); ++j) {
            dp += std::abs(fv[j] - fp[j]);
            dn += std::abs(fv[j] - fn[j]);
        }
        dp /= fv.size();
        dn /= fv.size();
        expected += cfg.weights[i] * dp / (dn + cfg.epsilon);
    }
    Var loss = dpc_loss(make_leaf(out, true), target, degraded, cfg, bb);
    CHECK(loss->value.item() == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("contrastive gradients flow to the output image only") {
    Backbone bb(small_backbone_config());
    const uint64_t checksum = bb.weight_checksum();
    const ImageTensor target = random_image(3, 16, 16, 31);
    const ImageTensor degraded = add_gaussian_noise(target, 25.0, 32);
    Var v = make_leaf(random_image(3, 16, 16, 33), true);
    Var loss = dpc_loss(v, target, degraded, DpcConfig{}, bb);
    CHECK(loss->requires_grad);
    backward(loss);
    REQUIRE(!v->grad.empty());
    double gsum = 0.0;
    for (int i = 0; i < v->grad.size(); ++i) gsum += std::abs(v->grad[i]);
    CHECK(gsum > 0.0);
    CHECK(bb.weight_checksum() == checksum);

    // a detached output yields a constant loss graph
    Var frozen = make_const(v->value);
    CHECK(!dpc_loss(frozen, target, degraded, DpcConfig{}, bb)->requires_grad);
}

TEST_CASE("the training objective is exactly pixel loss plus weighted contrastive loss") {
    Backbone bb(small_backbone_config());
    const ImageTensor target = random_image(3, 16, 16, 41);
    const ImageTensor degraded = add_gaussian_noise(target, 25.0, 42);
    Var v = make_leaf(random_image(3, 16, 16, 43), true);

    const double lambda = 0.7;
    LossBreakdown bd;
    Var total = total_loss(v, target, degraded, lambda, DpcConfig{}, bb, &bd);
    const double l1 = l1_loss(v, make_const(target))->value.item();
    const double dpc = dpc_loss(v, target, degraded, DpcConfig{}, bb)->value.item();
    CHECK(bd.l1 == l1);
    CHECK(bd.dpc == dpc);
    CHECK(bd.lambda == lambda);
    CHECK(total->value.item() == l1 + lambda * dpc);
    CHECK(bd.total == total->value.item());

    LossBreakdown bd0;
    Var plain = total_loss(v, target, degraded, 0.0, DpcConfig{}, bb, &bd0);
    CHECK(plain->value.item() == l1);
    CHECK(bd0.dpc == dpc); // still reported, just unweighted
}

TEST_CASE("shape mismatches are rejected") {
    Backbone bb(small_backbone_config());
    Var v = make_leaf(random_image(3, 16, 16, 51), true);
    CHECK_THROWS_AS(
        dpc_loss(v, random_image(3, 16, 24, 52), random_image(3, 16, 16, 53), DpcConfig{}, bb),
        std::invalid_argument);
}
