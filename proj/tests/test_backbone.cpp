#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "restolab/backbone.hpp"
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

bool tensors_equal(const Tensor& a, const Tensor& b, double tol = 0.0) {
    if (!a.same_shape(b)) return false;
    for (int i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > tol) return false;
    return true;
}

BackboneConfig toy_config(uint64_t seed = 3) {
    BackboneConfig c;
    c.toy_seed = seed;
    return c; // patch 8, depth 4, width 32
}

// top eigenvector of a symmetric matrix by power iteration, used as an
// independent check against the library eigensolver
std::vector<double> power_iteration(const std::vector<std::vector<double>>& m) {
    const size_t n = m.size();
    std::vector<double> v(n, 1.0 / std::sqrt(double(n)));
    for (int it = 0; it < 3000; ++it) {
        std::vector<double> next(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) next[i] += m[i][j] * v[j];
        double norm = 0.0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        for (size_t i = 0; i < n; ++i) v[i] = next[i] / norm;
    }
    return v;
}

} // namespace

TEST_CASE("feature maps have the expected grid shape") {
    Backbone bb(toy_config());
    CHECK(bb.depth() == 4);
    CHECK(bb.width() == 32);
    CHECK(bb.tap_indices() == std::array<int, 3>{1, 2, 3});

    const FeatureTaps taps = bb.extract_taps(random_image(3, 64, 64, 1));
    const std::vector<int> want{32, 8, 8};
    CHECK(taps.shallow.shape() == want);
    CHECK(taps.medium.shape() == want);
    CHECK(taps.deep.shape() == want);
    CHECK(taps.patch_size == 8);
    CHECK(&taps.by_level(0) == &taps.shallow);
    CHECK(&taps.by_level(2) == &taps.deep);
}

TEST_CASE("inputs not divisible by the patch size are resized to the nearest grid") {
    Backbone bb(toy_config());
    const FeatureTaps taps = bb.extract_taps(random_image(3, 20, 28, 2));
    CHECK(taps.deep.shape() == std::vector<int>{32, 3, 4});
}

TEST_CASE("two instances with the same seed produce identical features and checksums") {
    Backbone a(toy_config(11)), b(toy_config(11)), c(toy_config(12));
    CHECK(a.weight_checksum() == b.weight_checksum());
    CHECK(a.weight_checksum() != c.weight_checksum());

    const ImageTensor img = random_image(3, 32, 32, 5);
    CHECK(tensors_equal(a.extract_taps(img).deep, b.extract_taps(img).deep));
    CHECK(!tensors_equal(a.extract_taps(img).deep, c.extract_taps(img).deep));
}

TEST_CASE("forward passes never mutate the weights") {
    Backbone bb(toy_config(21));
    const uint64_t before = bb.weight_checksum();
    const ImageTensor img = random_image(3, 32, 32, 6);
    bb.extract_taps(img);
    bb.patch_embedding_features(img);
    Var leaf = make_leaf(img, true);
    Var f = bb.tap_vars(leaf, {0, 3})[1];
    backward(o::mean(f));
    CHECK(bb.weight_checksum() == before);
}

TEST_CASE("gradients reach the input image but stop at frozen weights") {
    Backbone bb(toy_config(22));
    Var leaf = make_leaf(random_image(3, 16, 16, 7), true);
    auto feats = bb.tap_vars(leaf, {1});
    REQUIRE(feats.size() == 1);
    CHECK(feats[0]->requires_grad);
    backward(o::mean(feats[0]));
    REQUIRE(!leaf->grad.empty());
    double gsum = 0.0;
    for (int i = 0; i < leaf->grad.size(); ++i) gsum += std::abs(leaf->grad[i]);
    CHECK(gsum > 0.0);

    // a detached input makes the whole feature graph constant
    Var frozen = make_const(leaf->value);
    CHECK(!bb.tap_vars(frozen, {1})[0]->requires_grad);
}

TEST_CASE("feature extraction invocations are counted") {
    Backbone bb(toy_config());
    CHECK(bb.call_count() == 0);
    const ImageTensor img = random_image(3, 16, 16, 8);
    bb.extract_taps(img);
    CHECK(bb.call_count() == 1);
    bb.tap_vars(make_const(img), {0});
    CHECK(bb.call_count() == 2);
}

TEST_CASE("config validation rejects bad tap indices and widths") {
    BackboneConfig c = toy_config();
    c.tap_indices = {2, 1, 3};
    CHECK_THROWS_AS(Backbone{c}, std::invalid_argument);
    c = toy_config();
    c.tap_indices = {0, 1, 4}; // depth is 4
    CHECK_THROWS_AS(Backbone{c}, std::invalid_argument);
    c = toy_config();
    c.toy_width = 30; // positional encoding needs a multiple of 4
    CHECK_THROWS_AS(Backbone{c}, std::invalid_argument);
}

TEST_CASE("saved weights load back bit-identically") {
    const std::string path = "/tmp/restolab_test_weights.bin";
    Backbone a(toy_config(31));
    a.save_weights(path);

    BackboneConfig pc;
    pc.kind = BackboneKind::PretrainedVit;
    pc.weights_path = path;
    Backbone b(pc);
    CHECK(b.depth() == a.depth());
    CHECK(b.width() == a.width());
    CHECK(b.patch_size() == a.patch_size());
    CHECK(b.weight_checksum() == a.weight_checksum());
    const ImageTensor img = random_image(3, 32, 32, 9);
    CHECK(tensors_equal(a.extract_taps(img).deep, b.extract_taps(img).deep));
    std::remove(path.c_str());

    pc.weights_path = "/tmp/restolab_missing_weights.bin";
    CHECK_THROWS_AS(Backbone{pc}, std::runtime_error);
}

TEST_CASE("pca projection agrees with a hand-rolled power iteration") {
    const int c = 5, h = 6, w = 7, n = h * w;
    Rng rng(41);
    Tensor fmap = rng.normal_tensor({c, h, w}, 0.0, 1.0);
    const ImageTensor out = pca_project(fmap, 3);
    CHECK(out.shape() == std::vector<int>{3, h, w});
    for (int i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= 0.0);
        CHECK(out[i] <= 1.0);
    }

    // independent top component: mean-center tokens, covariance, power iteration
    std::vector<double> mean(c, 0.0);
    for (int ci = 0; ci < c; ++ci) {
        for (int i = 0; i < n; ++i) mean[size_t(ci)] += fmap[ci * n + i];
        mean[size_t(ci)] /= n;
    }
    std::vector<std::vector<double>> cov(c, std::vector<double>(c, 0.0));
    for (int a = 0; a < c; ++a)
        for (int b = 0; b < c; ++b) {
            for (int i = 0; i < n; ++i)
                cov[size_t(a)][size_t(b)] += (fmap[a * n + i] - mean[size_t(a)]) *
                                             (fmap[b * n + i] - mean[size_t(b)]);
            cov[size_t(a)][size_t(b)] /= n;
        }
    const std::vector<double> dir = power_iteration(cov);
    std::vector<double> proj(size_t(n), 0.0);
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci)
            proj[size_t(i)] += (fmap[ci * n + i] - mean[size_t(ci)]) * dir[size_t(ci)];
        lo = std::min(lo, proj[size_t(i)]);
        hi = std::max(hi, proj[size_t(i)]);
    }
    // the eigenvector sign is arbitrary, so accept x or 1-x
    double err_same = 0.0, err_flip = 0.0;
    for (int i = 0; i < n; ++i) {
        const double norm = (proj[size_t(i)] - lo) / (hi - lo);
        err_same = std::max(err_same, std::abs(out[i] - norm));
        err_flip = std::max(err_flip, std::abs(out[i] - (1.0 - norm)));
    }
    CHECK(std::min(err_same, err_flip) < 1e-6);
}

TEST_CASE("pca zero-fills components beyond the input rank") {
    // rank-1 feature map: every channel is a multiple of one pattern
    const int h = 4, w = 5, n = h * w;
    Rng rng(43);
    Tensor base = rng.normal_tensor({n}, 0.0, 1.0);
    Tensor fmap({3, h, w});
    for (int ci = 0; ci < 3; ++ci)
        for (int i = 0; i < n; ++i) fmap[ci * n + i] = (ci + 1.0) * base[i];
    const ImageTensor out = pca_project(fmap, 3);
    for (int i = 0; i < n; ++i) {
        CHECK(out[1 * n + i] == 0.0);
        CHECK(out[2 * n + i] == 0.0);
    }
    double spread = 0.0;
    for (int i = 0; i < n; ++i) spread = std::max(spread, out[i]);
    CHECK(spread == doctest::Approx(1.0)); // first component is min-max normalized
}

TEST_CASE("stability probe rejects degenerate level lists and reports all columns") {
    std::vector<ImageTensor> imgs{random_image(3, 32, 32, 51)};
    BackboneConfig cfg = toy_config();
    CHECK_THROWS_AS(stability_probe(imgs, {25.0}, cfg, 1), std::invalid_argument);
    CHECK_THROWS_AS(stability_probe(imgs, {25.0, 25.0}, cfg, 1), std::invalid_argument);

    const StabilityReport rep = stability_probe(imgs, {10.0, 30.0, 50.0}, cfg, 1);
    CHECK(rep.raw_psnr.size() == 3);
    CHECK(rep.f_image_psnr.size() == 3);
    CHECK(rep.f_dino_psnr.size() == 3);
    CHECK(rep.raw_var > 0.0);
    // raw psnr must fall as noise grows
    CHECK(rep.raw_psnr[0] > rep.raw_psnr[1]);
    CHECK(rep.raw_psnr[1] > rep.raw_psnr[2]);
    // per-level deviations sum to zero by construction
    double dsum = 0.0;
    for (double d : rep.raw_dev) dsum += d;
    CHECK(std::abs(dsum) < 1e-9);
    CHECK(rep.to_csv().rfind("level,raw_psnr,f_image_psnr,f_dino_psnr\n", 0) == 0);
    CHECK(rep.to_json().find("f_dino_variance") != std::string::npos);
}
