#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "restolab/dr_fusion.hpp"
#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

#include "gradcheck.hpp"

using namespace restolab;
namespace o = ops;
using restolab::testing::gradcheck;

namespace {

Var param_by_name(const DrFusion& m, const std::string& name) {
    const auto& names = m.param_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return m.params()[i];
    throw std::logic_error("test: missing param " + name);
}

// makes the key/query projections pass-through 1x1 convs
void pin_identity_kq(const DrFusion& m) {
    const int c = m.target_channels();
    for (const char* w : {"w_k", "w_q"}) {
        Tensor& t = param_by_name(m, w)->value;
        t.fill(0.0);
        for (int i = 0; i < c; ++i) t[i * c + i] = 1.0;
    }
    param_by_name(m, "w_k.b")->value.fill(0.0);
    param_by_name(m, "w_q.b")->value.fill(0.0);
}

Var random_feature(int c, int h, int w, uint64_t seed) {
    Rng rng(seed);
    return make_const(rng.normal_tensor({c, h, w}, 0.0, 1.0));
}

} // namespace

TEST_CASE("single-channel attention collapses to doubling the input") {
    DrFusion dr(1, 1, 3);
    Var f_da = random_feature(1, 3, 4, 1);
    Var f_i = random_feature(1, 3, 4, 2);
    Var a = dr.attention(f_da, f_i);
    CHECK(a->value.shape() == std::vector<int>{1, 1});
    CHECK(a->value[0] == doctest::Approx(1.0));
    Var out = dr.fuse_attention(f_da, f_i);
    for (int i = 0; i < f_i->value.size(); ++i)
        CHECK(out->value[i] == doctest::Approx(2.0 * f_i->value[i]).epsilon(1e-12));
}

TEST_CASE("attention is a row-stochastic channel-by-channel matrix") {
    const int c = 5;
    DrFusion dr(c, c, 7);
    Var a = dr.attention(random_feature(c, 4, 4, 3), random_feature(c, 4, 4, 4));
    REQUIRE(a->value.shape() == std::vector<int>{c, c});
    for (int r = 0; r < c; ++r) {
        double sum = 0.0;
        for (int cc = 0; cc < c; ++cc) {
            CHECK(a->value.at(r, cc) > 0.0);
            sum += a->value.at(r, cc);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("two-channel single-pixel case matches the hand computation") {
    DrFusion dr(2, 2, 7);
    pin_identity_kq(dr);
    Var f_da = make_const(Tensor::from({2, 1, 1}, {1.0, -0.5}));
    Var f_i = make_const(Tensor::from({2, 1, 1}, {0.3, 2.0}));
    const double inv_sqrt_c = 1.0 / std::sqrt(2.0);

    // keys come from the guidance feature, queries from the input feature
    double logits[2][2];
    const double kv[2] = {1.0, -0.5}, qv[2] = {0.3, 2.0};
    for (int r = 0; r < 2; ++r)
        for (int cc = 0; cc < 2; ++cc) logits[r][cc] = kv[r] * qv[cc] * inv_sqrt_c;
    double att[2][2];
    for (int r = 0; r < 2; ++r) {
        const double z = std::exp(logits[r][0]) + std::exp(logits[r][1]);
        for (int cc = 0; cc < 2; ++cc) att[r][cc] = std::exp(logits[r][cc]) / z;
    }
    Var a = dr.attention(f_da, f_i);
    for (int r = 0; r < 2; ++r)
        for (int cc = 0; cc < 2; ++cc)
            CHECK(a->value.at(r, cc) == doctest::Approx(att[r][cc]).epsilon(1e-12));

    Var out = dr.fuse_attention(f_da, f_i);
    for (int r = 0; r < 2; ++r) {
        const double mixed = att[r][0] * qv[0] + att[r][1] * qv[1];
        CHECK(out->value[r] == doctest::Approx(mixed + qv[r]).epsilon(1e-12));
    }
}

TEST_CASE("zeroed key projection makes attention uniform") {
    const int c = 4;
    DrFusion dr(c, c, 9);
    param_by_name(dr, "w_k")->value.fill(0.0);
    param_by_name(dr, "w_k.b")->value.fill(0.0);
    Var a = dr.attention(random_feature(c, 3, 3, 5), random_feature(c, 3, 3, 6));
    for (int i = 0; i < a->value.size(); ++i)
        CHECK(a->value[i] == doctest::Approx(1.0 / c));
}

TEST_CASE("identity adaptation passes features through and resizes them") {
    DrFusion dr(3, 3, 11, /*identity_adapt=*/true);
    Var f = random_feature(3, 4, 4, 7);
    Var same = dr.adapt(f, 4, 4);
    for (int i = 0; i < f->value.size(); ++i)
        CHECK(same->value[i] == doctest::Approx(f->value[i]).epsilon(1e-12));

    Var c = make_const(Tensor({3, 2, 2}, 0.6));
    Var up = dr.adapt(c, 5, 7);
    CHECK(up->value.shape() == std::vector<int>{3, 5, 7});
    for (int i = 0; i < up->value.size(); ++i) CHECK(up->value[i] == doctest::Approx(0.6));
}

TEST_CASE("channel adaptation projects to the target width") {
    DrFusion dr(6, 3, 13);
    Var f = random_feature(6, 4, 4, 8);
    Var out = dr.adapt(f, 2, 2);
    CHECK(out->value.shape() == std::vector<int>{3, 2, 2});
}

TEST_CASE("invalid configurations and inputs are rejected") {
    CHECK_THROWS_AS(DrFusion(0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(DrFusion(4, 3, 1, /*identity_adapt=*/true), std::invalid_argument);
    DrFusion dr(3, 3, 1);
    CHECK_THROWS_AS(dr.adapt(random_feature(2, 4, 4, 9), 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(dr.adapt(random_feature(3, 4, 4, 9), 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(
        dr.attention(random_feature(3, 4, 4, 9), random_feature(3, 5, 4, 9)),
        std::invalid_argument);
}

TEST_CASE("adaptation and attention gradients check out numerically") {
    DrFusion dr(3, 2, 17);
    Rng rng(10);
    Var fused = make_leaf(rng.normal_tensor({3, 3, 3}, 0.0, 0.5), true);
    Var f_i = make_leaf(rng.normal_tensor({2, 2, 2}, 0.0, 0.5), true);
    auto build = [&] {
        Var f_da = dr.adapt(fused, 2, 2);
        return o::mean(dr.fuse_attention(f_da, f_i));
    };
    std::vector<Var> leaves{fused, f_i};
    for (const auto& p : dr.params()) leaves.push_back(p);
    CHECK(gradcheck(build, leaves, 1e-5) < 1e-5);
}
