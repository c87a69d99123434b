#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "restolab/metrics.hpp"
#include "restolab/rng.hpp"
#include "restolab/trainer.hpp"

using namespace restolab;

namespace {

ImageTensor random_image(int c, int h, int w, uint64_t seed) {
    Rng rng(seed);
    Tensor img({c, h, w});
    for (int i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    return img;
}

TrainingConfig micro_config(Guidance g = Guidance::None) {
    TrainingConfig c;
    c.steps = 3;
    c.batch_size = 1;
    c.patch_size = 8;
    c.lambda = 0.0;
    c.seed = 5;
    c.net.levels = 2;
    c.net.blocks_per_level = {1, 1};
    c.net.base_channels = 4;
    c.net.guidance = g;
    c.net.guidance_channels = 8;
    c.backbone.toy_width = 8;
    c.backbone.toy_seed = 9;
    DegradationSpec noise;
    noise.kind = DegradationKind::Noise;
    noise.noise_sigma = 25.0;
    c.task_mix = {noise};
    return c;
}

std::vector<ImageTensor> train_pool() {
    return {random_image(3, 24, 24, 1), random_image(3, 24, 24, 2)};
}

std::vector<Tensor> snapshot(const RestorationModel& m) {
    std::vector<Tensor> out;
    for (const auto& p : m.params()) out.push_back(p->value);
    return out;
}

bool bit_identical(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!a[i].same_shape(b[i])) return false;
        for (int j = 0; j < a[i].size(); ++j)
            if (a[i][j] != b[i][j]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("the learning rate follows a cosine from the initial to the final value") {
    TrainingConfig c = micro_config();
    c.lr_initial = 2e-4;
    c.lr_final = 1e-4;
    c.steps = 100;
    CHECK(lr_at_step(c, 0) == doctest::Approx(2e-4));
    CHECK(lr_at_step(c, 99) == doctest::Approx(1e-4));
    CHECK(lr_at_step(c, 49) > 1e-4);
    CHECK(lr_at_step(c, 49) < 2e-4);
    for (int s = 1; s < 100; ++s) CHECK(lr_at_step(c, s) <= lr_at_step(c, s - 1) + 1e-18);

    c.steps = 1;
    CHECK(lr_at_step(c, 0) == doctest::Approx(2e-4));
    c = micro_config();
    c.lr_final = 1.0;
    c.lr_initial = 0.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("the first optimizer step moves by about the learning rate times the gradient sign") {
    Var p = make_leaf(Tensor::from({2}, {1.0, -3.0}), true);
    Adam opt({p}, 0.9, 0.999, 1e-8);
    p->ensure_grad();
    p->grad[0] = 0.5;
    p->grad[1] = -2.0;
    opt.step(0.01);
    // bias correction makes the first update lr * g/(|g| + eps)
    CHECK(p->value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p->value[1] == doctest::Approx(-3.0 + 0.01).epsilon(1e-6));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("the optimizer drives a quadratic toward its minimum") {
    Var p = make_leaf(Tensor::from({1}, {2.0}), true);
    Adam opt({p}, 0.9, 0.999, 1e-8);
    for (int i = 0; i < 400; ++i) {
        p->ensure_grad();
        p->grad[0] = 2.0 * p->value[0];
        opt.step(0.05);
        p->grad.fill(0.0);
    }
    CHECK(std::abs(p->value[0]) < 0.05);
}

TEST_CASE("training with a zero learning rate changes nothing") {
    TrainingConfig cfg = micro_config();
    cfg.lr_initial = cfg.lr_final = 0.0;
    Backbone backbone(cfg.backbone);
    RestorationModel model(cfg.net, cfg.seed);
    const auto before = snapshot(model);
    PatchDataset ds(train_pool(), cfg.task_mix, cfg.patch_size, cfg.seed);
    const RunLog log = train(cfg, ds, model, backbone);
    CHECK(bit_identical(before, snapshot(model)));
    CHECK(log.steps.size() == size_t(cfg.steps));
}

TEST_CASE("two runs from the same seed are bit-identical") {
    auto run = [](uint64_t seed) {
        TrainingConfig cfg = micro_config(Guidance::PsfFull);
        cfg.lambda = 0.1;
        cfg.seed = seed;
        Backbone backbone(cfg.backbone);
        RestorationModel model(cfg.net, cfg.seed);
        PatchDataset ds(train_pool(), cfg.task_mix, cfg.patch_size, cfg.seed);
        RunLog log = train(cfg, ds, model, backbone);
        return std::make_pair(snapshot(model), log.steps.back().total);
    };
    auto [pa, la] = run(7);
    auto [pb, lb] = run(7);
    auto [pc, lc] = run(8);
    CHECK(bit_identical(pa, pb));
    CHECK(la == lb);
    CHECK(!bit_identical(pa, pc));
}

TEST_CASE("training leaves the frozen backbone untouched") {
    TrainingConfig cfg = micro_config(Guidance::DeepOnly);
    cfg.lambda = 0.2;
    Backbone backbone(cfg.backbone);
    const uint64_t checksum = backbone.weight_checksum();
    RestorationModel model(cfg.net, cfg.seed);
    PatchDataset ds(train_pool(), cfg.task_mix, cfg.patch_size, cfg.seed);
    train(cfg, ds, model, backbone);
    CHECK(backbone.weight_checksum() == checksum);
    CHECK(backbone.call_count() > 0); // guidance really queried the backbone
}

TEST_CASE("an unguided run never queries the backbone") {
    TrainingConfig cfg = micro_config(Guidance::None);
    Backbone backbone(cfg.backbone);
    RestorationModel model(cfg.net, cfg.seed);
    PatchDataset ds(train_pool(), cfg.task_mix, cfg.patch_size, cfg.seed);
    train(cfg, ds, model, backbone); // lambda 0: no feature loss either
    CHECK(backbone.call_count() == 0);
}

TEST_CASE("checkpoints restore parameters bit-exactly and carry metadata") {
    const std::string path = "/tmp/restolab_test_ckpt.bin";
    TrainingConfig cfg = micro_config();
    Backbone backbone(cfg.backbone);
    RestorationModel model(cfg.net, cfg.seed);
    PatchDataset ds(train_pool(), cfg.task_mix, cfg.patch_size, cfg.seed);
    train(cfg, ds, model, backbone);
    save_checkpoint(path, model, cfg, cfg.steps);

    RestorationModel fresh(cfg.net, cfg.seed + 1);
    CHECK(!bit_identical(snapshot(model), snapshot(fresh)));
    load_checkpoint(path, fresh);
    CHECK(bit_identical(snapshot(model), snapshot(fresh)));

    const std::string meta = checkpoint_metadata(path);
    CHECK(meta.find("config_hash") != std::string::npos);
    CHECK(meta.find("\"guidance\": \"none\"") != std::string::npos);
    CHECK(meta.find("noise_sigma25") != std::string::npos);

    // a structurally different model must refuse the file
    NetConfig other = cfg.net;
    other.base_channels = 8;
    RestorationModel mismatched(other, 1);
    CHECK_THROWS_AS(load_checkpoint(path, mismatched), std::runtime_error);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
    CHECK_THROWS_AS(load_checkpoint(path, fresh), std::runtime_error);
}

TEST_CASE("evaluation groups metrics by task and an identity model scores the input") {
    TrainingConfig cfg = micro_config();
    Backbone backbone(cfg.backbone);
    RestorationModel model(cfg.net, cfg.seed); // untrained: exact identity

    std::vector<SamplePair> pairs;
    DegradationSpec noise = cfg.task_mix[0];
    DegradationSpec haze;
    haze.kind = DegradationKind::Haze;
    for (int i = 0; i < 2; ++i)
        for (const auto& spec : {noise, haze}) {
            SamplePair p;
            p.clean = random_image(3, 16, 16, 100 + uint64_t(i));
            p.spec = spec;
            p.spec.seed = 50 + uint64_t(i);
            p.degraded = apply_degradation(p.clean, p.spec);
            pairs.push_back(std::move(p));
        }
    const auto rows = evaluate(model, pairs, backbone);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(r.count == 2);

    // identity restoration means the metric equals degraded-vs-clean
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) expected += psnr(pairs[size_t(2 * i)].degraded,
                                                 pairs[size_t(2 * i)].clean);
    CHECK(rows[0].psnr == doctest::Approx(expected / 2.0));

    CHECK_THROWS_AS(evaluate(model, {}, backbone), std::invalid_argument);
}

TEST_CASE("a poisoned parameter aborts training with a diagnostic") {
    TrainingConfig cfg = micro_config();
    Backbone backbone(cfg.backbone);
    RestorationModel model(cfg.net, cfg.seed);
    model.params()[0]->value[0] = std::nan("");
    PatchDataset ds(train_pool(), cfg.task_mix, cfg.patch_size, cfg.seed);
    CHECK_THROWS_AS(train(cfg, ds, model, backbone), std::runtime_error);
}

TEST_CASE("run logs serialize with stable csv headers") {
    RunLog log;
    log.steps.push_back({0, 0.5, 0.1, 0.6, 2e-4});
    log.evals.push_back({0, "noise_sigma25", 30.0, 0.9});
    CHECK(log.steps_csv().rfind("step,l1,dpc,total,lr\n", 0) == 0);
    CHECK(log.evals_csv().find("noise_sigma25") != std::string::npos);
}
