#include "restolab/psf.hpp"

#include <cmath>
#include <stdexcept>

#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

namespace restolab {

namespace {

Tensor delta_kernel(int channels) {
    // channel-preserving 3x3 identity: out[c] = in[c]
    Tensor w({channels, channels, 3, 3});
    for (int c = 0; c < channels; ++c) w[((c * channels + c) * 3 + 1) * 3 + 1] = 1.0;
    return w;
}

} // namespace

PsfModule::PsfModule(int channels, uint64_t seed, bool identity_init)
    : channels_(channels), identity_activation_(identity_init) {
    Rng rng(seed, "psf");
    const double conv_std = 1.0 / std::sqrt(9.0 * channels);
    auto add = [&](const std::string& name, Tensor t) {
        names_.push_back(name);
        params_.push_back(make_leaf(std::move(t), true));
    };
    for (const char* level : {"shallow", "medium", "deep"}) {
        const std::string pre = std::string("expert.") + level + ".";
        if (identity_init) {
            add(pre + "conv1.w", delta_kernel(channels));
            add(pre + "conv1.b", Tensor({channels}));
            add(pre + "conv2.w", delta_kernel(channels));
            add(pre + "conv2.b", Tensor({channels}));
        } else {
            add(pre + "conv1.w", rng.normal_tensor({channels, channels, 3, 3}, 0.0, conv_std));
            add(pre + "conv1.b", Tensor({channels}));
            add(pre + "conv2.w", rng.normal_tensor({channels, channels, 3, 3}, 0.0, conv_std));
            add(pre + "conv2.b", Tensor({channels}));
        }
    }
    const int cat = 3 * channels;
    add("gating.fc1.w", rng.normal_tensor({channels, cat}, 0.0, 1.0 / std::sqrt(double(cat))));
    add("gating.fc1.b", Tensor({channels}));
    add("gating.fc2.w",
        rng.normal_tensor({3, channels}, 0.0, 1.0 / std::sqrt(double(channels))));
    add("gating.fc2.b", Tensor({3}));
}

Var PsfModule::p(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return params_[i];
    throw std::logic_error("psf: missing param " + name);
}

Var PsfModule::gate_logits(const std::vector<Var>& taps) const {
    namespace o = ops;
    if (taps.size() != 3) throw std::invalid_argument("psf: expected 3 taps");
    for (const auto& t : taps) {
        if (!t->value.same_shape(taps[0]->value))
            throw std::invalid_argument("psf: tap shape mismatch");
        if (!t->value.all_finite()) throw std::invalid_argument("psf: non-finite tap");
    }
    Var concat = o::concat0(taps);
    Var pooled = o::global_avg_pool(concat);
    Var hidden = o::gelu(o::linear(pooled, p("gating.fc1.w"), p("gating.fc1.b")));
    return o::linear(hidden, p("gating.fc2.w"), p("gating.fc2.b"));
}

Var PsfModule::gate_scores(const std::vector<Var>& taps) const {
    return ops::softmax_vec(gate_logits(taps));
}

GatingScores PsfModule::gate(const FeatureTaps& taps) const {
    const Var s = gate_scores(tap_vars(taps));
    return {s->value[0], s->value[1], s->value[2]};
}

std::vector<Var> PsfModule::experts_forward(const std::vector<Var>& taps) const {
    namespace o = ops;
    if (taps.size() != 3) throw std::invalid_argument("psf: expected 3 taps");
    std::vector<Var> outs;
    const char* levels[] = {"shallow", "medium", "deep"};
    for (int i = 0; i < 3; ++i) {
        const std::string pre = std::string("expert.") + levels[i] + ".";
        Var h = o::conv2d(taps[static_cast<size_t>(i)], p(pre + "conv1.w"),
                          p(pre + "conv1.b"));
        if (!identity_activation_) h = o::gelu(h);
        outs.push_back(o::conv2d(h, p(pre + "conv2.w"), p(pre + "conv2.b")));
    }
    return outs;
}

Var PsfModule::fuse(const std::vector<Var>& taps) const {
    namespace o = ops;
    Var scores = gate_scores(taps);
    std::vector<Var> expert_outs = experts_forward(taps);
    Var fused = o::mul_scalar_var(expert_outs[0], o::slice0(scores, 0, 1));
    fused = o::add(fused, o::mul_scalar_var(expert_outs[1], o::slice0(scores, 1, 2)));
    fused = o::add(fused, o::mul_scalar_var(expert_outs[2], o::slice0(scores, 2, 3)));
    return fused;
}

Tensor PsfModule::fuse(const FeatureTaps& taps) const { return fuse(tap_vars(taps))->value; }

std::vector<Var> PsfModule::tap_vars(const FeatureTaps& taps) const {
    return {make_const(taps.shallow), make_const(taps.medium), make_const(taps.deep)};
}

} // namespace restolab
