#include "restolab/restoration.hpp"

#include <cmath>
#include <stdexcept>

#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

namespace restolab {

std::string to_string(Guidance g) {
    switch (g) {
        case Guidance::None: return "none";
        case Guidance::ShallowOnly: return "shallow_only";
        case Guidance::MediumOnly: return "medium_only";
        case Guidance::DeepOnly: return "deep_only";
        case Guidance::PsfFull: return "psf_full";
    }
    return "unknown";
}

Guidance guidance_from_string(const std::string& s) {
    if (s == "none") return Guidance::None;
    if (s == "shallow_only") return Guidance::ShallowOnly;
    if (s == "medium_only") return Guidance::MediumOnly;
    if (s == "deep_only") return Guidance::DeepOnly;
    if (s == "psf_full") return Guidance::PsfFull;
    throw std::invalid_argument("unknown guidance: " + s);
}

void NetConfig::validate() const {
    if (levels < 1) throw std::invalid_argument("NetConfig: levels must be >= 1");
    if (static_cast<int>(blocks_per_level.size()) != levels)
        throw std::invalid_argument("NetConfig: blocks_per_level length != levels");
    for (int b : blocks_per_level)
        if (b < 1) throw std::invalid_argument("NetConfig: blocks_per_level entries >= 1");
    if (base_channels < 1) throw std::invalid_argument("NetConfig: base_channels >= 1");
    if (guidance_channels < 1)
        throw std::invalid_argument("NetConfig: guidance_channels >= 1");
}

RestorationModel::RestorationModel(const NetConfig& config, uint64_t seed)
    : config_(config) {
    config_.validate();
    Rng rng(seed, "restoration");
    auto add = [&](const std::string& name, std::vector<int> shape, double stddev) {
        names_.push_back(name);
        params_.push_back(
            make_leaf(stddev > 0.0 ? rng.normal_tensor(shape, 0.0, stddev) : Tensor(shape),
                      true));
    };
    auto conv_std = [](int cin, int k) { return 1.0 / std::sqrt(double(cin) * k * k); };

    const int c0 = config_.base_channels;
    add("in_proj.w", {c0, 3, 3, 3}, conv_std(3, 3));
    add("in_proj.b", {c0}, 0.0);

    auto add_block = [&](const std::string& pre, int c) {
        if (config_.block_kind == BlockKind::Transformer) {
            names_.push_back(pre + "ln1.g");
            params_.push_back(make_leaf(Tensor({c}, 1.0), true));
            add(pre + "ln1.b", {c}, 0.0);
            add(pre + "attn.wk", {c, c, 1, 1}, conv_std(c, 1));
            add(pre + "attn.wk.b", {c}, 0.0);
            add(pre + "attn.wq", {c, c, 1, 1}, conv_std(c, 1));
            add(pre + "attn.wq.b", {c}, 0.0);
            add(pre + "attn.wo", {c, c, 1, 1}, conv_std(c, 1));
            add(pre + "attn.wo.b", {c}, 0.0);
            names_.push_back(pre + "ln2.g");
            params_.push_back(make_leaf(Tensor({c}, 1.0), true));
            add(pre + "ln2.b", {c}, 0.0);
            add(pre + "ffn.win", {2 * c, c, 1, 1}, conv_std(c, 1));
            add(pre + "ffn.win.b", {2 * c}, 0.0);
            add(pre + "ffn.wout", {c, c, 1, 1}, conv_std(c, 1));
            add(pre + "ffn.wout.b", {c}, 0.0);
        } else {
            add(pre + "conv1.w", {c, c, 3, 3}, conv_std(c, 3));
            add(pre + "conv1.b", {c}, 0.0);
            add(pre + "conv2.w", {c, c, 3, 3}, conv_std(c, 3));
            add(pre + "conv2.b", {c}, 0.0);
        }
    };

    for (int l = 0; l < config_.levels; ++l) {
        const int c = config_.level_channels(l);
        for (int b = 0; b < config_.blocks_per_level[static_cast<size_t>(l)]; ++b)
            add_block("enc" + std::to_string(l) + ".b" + std::to_string(b) + ".", c);
        if (l + 1 < config_.levels) {
            add("down" + std::to_string(l) + ".w", {2 * c, c, 3, 3}, conv_std(c, 3));
            add("down" + std::to_string(l) + ".b", {2 * c}, 0.0);
        }
    }
    for (int l = config_.levels - 2; l >= 0; --l) {
        const int c = config_.level_channels(l);
        add("up" + std::to_string(l) + ".w", {4 * c, 2 * c, 1, 1}, conv_std(2 * c, 1));
        add("up" + std::to_string(l) + ".b", {4 * c}, 0.0);
        for (int b = 0; b < config_.blocks_per_level[static_cast<size_t>(l)]; ++b)
            add_block("dec" + std::to_string(l) + ".b" + std::to_string(b) + ".", c);
    }
    // zero-init output head: the network is the identity at initialization
    add("out_proj.w", {3, c0, 3, 3}, 0.0);
    add("out_proj.b", {3}, 0.0);

    if (config_.guidance != Guidance::None) {
        if (config_.guidance == Guidance::PsfFull) {
            psf_ = std::make_unique<PsfModule>(config_.guidance_channels,
                                               derive_seed(seed, "psf"));
            register_params("psf.", psf_->params(), psf_->param_names());
        }
        for (int l = 0; l < config_.levels; ++l) {
            dr_.push_back(std::make_unique<DrFusion>(config_.guidance_channels,
                                                     config_.level_channels(l),
                                                     derive_seed(seed, "dr" + std::to_string(l))));
            register_params("dr" + std::to_string(l) + ".", dr_.back()->params(),
                            dr_.back()->param_names());
        }
    }
}

void RestorationModel::register_params(const std::string& prefix,
                                       const std::vector<Var>& ps,
                                       const std::vector<std::string>& ns) {
    for (size_t i = 0; i < ps.size(); ++i) {
        names_.push_back(prefix + ns[i]);
        params_.push_back(ps[i]);
    }
}

Var RestorationModel::p(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return params_[i];
    throw std::logic_error("restoration: missing param " + name);
}

int RestorationModel::param_size(const std::string& name) const {
    return p(name)->value.size();
}

Var RestorationModel::block_forward(const std::string& pre, Var x) const {
    namespace o = ops;
    const int c = x->value.dim(0);
    if (config_.block_kind == BlockKind::Transformer) {
        const int h = x->value.dim(1), w = x->value.dim(2);
        Var x1 = o::layernorm_chw(x, p(pre + "ln1.g"), p(pre + "ln1.b"));
        Var k = o::reshape(o::conv2d(x1, p(pre + "attn.wk"), p(pre + "attn.wk.b")), {c, h * w});
        Var q = o::reshape(o::conv2d(x1, p(pre + "attn.wq"), p(pre + "attn.wq.b")), {c, h * w});
        Var a = o::softmax_rows(o::scale(o::matmul(k, o::transpose(q)), 1.0 / std::sqrt(double(c))));
        Var mixed = o::reshape(o::matmul(a, o::reshape(x1, {c, h * w})), {c, h, w});
        x = o::add(x, o::conv2d(mixed, p(pre + "attn.wo"), p(pre + "attn.wo.b")));
        Var x2 = o::layernorm_chw(x, p(pre + "ln2.g"), p(pre + "ln2.b"));
        Var both = o::conv2d(x2, p(pre + "ffn.win"), p(pre + "ffn.win.b"));
        Var val = o::slice0(both, 0, c);
        Var gatev = o::slice0(both, c, 2 * c);
        Var h1 = o::mul(val, o::gelu(gatev));
        return o::add(x, o::conv2d(h1, p(pre + "ffn.wout"), p(pre + "ffn.wout.b")));
    }
    Var h1 = o::gelu(o::conv2d(x, p(pre + "conv1.w"), p(pre + "conv1.b")));
    return o::add(x, o::conv2d(h1, p(pre + "conv2.w"), p(pre + "conv2.b")));
}

Var RestorationModel::guidance_feature(const FeatureTaps& taps) const {
    switch (config_.guidance) {
        case Guidance::ShallowOnly: return make_const(taps.shallow);
        case Guidance::MediumOnly: return make_const(taps.medium);
        case Guidance::DeepOnly: return make_const(taps.deep);
        case Guidance::PsfFull: return psf_->fuse(psf_->tap_vars(taps));
        case Guidance::None: break;
    }
    throw std::logic_error("guidance_feature: no guidance configured");
}

Var RestorationModel::forward(const Var& degraded, const FeatureTaps* taps) const {
    namespace o = ops;
    const bool guided = config_.guidance != Guidance::None;
    if (guided && !taps)
        throw std::invalid_argument("restoration: guidance enabled but no taps supplied");

    const int div = 1 << (config_.levels - 1);
    if (degraded->value.dim(1) % div != 0 || degraded->value.dim(2) % div != 0)
        throw std::invalid_argument("restoration: input dims must be divisible by " +
                                    std::to_string(div));

    Var fused;
    if (guided) fused = guidance_feature(*taps);

    Var x = o::conv2d(degraded, p("in_proj.w"), p("in_proj.b"));
    std::vector<Var> skips;
    for (int l = 0; l < config_.levels; ++l) {
        auto inject = [&](Var cur) {
            Var f_da = dr_[static_cast<size_t>(l)]->adapt(fused, cur->value.dim(1),
                                                          cur->value.dim(2));
            return dr_[static_cast<size_t>(l)]->fuse_attention(f_da, cur);
        };
        if (guided && config_.fusion_points == FusionPoints::PerLevel) x = inject(x);
        for (int b = 0; b < config_.blocks_per_level[static_cast<size_t>(l)]; ++b) {
            if (guided && config_.fusion_points == FusionPoints::PerBlock) x = inject(x);
            x = block_forward("enc" + std::to_string(l) + ".b" + std::to_string(b) + ".", x);
        }
        if (l + 1 < config_.levels) {
            skips.push_back(x);
            x = o::conv2d(x, p("down" + std::to_string(l) + ".w"),
                          p("down" + std::to_string(l) + ".b"), 2);
        }
    }
    for (int l = config_.levels - 2; l >= 0; --l) {
        x = o::pixel_shuffle(o::conv2d(x, p("up" + std::to_string(l) + ".w"),
                                       p("up" + std::to_string(l) + ".b")),
                             2);
        x = o::add(x, skips[static_cast<size_t>(l)]);
        for (int b = 0; b < config_.blocks_per_level[static_cast<size_t>(l)]; ++b)
            x = block_forward("dec" + std::to_string(l) + ".b" + std::to_string(b) + ".", x);
    }
    Var correction = o::conv2d(x, p("out_proj.w"), p("out_proj.b"));
    return o::add(degraded, correction);
}

ImageTensor RestorationModel::restore(const ImageTensor& degraded,
                                      const FeatureTaps* taps) const {
    return clip01(forward(make_const(degraded), taps)->value);
}

int64_t RestorationModel::count_parameters() const {
    int64_t n = 0;
    for (const auto& v : params_) n += v->value.size();
    return n;
}

int64_t forward_flop_estimate(const NetConfig& config, int h, int w) {
    config.validate();
    auto conv_macs = [](int64_t hw, int cin, int cout, int k) {
        return hw * cin * cout * int64_t(k) * k;
    };
    int64_t total = conv_macs(int64_t(h) * w, 3, config.base_channels, 3);
    auto block_macs = [&](int64_t hw, int c) -> int64_t {
        if (config.block_kind == BlockKind::Conv)
            return 2 * conv_macs(hw, c, c, 3);
        int64_t m = 3 * conv_macs(hw, c, c, 1);      // wk, wq, wo
        m += 2 * int64_t(c) * c * hw;                // K Q^T and A X (O(C^2) terms)
        m += conv_macs(hw, c, 2 * c, 1) + conv_macs(hw, c, c, 1); // gated ffn
        return m;
    };
    auto fusion_macs = [&](int64_t hw, int c) -> int64_t {
        int64_t m = conv_macs(hw, config.guidance_channels, c, 1); // adapt projection
        m += 2 * conv_macs(hw, c, c, 1);                           // w_k, w_q
        m += 2 * int64_t(c) * c * hw;                              // C x C attention
        return m;
    };
    int hh = h, ww = w;
    std::vector<std::pair<int64_t, int>> level_dims;
    for (int l = 0; l < config.levels; ++l) {
        const int c = config.level_channels(l);
        const int64_t hw = int64_t(hh) * ww;
        level_dims.emplace_back(hw, c);
        const int64_t n_inject =
            config.guidance == Guidance::None
                ? 0
                : (config.fusion_points == FusionPoints::PerLevel
                       ? 1
                       : config.blocks_per_level[static_cast<size_t>(l)]);
        total += n_inject * fusion_macs(hw, c);
        total += config.blocks_per_level[static_cast<size_t>(l)] * block_macs(hw, c);
        if (l + 1 < config.levels) {
            total += conv_macs(hw / 4, c, 2 * c, 3);
            hh = (hh + 1) / 2;
            ww = (ww + 1) / 2;
        }
    }
    for (int l = config.levels - 2; l >= 0; --l) {
        const auto [hw, c] = level_dims[static_cast<size_t>(l)];
        total += conv_macs(hw / 4, 2 * c, 4 * c, 1); // upsample projection
        total += config.blocks_per_level[static_cast<size_t>(l)] * block_macs(hw, c);
    }
    total += conv_macs(int64_t(h) * w, config.base_channels, 3, 3);
    return total;
}

} // namespace restolab
