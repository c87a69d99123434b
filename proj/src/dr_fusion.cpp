#include "restolab/dr_fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

namespace restolab {

DrFusion::DrFusion(int source_channels, int target_channels, uint64_t seed,
                   bool identity_adapt)
    : source_channels_(source_channels),
      target_channels_(target_channels),
      temperature_(1.0 / std::sqrt(double(target_channels))) {
    if (source_channels <= 0 || target_channels <= 0)
        throw std::invalid_argument("dr_fusion: non-positive channel count");
    Rng rng(seed, "dr_fusion");
    auto add = [&](const std::string& name, Tensor t) {
        names_.push_back(name);
        params_.push_back(make_leaf(std::move(t), true));
    };
    Tensor proj({target_channels, source_channels, 1, 1});
    if (identity_adapt) {
        if (source_channels != target_channels)
            throw std::invalid_argument("dr_fusion: identity adapt needs equal channels");
        for (int c = 0; c < target_channels; ++c) proj[c * source_channels + c] = 1.0;
    } else {
        proj = rng.normal_tensor({target_channels, source_channels, 1, 1}, 0.0,
                                 1.0 / std::sqrt(double(source_channels)));
    }
    add("adapt.w", std::move(proj));
    add("adapt.b", Tensor({target_channels}));
    const double std_c = 1.0 / std::sqrt(double(target_channels));
    add("w_k", rng.normal_tensor({target_channels, target_channels, 1, 1}, 0.0, std_c));
    add("w_k.b", Tensor({target_channels}));
    add("w_q", rng.normal_tensor({target_channels, target_channels, 1, 1}, 0.0, std_c));
    add("w_q.b", Tensor({target_channels}));
}

Var DrFusion::p(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return params_[i];
    throw std::logic_error("dr_fusion: missing param " + name);
}

Var DrFusion::adapt(const Var& fused, int target_h, int target_w) const {
    namespace o = ops;
    if (target_h <= 0 || target_w <= 0)
        throw std::invalid_argument("dr_fusion: non-positive target size");
    if (fused->value.dim(0) != source_channels_)
        throw std::invalid_argument("dr_fusion: source channel mismatch");
    Var projected = o::conv2d(fused, p("adapt.w"), p("adapt.b"));
    return o::bilinear_resize(projected, target_h, target_w);
}

Var DrFusion::attention(const Var& f_da, const Var& f_i) const {
    namespace o = ops;
    if (!f_da->value.same_shape(f_i->value))
        throw std::invalid_argument("dr_fusion: feature shape mismatch");
    const int c = f_i->value.dim(0);
    if (c == 0) throw std::invalid_argument("dr_fusion: zero channels");
    const int n = f_i->value.dim(1) * f_i->value.dim(2);
    Var k = o::reshape(o::conv2d(f_da, p("w_k"), p("w_k.b")), {c, n});
    Var q = o::reshape(o::conv2d(f_i, p("w_q"), p("w_q.b")), {c, n});
    Var logits = o::scale(o::matmul(k, o::transpose(q)), temperature_);
    return o::softmax_rows(logits);
}

Var DrFusion::fuse_attention(const Var& f_da, const Var& f_i) const {
    namespace o = ops;
    Var a = attention(f_da, f_i);
    const int c = f_i->value.dim(0);
    const int h = f_i->value.dim(1), w = f_i->value.dim(2);
    Var flat = o::reshape(f_i, {c, h * w});
    Var mixed = o::reshape(o::matmul(a, flat), {c, h, w});
    return o::add(mixed, f_i);
}

} // namespace restolab
