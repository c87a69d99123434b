#include "restolab/losses.hpp"

#include <iostream>
#include <stdexcept>

#include "restolab/ops.hpp"

namespace restolab {

void DpcConfig::validate() const {
    if (!weights.empty() && weights.size() != layer_indices.size())
        throw std::invalid_argument("DpcConfig: weights/layer_indices length mismatch");
    for (double w : weights)
        if (w < 0.0) throw std::invalid_argument("DpcConfig: negative weight");
    if (epsilon <= 0.0) throw std::invalid_argument("DpcConfig: epsilon must be > 0");
}

DpcConfig DpcConfig::resolved(const Backbone& backbone) const {
    validate();
    DpcConfig r = *this;
    if (r.layer_indices.empty()) r.layer_indices = {backbone.tap_indices()[0]};
    if (r.weights.empty())
        r.weights.assign(r.layer_indices.size(), 1.0 / double(r.layer_indices.size()));
    return r;
}

Var l1_loss(const Var& v, const Var& target) { return ops::mean_abs_diff(v, target); }

Var dpc_loss(const Var& v, const Tensor& v_plus, const Tensor& v_minus,
             const DpcConfig& config, const Backbone& backbone) {
    namespace o = ops;
    if (!v->value.same_shape(v_plus) || !v->value.same_shape(v_minus))
        throw std::invalid_argument("dpc_loss: image shape mismatch");
    const DpcConfig cfg = config.resolved(backbone);

    std::vector<Var> feats_v = backbone.tap_vars(v, cfg.layer_indices);
    // positive/negative features are detached: plain forward passes on constants
    std::vector<Var> feats_p = backbone.tap_vars(make_const(v_plus), cfg.layer_indices);
    std::vector<Var> feats_n = backbone.tap_vars(make_const(v_minus), cfg.layer_indices);

    Var loss;
    for (size_t i = 0; i < cfg.layer_indices.size(); ++i) {
        Var num = o::mean_abs_diff(feats_v[i], make_const(feats_p[i]->value));
        Var den = o::mean_abs_diff(feats_v[i], make_const(feats_n[i]->value));
        if (den->value.item() < cfg.epsilon)
            std::cerr << "[restolab] warning: dpc_loss denominator at epsilon floor "
                         "(layer " << cfg.layer_indices[i] << ")\n";
        Var ratio = o::div_vars(num, o::add_const(den, cfg.epsilon));
        Var term = o::scale(ratio, cfg.weights[i]);
        loss = loss ? o::add(loss, term) : term;
    }
    return loss;
}

Var total_loss(const Var& v, const Tensor& target, const Tensor& input_degraded,
               double lambda, const DpcConfig& config, const Backbone& backbone,
               LossBreakdown* breakdown) {
    namespace o = ops;
    Var l1 = l1_loss(v, make_const(target));
    Var dpc = dpc_loss(v, target, input_degraded, config, backbone);
    Var total = o::add(l1, o::scale(dpc, lambda));
    if (breakdown) {
        breakdown->l1 = l1->value.item();
        breakdown->dpc = dpc->value.item();
        breakdown->lambda = lambda;
        breakdown->total = breakdown->l1 + lambda * breakdown->dpc;
    }
    return total;
}

} // namespace restolab
