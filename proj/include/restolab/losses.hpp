#ifndef RESTOLAB_LOSSES_HPP
#define RESTOLAB_LOSSES_HPP

#include <vector>

#include "restolab/backbone.hpp"

namespace restolab {

struct DpcConfig {
    std::vector<int> layer_indices; // empty: defaults to the backbone's shallow tap
    std::vector<double> weights;    // empty: uniform 1/n
    double epsilon{1e-7};           // denominator floor

    void validate() const;
    // resolved copies with defaults filled in against a backbone
    DpcConfig resolved(const Backbone& backbone) const;
};

struct LossBreakdown {
    double l1{0}, dpc{0}, total{0}, lambda{0};
};

Var l1_loss(const Var& v, const Var& target);

// Feature-space contrastive loss: sum_i w_i * D(f_i(v), f_i(v+)) /
// (D(f_i(v), f_i(v-)) + eps) with D = mean absolute distance on frozen
// backbone features. Gradients flow through v only.
Var dpc_loss(const Var& v, const Tensor& v_plus, const Tensor& v_minus,
             const DpcConfig& config, const Backbone& backbone);

// total = l1 + lambda * dpc with v+ = target and v- = degraded input.
// Returns the scalar graph node; breakdown reports the components.
Var total_loss(const Var& v, const Tensor& target, const Tensor& input_degraded,
               double lambda, const DpcConfig& config, const Backbone& backbone,
               LossBreakdown* breakdown = nullptr);

} // namespace restolab

#endif
