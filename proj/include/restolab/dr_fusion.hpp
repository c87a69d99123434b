#ifndef RESTOLAB_DR_FUSION_HPP
#define RESTOLAB_DR_FUSION_HPP

#include <string>
#include <vector>

#include "restolab/autograd.hpp"

namespace restolab {

// Adapts the fused guidance feature to a restoration level (1x1 channel
// projection + bilinear resize) and injects it through channel-wise
// cross-attention with a residual. Attention is a CxC map (O(C^2)), rows
// softmax-normalized; the guided feature provides the keys.
class DrFusion {
public:
    DrFusion(int source_channels, int target_channels, uint64_t seed,
             bool identity_adapt = false);

    Var adapt(const Var& fused, int target_h, int target_w) const;
    Var fuse_attention(const Var& f_da, const Var& f_i) const;
    // attention matrix [C,C] for inspection/tests
    Var attention(const Var& f_da, const Var& f_i) const;

    const std::vector<Var>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    int target_channels() const { return target_channels_; }
    double temperature() const { return temperature_; } // 1/sqrt(C)

private:
    Var p(const std::string& name) const;

    int source_channels_, target_channels_;
    double temperature_;
    std::vector<Var> params_;
    std::vector<std::string> names_;
};

} // namespace restolab

#endif
