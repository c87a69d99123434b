#ifndef RESTOLAB_PSF_HPP
#define RESTOLAB_PSF_HPP

#include <string>
#include <vector>

#include "restolab/backbone.hpp"

namespace restolab {

struct GatingScores {
    double s_shallow{0}, s_medium{0}, s_deep{0};
};

// Gated mixture of three experts over the shallow/medium/deep taps. Each
// expert is two 3x3 channel-preserving convs around a nonlinearity; the gating
// network pools the concatenated taps and emits a softmax-normalized triple.
class PsfModule {
public:
    // identity_init: center-delta kernels and pass-through activation, so each
    // expert reproduces its tap exactly (test hook).
    PsfModule(int channels, uint64_t seed, bool identity_init = false);

    Var gate_logits(const std::vector<Var>& taps) const;
    Var gate_scores(const std::vector<Var>& taps) const; // softmax(logits), [3]
    GatingScores gate(const FeatureTaps& taps) const;

    std::vector<Var> experts_forward(const std::vector<Var>& taps) const;
    Var fuse(const std::vector<Var>& taps) const;
    Tensor fuse(const FeatureTaps& taps) const;

    std::vector<Var> tap_vars(const FeatureTaps& taps) const;

    const std::vector<Var>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    int channels() const { return channels_; }

private:
    Var p(const std::string& name) const;

    int channels_;
    bool identity_activation_;
    std::vector<Var> params_;
    std::vector<std::string> names_;
};

} // namespace restolab

#endif
