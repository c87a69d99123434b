#ifndef RESTOLAB_RESTORATION_HPP
#define RESTOLAB_RESTORATION_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "restolab/backbone.hpp"
#include "restolab/dr_fusion.hpp"
#include "restolab/psf.hpp"

namespace restolab {

enum class Guidance { None, ShallowOnly, MediumOnly, DeepOnly, PsfFull };
enum class FusionPoints { PerLevel, PerBlock };
enum class BlockKind { Transformer, Conv };

std::string to_string(Guidance g);
Guidance guidance_from_string(const std::string& s);

struct NetConfig {
    int levels{4};
    std::vector<int> blocks_per_level{1, 1, 1, 2}; // full scale would be [4,6,6,8]
    int base_channels{16};
    Guidance guidance{Guidance::None};
    FusionPoints fusion_points{FusionPoints::PerLevel};
    BlockKind block_kind{BlockKind::Transformer};
    int guidance_channels{32}; // channel count of the backbone taps

    void validate() const;
    int level_channels(int level) const { return base_channels << level; }
};

// 4-level encoder-decoder restoration network with a global residual skip.
// Guidance features (when enabled) are injected by channel cross-attention at
// the entry of each encoder level and the bottleneck.
class RestorationModel {
public:
    RestorationModel(const NetConfig& config, uint64_t seed);

    // Unclipped output for training; taps required iff guidance != none.
    Var forward(const Var& degraded, const FeatureTaps* taps) const;
    // Convenience inference path, clipped to [0,1].
    ImageTensor restore(const ImageTensor& degraded, const FeatureTaps* taps) const;

    const NetConfig& config() const { return config_; }
    const std::vector<Var>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    int64_t count_parameters() const;
    int param_size(const std::string& name) const;

    PsfModule* psf() { return psf_.get(); }
    const PsfModule* psf() const { return psf_.get(); }

private:
    Var p(const std::string& name) const;
    Var block_forward(const std::string& prefix, Var x) const;
    Var guidance_feature(const FeatureTaps& taps) const;
    void register_params(const std::string& prefix, const std::vector<Var>& ps,
                         const std::vector<std::string>& ns);

    NetConfig config_;
    std::vector<Var> params_;
    std::vector<std::string> names_;
    std::unique_ptr<PsfModule> psf_;          // PsfFull only
    std::vector<std::unique_ptr<DrFusion>> dr_; // one per level when guided
};

// Analytic multiply-add estimate for one forward pass at the given input size,
// including the O(C^2) channel-attention terms.
int64_t forward_flop_estimate(const NetConfig& config, int h = 128, int w = 128);

} // namespace restolab

#endif
