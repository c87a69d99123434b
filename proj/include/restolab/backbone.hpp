#ifndef RESTOLAB_BACKBONE_HPP
#define RESTOLAB_BACKBONE_HPP

#include <array>
#include <map>
#include <string>
#include <vector>

#include "restolab/autograd.hpp"
#include "restolab/image.hpp"

namespace restolab {

enum class BackboneKind { ToyVit, PretrainedVit };

struct BackboneConfig {
    BackboneKind kind{BackboneKind::ToyVit};
    int patch_size{8};
    std::array<int, 3> tap_indices{-1, -1, -1}; // -1: derive from depth
    int toy_depth{4};
    int toy_width{32};
    uint64_t toy_seed{0};
    std::string weights_path; // pretrained only; never downloaded
};

// The shallow/medium/deep frozen feature maps, each [C_f, h_f, w_f].
struct FeatureTaps {
    Tensor shallow, medium, deep;
    int patch_size{0};

    const Tensor& by_level(int i) const {
        return i == 0 ? shallow : (i == 1 ? medium : deep);
    }
};

struct StabilityReport {
    std::vector<double> sigmas;
    std::vector<double> raw_psnr, f_image_psnr, f_dino_psnr;
    std::vector<double> raw_dev, f_image_dev, f_dino_dev;
    double raw_var{0}, f_image_var{0}, f_dino_var{0};

    std::string to_csv() const;
    std::string to_json() const;
};

// Frozen ViT feature extractor. Weights are fixed at construction (seeded toy
// weights or a local pretrained file); no gradient ever reaches them.
class Backbone {
public:
    explicit Backbone(const BackboneConfig& config);

    FeatureTaps extract_taps(const ImageTensor& img) const;

    // Graph-building variant used by the contrastive loss: returns the token
    // feature matrices [N,D] for the requested block indices, with gradients
    // flowing to `img` only.
    std::vector<Var> tap_vars(const Var& img, const std::vector<int>& block_indices) const;

    // Patch-embedding features (f_IMAGE in the stability probe), [D,h,w].
    Tensor patch_embedding_features(const ImageTensor& img) const;

    uint64_t weight_checksum() const;
    int depth() const { return depth_; }
    int width() const { return width_; }
    int patch_size() const { return config_.patch_size; }
    const std::array<int, 3>& tap_indices() const { return taps_; }

    void save_weights(const std::string& path) const;

    // number of feature-extraction invocations (wiring probes in tests)
    uint64_t call_count() const { return call_count_; }

private:
    Var forward_tokens(const Var& img, int up_to_block,
                       std::vector<Var>* collect, const std::vector<int>& want) const;
    Var param(const std::string& name) const;

    BackboneConfig config_;
    int depth_{0}, width_{0};
    std::array<int, 3> taps_{};
    std::map<std::string, Var> params_; // frozen: requires_grad == false
    mutable uint64_t call_count_{0};
};

// Projects a [C,H,W] feature map onto its top-k principal components,
// min-max normalized per component for display.
ImageTensor pca_project(const Tensor& fmap, int k = 3);

StabilityReport stability_probe(const std::vector<ImageTensor>& clean_images,
                                const std::vector<double>& sigmas,
                                const BackboneConfig& config, uint64_t seed);

} // namespace restolab

#endif
