#ifndef RESTOLAB_DEGRADATION_HPP
#define RESTOLAB_DEGRADATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "restolab/image.hpp"

namespace restolab {

enum class DegradationKind { Noise, Blur, Rain, Haze };

std::string to_string(DegradationKind k);
DegradationKind degradation_kind_from_string(const std::string& s);

struct DegradationSpec {
    DegradationKind kind{DegradationKind::Noise};
    double noise_sigma{25.0};          // 8-bit scale, divided by 255 internally
    int blur_kernel_size{15};          // odd
    double blur_sigma_range[2]{2.0, 3.1};
    double rain_density{0.1};
    double rain_angle_deg{70.0};
    double haze_beta{1.0};
    double haze_airlight{0.9};
    uint64_t seed{0};

    void validate() const; // throws std::invalid_argument on violated invariants
};

struct SamplePair {
    ImageTensor clean;
    ImageTensor degraded;
    DegradationSpec spec;
};

ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma, uint64_t seed);
ImageTensor apply_gaussian_blur(const ImageTensor& img, int kernel_size, double sigma);
ImageTensor synthesize_rain(const ImageTensor& img, double density, double angle_deg,
                            uint64_t seed);
ImageTensor synthesize_haze(const ImageTensor& img, double beta, double airlight,
                            const ImageTensor* depth = nullptr);

// The additive streak layer used by synthesize_rain, exposed so it can be
// checked standalone.
ImageTensor rain_streak_layer(int h, int w, double density, double angle_deg,
                              uint64_t seed);

// Fixed fallback depth for haze: linear ramp from 1 (top row) to 0 (bottom row).
ImageTensor default_depth_ramp(int h, int w);

// Applies spec to img; all randomness comes from spec.seed.
ImageTensor apply_degradation(const ImageTensor& img, const DegradationSpec& spec);

// Round-robin patch sampler over (clean image, task) pairs. Single consumer;
// parallel loading must shard by seed.
class PatchDataset {
public:
    PatchDataset(std::vector<ImageTensor> clean_images,
                 std::vector<DegradationSpec> task_mix, int patch_size, uint64_t seed);

    SamplePair next();
    int usable_image_count() const { return static_cast<int>(images_.size()); }
    const std::vector<DegradationSpec>& task_mix() const { return task_mix_; }
    int patch_size() const { return patch_size_; }

private:
    std::vector<ImageTensor> images_;
    std::vector<DegradationSpec> task_mix_;
    int patch_size_;
    uint64_t seed_;
    uint64_t counter_{0};
};

} // namespace restolab

#endif
