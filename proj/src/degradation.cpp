#include "restolab/degradation.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "restolab/rng.hpp"

namespace restolab {

namespace {

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
    std::vector<double> k(static_cast<size_t>(size));
    const int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - half;
        k[static_cast<size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace

std::string to_string(DegradationKind k) {
    switch (k) {
        case DegradationKind::Noise: return "noise";
        case DegradationKind::Blur: return "blur";
        case DegradationKind::Rain: return "rain";
        case DegradationKind::Haze: return "haze";
    }
    return "unknown";
}

DegradationKind degradation_kind_from_string(const std::string& s) {
    if (s == "noise") return DegradationKind::Noise;
    if (s == "blur") return DegradationKind::Blur;
    if (s == "rain") return DegradationKind::Rain;
    if (s == "haze") return DegradationKind::Haze;
    throw std::invalid_argument("unknown degradation kind: " + s);
}

void DegradationSpec::validate() const {
    if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
    if (blur_kernel_size < 1 || blur_kernel_size % 2 == 0)
        throw std::invalid_argument("blur_kernel_size must be odd and >= 1");
    if (blur_sigma_range[0] > blur_sigma_range[1])
        throw std::invalid_argument("blur_sigma_range out of order");
    if (rain_density < 0.0 || rain_density > 1.0)
        throw std::invalid_argument("rain_density must be in [0,1]");
    if (haze_beta < 0.0) throw std::invalid_argument("haze_beta must be >= 0");
    if (haze_airlight < 0.0 || haze_airlight > 1.0)
        throw std::invalid_argument("haze_airlight must be in [0,1]");
}

ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma, uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma < 0");
    if (sigma == 0.0) return img;
    Rng rng(seed);
    Tensor out(img.shape());
    const double s = sigma / 255.0;
    for (int i = 0; i < out.size(); ++i) out[i] = img[i] + rng.normal(0.0, s);
    return clip01(std::move(out));
}

ImageTensor apply_gaussian_blur(const ImageTensor& img, int kernel_size, double sigma) {
    if (kernel_size % 2 == 0 || kernel_size < 1)
        throw std::invalid_argument("apply_gaussian_blur: kernel size must be odd");
    if (sigma <= 0.0) throw std::invalid_argument("apply_gaussian_blur: sigma must be > 0");
    const auto k = gaussian_kernel_1d(kernel_size, sigma);
    const int half = kernel_size / 2;
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    // separable pass: rows then columns, reflect padding
    Tensor tmp(img.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = 0; i < kernel_size; ++i)
                    acc += k[static_cast<size_t>(i)] *
                           img.at(ci, y, reflect_index(x - half + i, w));
                tmp.at(ci, y, x) = acc;
            }
    Tensor out(img.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = 0; i < kernel_size; ++i)
                    acc += k[static_cast<size_t>(i)] *
                           tmp.at(ci, reflect_index(y - half + i, h), x);
                out.at(ci, y, x) = acc;
            }
    return clip01(std::move(out));
}

ImageTensor rain_streak_layer(int h, int w, double density, double angle_deg, uint64_t seed) {
    Rng rng(seed);
    Tensor seeds({1, h, w});
    for (int i = 0; i < seeds.size(); ++i) {
        const double u = rng.uniform();
        seeds[i] = u < density ? 0.5 + 0.5 * rng.uniform() : 0.0;
    }
    // motion blur along the streak direction
    const int len = 9;
    const double rad = angle_deg * M_PI / 180.0;
    const double dy = std::cos(rad), dx = std::sin(rad);
    Tensor streak({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -(len / 2); i <= len / 2; ++i) {
                const int yy = y + static_cast<int>(std::lround(i * dy));
                const int xx = x + static_cast<int>(std::lround(i * dx));
                if (yy >= 0 && yy < h && xx >= 0 && xx < w) acc += seeds.at(0, yy, xx);
            }
            streak.at(0, y, x) = std::min(1.0, acc / (len / 2.0));
        }
    return streak;
}

ImageTensor synthesize_rain(const ImageTensor& img, double density, double angle_deg,
                            uint64_t seed) {
    if (density < 0.0 || density > 1.0)
        throw std::invalid_argument("synthesize_rain: density must be in [0,1]");
    if (density == 0.0) return img;
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const Tensor streak = rain_streak_layer(h, w, density, angle_deg, seed);
    Tensor out(img.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double s = streak.at(0, y, x);
                out.at(ci, y, x) = 1.0 - (1.0 - img.at(ci, y, x)) * (1.0 - s);
            }
    return clip01(std::move(out));
}

ImageTensor default_depth_ramp(int h, int w) {
    Tensor depth({1, h, w});
    for (int y = 0; y < h; ++y) {
        const double d = h > 1 ? 1.0 - double(y) / (h - 1) : 1.0;
        for (int x = 0; x < w; ++x) depth.at(0, y, x) = d;
    }
    return depth;
}

ImageTensor synthesize_haze(const ImageTensor& img, double beta, double airlight,
                            const ImageTensor* depth) {
    if (beta < 0.0) throw std::invalid_argument("synthesize_haze: beta < 0");
    if (airlight < 0.0 || airlight > 1.0)
        throw std::invalid_argument("synthesize_haze: airlight must be in [0,1]");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor ramp;
    if (!depth) {
        ramp = default_depth_ramp(h, w);
        depth = &ramp;
    }
    if (depth->dim(1) != h || depth->dim(2) != w)
        throw std::invalid_argument("synthesize_haze: depth shape mismatch");
    Tensor out(img.shape());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = std::exp(-beta * depth->at(0, y, x));
            for (int ci = 0; ci < c; ++ci)
                out.at(ci, y, x) = img.at(ci, y, x) * t + airlight * (1.0 - t);
        }
    return clip01(std::move(out));
}

ImageTensor apply_degradation(const ImageTensor& img, const DegradationSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case DegradationKind::Noise:
            return add_gaussian_noise(img, spec.noise_sigma, spec.seed);
        case DegradationKind::Blur: {
            // blur sigma is resampled per image from the spec's range
            Rng rng(spec.seed, "blur_sigma");
            const double sigma =
                spec.blur_sigma_range[0] == spec.blur_sigma_range[1]
                    ? spec.blur_sigma_range[0]
                    : rng.uniform(spec.blur_sigma_range[0], spec.blur_sigma_range[1]);
            return apply_gaussian_blur(img, spec.blur_kernel_size, sigma);
        }
        case DegradationKind::Rain:
            return synthesize_rain(img, spec.rain_density, spec.rain_angle_deg, spec.seed);
        case DegradationKind::Haze:
            return synthesize_haze(img, spec.haze_beta, spec.haze_airlight);
    }
    throw std::logic_error("apply_degradation: unreachable");
}

PatchDataset::PatchDataset(std::vector<ImageTensor> clean_images,
                           std::vector<DegradationSpec> task_mix, int patch_size,
                           uint64_t seed)
    : task_mix_(std::move(task_mix)), patch_size_(patch_size), seed_(seed) {
    if (task_mix_.empty()) throw std::invalid_argument("PatchDataset: empty task mix");
    for (auto& img : clean_images) {
        if (img.dim(1) < patch_size_ || img.dim(2) < patch_size_) {
            std::cerr << "[restolab] warning: skipping image " << img.shape_str()
                      << " smaller than patch size " << patch_size_ << "\n";
            continue;
        }
        images_.push_back(std::move(img));
    }
    if (images_.empty())
        throw std::invalid_argument("PatchDataset: no usable images for patch size " +
                                    std::to_string(patch_size_));
}

SamplePair PatchDataset::next() {
    const uint64_t idx = counter_++;
    Rng rng(derive_seed(seed_, "patch"), std::to_string(idx));
    const auto& img = images_[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(images_.size()) - 1))];
    const int y0 = rng.uniform_int(0, img.dim(1) - patch_size_);
    const int x0 = rng.uniform_int(0, img.dim(2) - patch_size_);
    SamplePair pair;
    pair.clean = crop(img, y0, x0, patch_size_);
    pair.spec = task_mix_[static_cast<size_t>(idx % task_mix_.size())]; // round-robin
    pair.spec.seed = derive_seed(seed_, "degrade:" + std::to_string(idx));
    pair.degraded = apply_degradation(pair.clean, pair.spec);
    return pair;
}

} // namespace restolab
