#include "restolab/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace restolab {

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= a.size();
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

std::vector<double> ssim_window() {
    // 11-tap Gaussian, sigma 1.5 (the standard SSIM window)
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[static_cast<size_t>(i)] = std::exp(-0.5 * d * d / (1.5 * 1.5));
        sum += w[static_cast<size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.rank() != 3) throw std::invalid_argument("ssim: CHW input required");
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    const auto win = ssim_window();
    const int half = 5;
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03; // peak 1.0

    // valid-region windows only; small images fall back to a single global window
    const int y_lo = std::min(half, std::max(0, (h - 1) / 2));
    const int x_lo = std::min(half, std::max(0, (w - 1) / 2));
    double total = 0.0;
    int count = 0;
    for (int ci = 0; ci < c; ++ci)
        for (int y = y_lo; y < h - y_lo; ++y)
            for (int x = x_lo; x < w - x_lo; ++x) {
                double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0, wsum = 0;
                for (int dy = -half; dy <= half; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (int dx = -half; dx <= half; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= w) continue;
                        const double wgt = win[static_cast<size_t>(dy + half)] *
                                           win[static_cast<size_t>(dx + half)];
                        const double va = a.at(ci, yy, xx), vb = b.at(ci, yy, xx);
                        mu_a += wgt * va;
                        mu_b += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                        wsum += wgt;
                    }
                }
                mu_a /= wsum;
                mu_b /= wsum;
                const double var_a = aa / wsum - mu_a * mu_a;
                const double var_b = bb / wsum - mu_b * mu_b;
                const double cov = ab / wsum - mu_a * mu_b;
                const double num = (2 * mu_a * mu_b + C1) * (2 * cov + C2);
                const double den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
                total += num / den;
                ++count;
            }
    if (count == 0) throw std::invalid_argument("ssim: image too small");
    return total / count;
}

} // namespace restolab
