#ifndef RESTOLAB_METRICS_HPP
#define RESTOLAB_METRICS_HPP

#include "restolab/tensor.hpp"

namespace restolab {

inline constexpr double kPsnrCap = 100.0; // reported for identical inputs

double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double ssim(const Tensor& a, const Tensor& b); // 11-tap Gaussian window, K1=0.01, K2=0.03

} // namespace restolab

#endif
