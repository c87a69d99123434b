#ifndef RESTOLAB_IMAGE_HPP
#define RESTOLAB_IMAGE_HPP

#include "restolab/tensor.hpp"

namespace restolab {

// Images are Tensors shaped [C,H,W] with values in [0,1]; C is 3 for RGB,
// 1 for depth/gray maps.
using ImageTensor = Tensor;

inline Tensor clip01(Tensor img) {
    for (int i = 0; i < img.size(); ++i)
        img[i] = img[i] < 0.0 ? 0.0 : (img[i] > 1.0 ? 1.0 : img[i]);
    return img;
}

inline Tensor flip_horizontal(const Tensor& img) {
    Tensor out(img.shape());
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(ci, y, x) = img.at(ci, y, w - 1 - x);
    return out;
}

inline Tensor constant_image(int c, int h, int w, double value) {
    Tensor img({c, h, w});
    img.fill(value);
    return img;
}

// Crops a [C,H,W] tensor to [C,size,size] starting at (y0,x0).
inline Tensor crop(const Tensor& img, int y0, int x0, int size) {
    const int c = img.dim(0);
    Tensor out({c, size, size});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.at(ci, y, x) = img.at(ci, y0 + y, x0 + x);
    return out;
}

} // namespace restolab

#endif
