#include "restolab/image_io.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>

namespace restolab {

namespace fs = std::filesystem;

ImageTensor load_png(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error("load_png: cannot read " + path);
    Tensor img({3, bgr.rows, bgr.cols});
    for (int y = 0; y < bgr.rows; ++y)
        for (int x = 0; x < bgr.cols; ++x) {
            const auto px = bgr.at<cv::Vec3b>(y, x);
            img.at(0, y, x) = px[2] / 255.0; // R
            img.at(1, y, x) = px[1] / 255.0;
            img.at(2, y, x) = px[0] / 255.0;
        }
    return img;
}

void save_png(const std::string& path, const ImageTensor& img) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (c != 1 && c != 3) throw std::invalid_argument("save_png: 1 or 3 channels required");
    cv::Mat bgr(h, w, CV_8UC3);
    auto to_u8 = [](double v) {
        const double s = v * 255.0 + 0.5;
        return static_cast<uint8_t>(s < 0 ? 0 : (s > 255 ? 255 : s));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const uint8_t r = to_u8(img.at(0, y, x));
            const uint8_t g = to_u8(img.at(c == 3 ? 1 : 0, y, x));
            const uint8_t b = to_u8(img.at(c == 3 ? 2 : 0, y, x));
            bgr.at<cv::Vec3b>(y, x) = {b, g, r};
        }
    if (!cv::imwrite(path, bgr)) throw std::runtime_error("save_png: cannot write " + path);
}

std::vector<ImageTensor> load_png_dir(const std::string& dir) {
    std::vector<ImageTensor> out;
    for (const auto& stem : list_png_stems(dir))
        out.push_back(load_png((fs::path(dir) / (stem + ".png")).string()));
    return out;
}

std::vector<std::string> list_png_stems(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            stems.push_back(entry.path().stem().string());
    std::sort(stems.begin(), stems.end());
    return stems;
}

} // namespace restolab
