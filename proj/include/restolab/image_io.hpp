#ifndef RESTOLAB_IMAGE_IO_HPP
#define RESTOLAB_IMAGE_IO_HPP

#include <string>
#include <vector>

#include "restolab/image.hpp"

namespace restolab {

ImageTensor load_png(const std::string& path);
void save_png(const std::string& path, const ImageTensor& img);

// Loads every .png in a directory, sorted by filename.
std::vector<ImageTensor> load_png_dir(const std::string& dir);
std::vector<std::string> list_png_stems(const std::string& dir);

} // namespace restolab

#endif
