#pragma once

#include <string>
#include <vector>

#include "proseco/errors.hpp"

namespace proseco {

/// Interleaved RGB image, values in [0,1], row-major HWC.
struct ImageTensor {
    int height = 0, width = 0;
    std::vector<float> data;  // height * width * 3

    ImageTensor() = default;
    ImageTensor(int h, int w, float fill = 0.f)
        : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }

    void clamp01();
};

/// Binary "P6" portable pixmap, maxval 255. Quantizes to 8 bits on save.
ImageTensor load_image(const std::string& path);
void save_image(const ImageTensor& img, const std::string& path);

/// Bilinear resize to an exact target size.
ImageTensor resize_image(const ImageTensor& img, int out_h, int out_w);

}  // namespace proseco
