#include "proseco/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace proseco {

void ImageTensor::clamp01() {
    for (float& v : data) v = std::clamp(v, 0.f, 1.f);
}

namespace {

// Skips PNM whitespace and '#' comment lines.
int read_pnm_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = in.get();
        }
        c = in.get();
    }
    if (c == EOF) throw FormatError("image: truncated header in '" + path + "'");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw FormatError("image: malformed header in '" + path + "'");
    return value;
}

}  // namespace

ImageTensor load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("image: cannot open '" + path + "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '6')
        throw FormatError("image: '" + path + "' is not a binary P6 pixmap");
    const int width = read_pnm_int(in, path);
    const int height = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (width <= 0 || height <= 0 || maxval != 255)
        throw FormatError("image: unsupported dimensions or maxval in '" + path + "'");
    std::vector<unsigned char> raw(static_cast<size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw FormatError("image: truncated pixel data in '" + path + "'");
    ImageTensor img(height, width);
    for (size_t i = 0; i < raw.size(); ++i)
        img.data[i] = static_cast<float>(raw[i]) / 255.f;
    return img;
}

void save_image(const ImageTensor& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("image: cannot write '" + path + "'");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.data.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        const float v = std::clamp(img.data[i], 0.f, 1.f);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("image: failed writing '" + path + "'");
}

ImageTensor resize_image(const ImageTensor& img, int out_h, int out_w) {
    if (img.height <= 0 || img.width <= 0)
        throw ContractError("resize_image: empty input");
    if (out_h == img.height && out_w == img.width) return img;
    ImageTensor out(out_h, out_w);
    const float sy = static_cast<float>(img.height) / static_cast<float>(out_h);
    const float sx = static_cast<float>(img.width) / static_cast<float>(out_w);
    for (int y = 0; y < out_h; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float wy = std::clamp(fy - static_cast<float>(y0), 0.f, 1.f);
        for (int x = 0; x < out_w; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float wx = std::clamp(fx - static_cast<float>(x0), 0.f, 1.f);
            for (int c = 0; c < 3; ++c) {
                const float top = img.at(y0, x0, c) * (1.f - wx) + img.at(y0, x1, c) * wx;
                const float bot = img.at(y1, x0, c) * (1.f - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1.f - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace proseco
