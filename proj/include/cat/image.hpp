#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace cat {

enum class Domain { Source, Target };

inline const char* domain_name(Domain d) {
    return d == Domain::Source ? "source" : "target";
}

/// 8-bit RGB image, row-major, channels interleaved.
class ImageBuffer {
public:
    ImageBuffer() = default;

    ImageBuffer(int height, int width, std::uint8_t fill = 0)
        : height_(height),
          width_(width),
          data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3, fill) {
        if (height < 1 || width < 1)
            throw std::invalid_argument("ImageBuffer: dimensions must be >= 1");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    bool empty() const { return data_.empty(); }
    std::int64_t area() const {
        return static_cast<std::int64_t>(height_) * static_cast<std::int64_t>(width_);
    }

    std::uint8_t& at(int y, int x, int c) { return data_[index(y, x, c)]; }
    std::uint8_t at(int y, int x, int c) const { return data_[index(y, x, c)]; }

    std::uint8_t* data() { return data_.data(); }
    const std::uint8_t* data() const { return data_.data(); }
    std::size_t size_bytes() const { return data_.size(); }

    bool operator==(const ImageBuffer&) const = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + static_cast<std::size_t>(x)) * 3 +
               static_cast<std::size_t>(c);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Exact axis-aligned sub-rectangle copy.
inline ImageBuffer crop_region(const ImageBuffer& img, int x, int y, int w, int h) {
    if (w < 1 || h < 1) throw std::out_of_range("crop_region: empty rectangle");
    if (x < 0 || y < 0 || x + w > img.width() || y + h > img.height())
        throw std::out_of_range("crop_region: rectangle outside image");
    ImageBuffer out(h, w);
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < 3; ++c) out.at(yy, xx, c) = img.at(y + yy, x + xx, c);
    return out;
}

inline void paste_region(ImageBuffer& img, const ImageBuffer& patch, int x, int y) {
    if (x < 0 || y < 0 || x + patch.width() > img.width() || y + patch.height() > img.height())
        throw std::out_of_range("paste_region: rectangle outside image");
    for (int yy = 0; yy < patch.height(); ++yy)
        for (int xx = 0; xx < patch.width(); ++xx)
            for (int c = 0; c < 3; ++c) img.at(y + yy, x + xx, c) = patch.at(yy, xx, c);
}

/// Bilinear resize with center-aligned sampling. Aspect ratio is not
/// preserved; equal input and output sizes copy pixels exactly.
inline ImageBuffer resize_bilinear(const ImageBuffer& src, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw std::invalid_argument("resize_bilinear: output dimensions must be >= 1");
    ImageBuffer out(out_h, out_w);
    const double sx = static_cast<double>(src.width()) / out_w;
    const double sy = static_cast<double>(src.height()) / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y1 = y0 + 1;
        y0 = std::min(std::max(y0, 0), src.height() - 1);
        y1 = std::min(std::max(y1, 0), src.height() - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x1 = x0 + 1;
            x0 = std::min(std::max(x0, 0), src.width() - 1);
            x1 = std::min(std::max(x1, 0), src.width() - 1);
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
                const double bot = (1.0 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
                const double v = (1.0 - wy) * top + wy * bot;
                out.at(oy, ox, c) = static_cast<std::uint8_t>(
                    std::min(255.0, std::max(0.0, std::round(v))));
            }
        }
    }
    return out;
}

}  // namespace cat
