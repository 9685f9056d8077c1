#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cat/image.hpp"

namespace cat {

/// Axis-aligned box, top-left corner plus size, in pixels.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    bool operator==(const BBox&) const = default;
};

inline double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(a.x, b.x);
    const double iy = std::max(a.y, b.y);
    const double ix2 = std::min(a.x + a.w, b.x + b.w);
    const double iy2 = std::min(a.y + a.h, b.y + b.h);
    const double iw = ix2 - ix;
    const double ih = iy2 - iy;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline std::vector<double> onehot(int cls, int num_classes) {
    if (cls < 0 || cls >= num_classes) throw std::out_of_range("onehot: class index out of range");
    std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
    v[static_cast<std::size_t>(cls)] = 1.0;
    return v;
}

inline int argmax_class(const std::vector<double>& label) {
    if (label.empty()) throw std::invalid_argument("argmax_class: empty label");
    return static_cast<int>(std::max_element(label.begin(), label.end()) - label.begin());
}

inline bool is_probability_vector(const std::vector<double>& label, double tol = 1e-9) {
    double sum = 0.0;
    for (double v : label) {
        if (v < -tol || v > 1.0 + tol) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

/// A label is hard when it is numerically one-hot.
inline bool is_hard_label(const std::vector<double>& label) {
    if (label.empty()) return false;
    return *std::max_element(label.begin(), label.end()) >= 1.0 - 1e-9;
}

/// Integer pixel rectangle covering a box: floored origin, ceiled extent.
struct PixelRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

inline PixelRect pixel_rect(const BBox& box) {
    PixelRect r;
    r.x = static_cast<int>(std::floor(box.x));
    r.y = static_cast<int>(std::floor(box.y));
    r.w = static_cast<int>(std::ceil(box.w));
    r.h = static_cast<int>(std::ceil(box.h));
    return r;
}

inline bool rect_in_bounds(const PixelRect& r, const ImageBuffer& img) {
    return r.x >= 0 && r.y >= 0 && r.w >= 1 && r.h >= 1 && r.x + r.w <= img.width() &&
           r.y + r.h <= img.height();
}

/// One annotated object: a box plus a soft class label over the C
/// foreground classes. Ground-truth instances carry score 1.0.
struct AnnotatedInstance {
    BBox bbox;
    std::vector<double> label;
    double score = 1.0;
};

struct LabeledImage {
    std::string id;
    ImageBuffer pixels;
    std::vector<AnnotatedInstance> instances;
    Domain domain = Domain::Source;
};

}  // namespace cat
