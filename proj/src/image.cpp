#include "apexflow/image.hpp"

#include <algorithm>
#include <cmath>

namespace apexflow {

Plane::Plane(int width, int height, double fill)
    : width_(width), height_(height),
      values_(static_cast<std::size_t>(std::max(width, 0)) * static_cast<std::size_t>(std::max(height, 0)), fill) {}

double Plane::clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return at(x, y);
}

double sample_bilinear(const Plane& plane, double x, double y) {
    const int w = plane.width();
    const int h = plane.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * plane.at(x0, y0) + fx * plane.at(x1, y0);
    const double bottom = (1.0 - fx) * plane.at(x0, y1) + fx * plane.at(x1, y1);
    return (1.0 - fy) * top + fy * bottom;
}

Plane resize_bilinear(const Plane& plane, int width, int height) {
    if (width == plane.width() && height == plane.height()) {
        return plane;
    }
    Plane out(width, height);
    const double sx = static_cast<double>(plane.width()) / width;
    const double sy = static_cast<double>(plane.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < width; ++x) {
            out.at(x, y) = sample_bilinear(plane, (x + 0.5) * sx - 0.5, src_y);
        }
    }
    return out;
}

Plane gaussian_blur(const Plane& plane, double sigma) {
    if (sigma <= 0.0 || plane.empty()) {
        return plane;
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += kernel[i + radius];
    }
    for (double& k : kernel) {
        k /= total;
    }

    const int w = plane.width();
    const int h = plane.height();
    Plane tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * plane.clamped(x + i, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * tmp.clamped(x, y + i);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

}  // namespace apexflow
