#pragma once

#include <cstdint>
#include <vector>

namespace apexflow {

/// Dense row-major grid of doubles. Used for grayscale intensities and for
/// each component of a flow field.
class Plane {
public:
    Plane() = default;
    Plane(int width, int height, double fill = 0.0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Border-replicating access; coordinates outside the grid clamp to the edge.
    double clamped(int x, int y) const;

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const Plane&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Grayscale frame, intensities in [0, 1].
using GrayImage = Plane;

/// Bilinear sample at a continuous position. Out-of-range positions clamp to
/// the border.
double sample_bilinear(const Plane& plane, double x, double y);

/// Pixel-centre aligned bilinear resampling: output pixel (x, y) samples the
/// source at ((x + 0.5) * sw / dw - 0.5, (y + 0.5) * sh / dh - 0.5).
Plane resize_bilinear(const Plane& plane, int width, int height);

/// Separable Gaussian blur with replicated borders. sigma <= 0 returns a copy.
Plane gaussian_blur(const Plane& plane, double sigma);

/// 8-bit RGB raster, interleaved.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t* pixel(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* pixel(int x, int y) const {
        return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    }
};

}  // namespace apexflow
